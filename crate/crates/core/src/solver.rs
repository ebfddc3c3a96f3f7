//! Fixed-point iteration on the periodic Lippmann-Schwinger equation, for
//! single elastic solves and incremental elastoplastic loading programs.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{compliance_apply, GreenApplyPlan, IsotropicModuli};
use crate::material::{evaluate_stress_flagged, MaterialLaw, PointState};
use crate::microstructure::PhaseMap;
use crate::spectral::{FrequencyGrid, PackedFft, SpectralField};
use crate::tensor::{field_average, GridSpec, ScalarField, SymTensor, SymTensorField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Convergence threshold on the equilibrium error.
    pub tol: f64,
    pub max_iter: usize,
    /// Replaces the automatic reference medium.
    pub reference: Option<IsotropicModuli>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-4, max_iter: 5000, reference: None }
    }
}

/// Reference medium halfway between the extreme moduli of the phases.
pub fn reference_medium(laws: &[MaterialLaw]) -> Result<IsotropicModuli> {
    if laws.is_empty() {
        return Err(Error::InvalidModuli("no phase to build a reference medium from".into()));
    }
    for law in laws {
        let m = law.elastic;
        if !(m.mu > 0.0 && m.mu.is_finite() && m.lambda.is_finite()) {
            return Err(Error::InfiniteContrast(format!("phase with lambda = {}, mu = {}", m.lambda, m.mu)));
        }
    }
    let span = |f: fn(&MaterialLaw) -> f64| {
        let lo = laws.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = laws.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    IsotropicModuli::new(span(|l| l.elastic.lambda), span(|l| l.elastic.mu))
}

#[inline]
fn divergence_sq(xi: [f64; 2], s: &[Complex64; 4]) -> f64 {
    let r1 = s[0] * xi[0] + s[3] * xi[1];
    let r2 = s[3] * xi[0] + s[1] * xi[1];
    r1.norm_sqr() + r2.norm_sqr()
}

/// Equilibrium error: root mean square of `xi . sigma_hat` over all
/// frequencies, relative to the norm of the mean stress.
pub fn convergence_error(sigma_hat: &SpectralField, freq: &FrequencyGrid) -> Result<f64> {
    let g = *sigma_hat.grid();
    g.check_same(&freq.grid)?;
    let mut sum = 0.0;
    for k1 in 0..g.n1 {
        for k2 in 0..g.n2 {
            sum += divergence_sq(freq.xi(k1, k2), &sigma_hat.get(k1, k2));
        }
    }
    ratio(sum, g.len(), &sigma_hat.get(0, 0).map(|z| z.re))
}

fn ratio(sum: f64, n: usize, mean: &[f64; 4]) -> Result<f64> {
    let norm = SymTensor::from_array(*mean).norm();
    if norm == 0.0 {
        return if sum == 0.0 { Ok(0.0) } else { Err(Error::ZeroMeanStress) };
    }
    Ok((sum / n as f64).sqrt() / norm)
}

/// Macroscopic strain that produces the stress direction `direction` with
/// `E : direction = t`, given the current averages. Returns `(E, k)`.
pub fn macro_strain_update(
    direction: &SymTensor,
    t: f64,
    reference: &IsotropicModuli,
    mean_stress: &SymTensor,
    mean_strain: &SymTensor,
) -> Result<(SymTensor, f64)> {
    let soft = compliance_apply(reference, direction);
    let denom = soft.ddot(direction);
    if !(denom > 1e-300) || !denom.is_finite() {
        return Err(Error::DegenerateDirection(denom));
    }
    let shift = compliance_apply(reference, mean_stress) - *mean_strain;
    let k = (t + shift.ddot(direction)) / denom;
    Ok((soft * k - shift, k))
}

/// Uniaxial stress direction `n (x) n` at `angle_deg` from the first axis.
pub fn uniaxial_direction(angle_deg: f64) -> SymTensor {
    let (s, c) = angle_deg.to_radians().sin_cos();
    SymTensor::new(c * c, s * s, 0.0, c * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainStep {
    pub time: f64,
    pub strain: SymTensor,
}

/// Sequence of macroscopic loads applied step by step from the unloaded state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LoadingProgram {
    /// Prescribed macroscopic strain at increasing times.
    Strain { steps: Vec<StrainStep> },
    /// Mean stress kept along `direction`; `levels` are increasing targets of
    /// `E : direction` and double as the time variable.
    StressDirection { direction: SymTensor, levels: Vec<f64> },
}

impl LoadingProgram {
    /// `steps` equal increments of a fixed macroscopic strain.
    pub fn strain_ramp(target: SymTensor, steps: usize) -> Self {
        let steps = (1..=steps)
            .map(|i| {
                let s = i as f64 / steps as f64;
                StrainStep { time: s, strain: target * s }
            })
            .collect();
        Self::Strain { steps }
    }

    /// Uniaxial stress at `angle_deg`, `steps` equal increments up to `final_level`.
    pub fn uniaxial_stress(angle_deg: f64, final_level: f64, steps: usize) -> Self {
        Self::StressDirection {
            direction: uniaxial_direction(angle_deg),
            levels: (1..=steps).map(|i| final_level * i as f64 / steps as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Strain { steps } => steps.len(),
            Self::StressDirection { levels, .. } => levels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let times: Vec<f64> = match self {
            Self::Strain { steps } => steps.iter().map(|s| s.time).collect(),
            Self::StressDirection { direction, levels } => {
                if !(direction.norm() > 0.0) || !direction.is_finite() {
                    return Err(Error::InvalidProgram("stress direction must be a finite nonzero tensor".into()));
                }
                levels.clone()
            }
        };
        if times.is_empty() {
            return Err(Error::InvalidProgram("no loading step".into()));
        }
        if !(times[0] > 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProgram("step times must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// Target of step `i`.
    pub fn target(&self, i: usize) -> StepTarget {
        match self {
            Self::Strain { steps } => StepTarget::Strain(steps[i]),
            Self::StressDirection { direction, levels } => {
                StepTarget::StressDirection { direction: *direction, level: levels[i] }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepTarget {
    Strain(StrainStep),
    StressDirection { direction: SymTensor, level: f64 },
}

impl StepTarget {
    fn time(&self) -> f64 {
        match self {
            Self::Strain(s) => s.time,
            Self::StressDirection { level, .. } => *level,
        }
    }
}

/// Summary of one converged step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub macro_strain: SymTensor,
    pub macro_stress: SymTensor,
    /// `<sigma> : S0 / S0 : S0` under stress-direction control.
    pub load_factor: Option<f64>,
    pub iterations: usize,
    pub errors: Vec<f64>,
    pub max_plastic_strain: f64,
    /// Pixels whose hardening table was extrapolated.
    pub extrapolated_pixels: usize,
}

/// Local fields at the last converged step and the history of macroscopic response.
#[derive(Clone, Debug)]
pub struct CellState {
    pub time: f64,
    pub strain: SymTensorField,
    pub stress: SymTensorField,
    pub plastic_strain: ScalarField,
    /// Time and strain field of the step before, for extrapolated initial guesses.
    pub previous: Option<(f64, SymTensorField)>,
    pub history: Vec<StepRecord>,
}

impl CellState {
    pub fn unloaded(grid: GridSpec) -> Self {
        Self {
            time: 0.0,
            strain: SymTensorField::zeros(grid),
            stress: SymTensorField::zeros(grid),
            plastic_strain: ScalarField::zeros(grid),
            previous: None,
            history: Vec::new(),
        }
    }

    pub fn macro_strain(&self) -> SymTensor {
        field_average(&self.strain)
    }

    pub fn macro_stress(&self) -> SymTensor {
        field_average(&self.stress)
    }
}

/// Iteration workspace bound to one microstructure and its phase laws.
pub struct CellSolver {
    map: PhaseMap,
    laws: Vec<MaterialLaw>,
    config: SolverConfig,
    plan: GreenApplyPlan,
    fft: PackedFft,
}

impl CellSolver {
    pub fn new(map: &PhaseMap, laws: &[MaterialLaw], config: SolverConfig) -> Result<Self> {
        if laws.len() < map.n_phases() {
            return Err(Error::InvalidMicrostructure(format!(
                "{} phases in the map but {} material laws",
                map.n_phases(),
                laws.len()
            )));
        }
        if !(config.tol > 0.0) || config.max_iter == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        let present = &laws[..map.n_phases()];
        let reference = match config.reference {
            Some(r) => IsotropicModuli::new(r.lambda, r.mu)?,
            None => reference_medium(present)?,
        };
        let grid = *map.grid();
        Ok(Self {
            map: map.clone(),
            laws: present.to_vec(),
            config,
            plan: GreenApplyPlan::new(reference, &grid),
            fft: PackedFft::new(&grid),
        })
    }

    pub fn reference(&self) -> IsotropicModuli {
        self.plan.reference
    }

    pub fn grid(&self) -> &GridSpec {
        self.map.grid()
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn initial_state(&self) -> CellState {
        CellState::unloaded(*self.grid())
    }

    /// Stresses and plastic strains for `strain`, integrated from the converged `base`.
    fn constitutive(
        &self,
        base: &CellState,
        strain: &SymTensorField,
        stress: &mut SymTensorField,
        p: &mut [f64],
    ) -> Result<usize> {
        let mut extrapolated = 0;
        let ids = self.map.ids();
        let (eb, sb, pb) = (base.strain.data(), base.stress.data(), &base.plastic_strain.data);
        for (k, (out, eps)) in stress.data_mut().iter_mut().zip(strain.data()).enumerate() {
            let law = &self.laws[ids[k] as usize];
            let start = PointState { strain: eb[k], stress: sb[k], p: pb[k] };
            let (st, ex) = evaluate_stress_flagged(law, &start, eps)?;
            *out = st.stress;
            p[k] = st.p;
            extrapolated += usize::from(ex);
        }
        Ok(extrapolated)
    }

    fn initial_guess(&self, state: &CellState, target: &StepTarget) -> Result<SymTensorField> {
        let t_next = target.time();
        if let Some((t_prev, prev)) = &state.previous {
            let ratio = (t_next - state.time) / (state.time - t_prev);
            let data = state
                .strain
                .data()
                .iter()
                .zip(prev.data())
                .map(|(&now, &before)| now + (now - before) * ratio)
                .collect();
            return SymTensorField::from_vec(*self.grid(), data);
        }
        let mean = state.macro_strain();
        let next = match target {
            StepTarget::Strain(s) => s.strain,
            StepTarget::StressDirection { direction, level } => {
                macro_strain_update(direction, *level, &self.reference(), &state.macro_stress(), &mean)?.0
            }
        };
        let shift = next - mean;
        Ok(state.strain.map(|e| *e + shift))
    }

    /// Solves one loading step from the converged `state`, which is advanced on success.
    pub fn step(&mut self, state: &mut CellState, target: &StepTarget) -> Result<StepRecord> {
        self.grid().check_same(state.strain.grid())?;
        if !(target.time() > state.time) {
            return Err(Error::InvalidProgram(format!(
                "step time {} does not follow {}",
                target.time(),
                state.time
            )));
        }
        let mut strain = self.initial_guess(state, target)?;
        let mut stress = SymTensorField::zeros(*self.grid());
        let mut p = vec![0.0; self.grid().len()];
        let mut extrapolated = self.constitutive(state, &strain, &mut stress, &mut p)?;

        let n = self.grid().len();
        let tol = self.config.tol;
        let mut errors = Vec::new();
        let mut min_error = f64::INFINITY;
        let mut load_factor = None;
        loop {
            let mean_stress = field_average(&stress);
            let mean_strain = field_average(&strain);
            let next_macro = match target {
                StepTarget::Strain(s) => s.strain,
                StepTarget::StressDirection { direction, level } => {
                    let along = mean_stress.ddot(direction) / direction.ddot(direction);
                    load_factor = Some(along);
                    macro_strain_update(direction, *level, &self.reference(), &mean_stress, &mean_strain)?.0
                }
            };
            let pinned = (next_macro - mean_strain).to_array().map(|v| Complex64::new(v, 0.0));

            self.fft.forward(&stress);
            let mut sum = 0.0;
            let plan = &self.plan;
            self.fft.map_spectrum(|k1, k2, s| {
                if k1 == 0 && k2 == 0 {
                    return pinned;
                }
                sum += divergence_sq(plan.freq.xi(k1, k2), s);
                plan.increment_at(k1, k2, s)
            });
            let error = ratio(sum, n, &mean_stress.to_array())?;
            errors.push(error);
            if !error.is_finite() {
                return Err(Error::Diverged { iteration: errors.len(), error, min_error });
            }

            let aligned = match target {
                StepTarget::Strain(_) => true,
                StepTarget::StressDirection { direction, .. } => {
                    let along = mean_stress.ddot(direction) / direction.ddot(direction);
                    (mean_stress - *direction * along).norm() <= tol * mean_stress.norm()
                }
            };
            if error <= tol && aligned {
                break;
            }
            if error > 10.0 * min_error {
                return Err(Error::Diverged { iteration: errors.len(), error, min_error });
            }
            min_error = min_error.min(error);
            if errors.len() >= self.config.max_iter {
                return Err(Error::MaxIterations { iterations: errors.len(), last_error: error });
            }

            self.fft.inverse_add(&mut strain);
            extrapolated = self.constitutive(state, &strain, &mut stress, &mut p)?;
        }

        let plastic_strain = ScalarField { grid: *self.grid(), data: p };
        let record = StepRecord {
            time: target.time(),
            macro_strain: field_average(&strain),
            macro_stress: field_average(&stress),
            load_factor,
            iterations: errors.len(),
            errors,
            max_plastic_strain: plastic_strain.max(),
            extrapolated_pixels: extrapolated,
        };
        let old_strain = std::mem::replace(&mut state.strain, strain);
        state.previous = Some((state.time, old_strain));
        state.stress = stress;
        state.plastic_strain = plastic_strain;
        state.time = record.time;
        state.history.push(record.clone());
        Ok(record)
    }

    /// Applies every step of `program` to `state`; on error the state holds the last converged step.
    pub fn run_into(&mut self, program: &LoadingProgram, state: &mut CellState) -> Result<()> {
        program.validate()?;
        for i in 0..program.len() {
            self.step(state, &program.target(i))?;
        }
        Ok(())
    }

    pub fn run(&mut self, program: &LoadingProgram) -> Result<CellState> {
        let mut state = self.initial_state();
        self.run_into(program, &mut state)?;
        Ok(state)
    }
}

/// Elastic response to the macroscopic strain `macro_strain`.
pub fn solve_elastic(
    map: &PhaseMap,
    laws: &[MaterialLaw],
    macro_strain: &SymTensor,
    config: &SolverConfig,
) -> Result<CellState> {
    let elastic: Vec<MaterialLaw> = laws.iter().map(|l| MaterialLaw::elastic(l.elastic)).collect();
    let mut solver = CellSolver::new(map, &elastic, config.clone())?;
    let mut state = solver.initial_state();
    solver.step(&mut state, &StepTarget::Strain(StrainStep { time: 1.0, strain: *macro_strain }))?;
    Ok(state)
}

/// Runs a whole loading program from the unloaded state.
pub fn run_program(
    map: &PhaseMap,
    laws: &[MaterialLaw],
    program: &LoadingProgram,
    config: &SolverConfig,
) -> Result<CellState> {
    CellSolver::new(map, laws, config.clone())?.run(program)
}
