//! Effective properties from overall stress-strain curves, ensemble
//! statistics, bounds and closed-form reference solutions.

use std::path::Path;

use crate::error::{Error, Result};
use crate::green::IsotropicModuli;
use crate::io::write_atomic;
use crate::material::MaterialLaw;
use crate::microstructure::PhaseMap;
use crate::solver::{CellSolver, LoadingProgram, SolverConfig, StepRecord, StepTarget};
use crate::tensor::SymTensor;

/// How a curve was driven.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Loading {
    Strain,
    StressDirection(SymTensor),
}

impl Loading {
    pub fn of(program: &LoadingProgram) -> Self {
        match program {
            LoadingProgram::Strain { .. } => Self::Strain,
            LoadingProgram::StressDirection { direction, .. } => Self::StressDirection(*direction),
        }
    }

    /// The direction of a uniaxial stress `n (x) n`, if this is one.
    pub fn uniaxial(&self) -> Option<SymTensor> {
        match self {
            Self::StressDirection(d) => {
                let det = d.c11 * d.c22 - d.c12 * d.c12;
                let scale = d.norm();
                (d.c33 == 0.0 && det.abs() <= 1e-12 * scale * scale && d.trace() > 0.0).then_some(*d)
            }
            Self::Strain => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub time: f64,
    pub strain: SymTensor,
    pub stress: SymTensor,
    pub max_plastic_strain: f64,
}

/// Overall response, one point per converged step (the unloaded origin excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct OverallCurve {
    pub loading: Loading,
    pub points: Vec<CurvePoint>,
}

impl OverallCurve {
    pub fn from_history(program: &LoadingProgram, history: &[StepRecord]) -> Self {
        let points = history
            .iter()
            .map(|r| CurvePoint {
                time: r.time,
                strain: r.macro_strain,
                stress: r.macro_stress,
                max_plastic_strain: r.max_plastic_strain,
            })
            .collect();
        Self { loading: Loading::of(program), points }
    }

    /// `(strain, stress)` along the loading direction: `(E:S0, <sigma>:S0 / S0:S0)`
    /// under stress-direction control, `(E11, S11)` otherwise.
    pub fn axial(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| match self.loading {
                Loading::StressDirection(d) => (p.strain.ddot(&d), p.stress.ddot(&d) / d.ddot(&d)),
                Loading::Strain => (p.strain.c11, p.stress.c11),
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "E11", "E22", "E33", "E12", "S11", "S22", "S33", "S12"])?;
        for (i, p) in self.points.iter().enumerate() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(p.strain.to_array().iter().chain(&p.stress.to_array()).map(|v| format!("{v:.10e}")));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Secant modulus of the first point of a uniaxial-stress curve.
pub fn young_modulus(curve: &OverallCurve) -> Result<f64> {
    if curve.loading.uniaxial().is_none() {
        return Err(Error::Analysis("Young's modulus needs a uniaxial stress loading".into()));
    }
    let first = curve.points.first().ok_or_else(|| Error::Analysis("empty curve".into()))?;
    if first.max_plastic_strain > 0.0 {
        return Err(Error::Analysis("first loading step is not elastic".into()));
    }
    let (e, s) = curve.axial()[0];
    Ok(s / e)
}

/// Young's modulus along the uniaxial `direction` from one elastic solve
/// of the phases' elastic parts.
pub fn young_modulus_probe(
    map: &PhaseMap,
    laws: &[MaterialLaw],
    direction: &SymTensor,
    config: &SolverConfig,
) -> Result<f64> {
    let elastic: Vec<MaterialLaw> = laws.iter().map(|l| MaterialLaw::elastic(l.elastic)).collect();
    let mut solver = CellSolver::new(map, &elastic, config.clone())?;
    let mut state = solver.initial_state();
    let record = solver.step(&mut state, &StepTarget::StressDirection { direction: *direction, level: 1e-3 })?;
    let curve = OverallCurve { loading: Loading::StressDirection(*direction), points: vec![CurvePoint {
        time: record.time,
        strain: record.macro_strain,
        stress: record.macro_stress,
        max_plastic_strain: 0.0,
    }] };
    young_modulus(&curve)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowStress {
    pub value: f64,
    /// Set when the curve is still rising at its end.
    pub warning: Option<String>,
}

/// Overall stress at the last point; warns when the end slope exceeds 2% of the initial slope.
pub fn flow_stress(curve: &OverallCurve) -> Result<FlowStress> {
    let pts = curve.axial();
    let &(e_last, s_last) = pts.last().ok_or_else(|| Error::Analysis("empty curve".into()))?;
    let warning = match pts.len() {
        1 => Some("single-point curve: plateau not checked".to_string()),
        n => {
            let (e0, s0) = pts[0];
            let (e1, s1) = pts[n - 2];
            let end = (s_last - s1) / (e_last - e1);
            let initial = s0 / e0;
            (end > 0.02 * initial)
                .then(|| format!("curve still rising: end slope {end:.4e} exceeds 2% of initial slope {initial:.4e}"))
        }
    };
    Ok(FlowStress { value: s_last, warning })
}

/// Least-squares slope of the curve over its final 20% of loading.
pub fn hardening_modulus(curve: &OverallCurve) -> Result<f64> {
    let pts = curve.axial();
    let (e_end, _) = *pts.last().ok_or_else(|| Error::Analysis("empty curve".into()))?;
    let tail: Vec<(f64, f64)> = pts.iter().copied().filter(|&(e, _)| e >= 0.8 * e_end).collect();
    if tail.len() < 4 {
        return Err(Error::Analysis(format!("{} points in the final 20% of the curve, need 4", tail.len())));
    }
    let n = tail.len() as f64;
    let me = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let ms = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|&(e, s)| (e - me) * (s - ms)).sum();
    let sxx: f64 = tail.iter().map(|&(e, _)| (e - me) * (e - me)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleStats {
    pub n_samples: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    /// Relative error on the mean, `std_dev / (mean sqrt(n))`.
    pub error_on_mean: f64,
}

pub fn ensemble(values: &[f64]) -> Result<EnsembleStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Analysis(format!("ensemble statistics need at least 2 samples, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_dev = var.sqrt();
    let error_on_mean = if mean == 0.0 { f64::NAN } else { std_dev / (mean.abs() * (n as f64).sqrt()) };
    Ok(EnsembleStats { n_samples: n, mean, std_dev, error_on_mean })
}

/// Per-layer shear strain of a two-phase laminate (layers normal to x1) under shear `e12`.
pub fn laminate_oracle(mu: [f64; 2], fractions: [f64; 2], e12: f64) -> [f64; 2] {
    let s12 = e12 / (fractions[0] / (2.0 * mu[0]) + fractions[1] / (2.0 * mu[1]));
    [s12 / (2.0 * mu[0]), s12 / (2.0 * mu[1])]
}

/// Reuss and Voigt bounds on the transverse Young's modulus from phase moduli and fractions.
pub fn young_bounds(phases: &[(IsotropicModuli, f64)]) -> Result<(f64, f64)> {
    let total: f64 = phases.iter().map(|p| p.1).sum();
    if phases.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Analysis(format!("phase fractions sum to {total}, expected 1")));
    }
    let reuss = 1.0 / phases.iter().map(|(m, f)| f / m.young()).sum::<f64>();
    let lambda = phases.iter().map(|(m, f)| f * m.lambda).sum();
    let mu = phases.iter().map(|(m, f)| f * m.mu).sum();
    Ok((reuss, IsotropicModuli::new(lambda, mu)?.young()))
}

/// Displacement amplitudes of the mode-2 shell solution,
/// `u_r = f(r) sin 2t`, `u_t = g(r) cos 2t`, with
/// `f = lam A r^3 + B r + C / r + D / r^3` and
/// `g = (2 lam + 3 mu) A r^3 + B r + mu / (lam + 2 mu) C / r - D / r^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct ShellRegion {
    moduli: IsotropicModuli,
    coef: [f64; 4],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Radial {
    f: f64,
    g: f64,
    df: f64,
    dg: f64,
}

/// Radial amplitudes of each basis solution at `r`.
fn basis(m: &IsotropicModuli, r: f64) -> [Radial; 4] {
    let (l, mu) = (m.lambda, m.mu);
    let alpha = 2.0 * l + 3.0 * mu;
    let beta = mu / (l + 2.0 * mu);
    [
        Radial { f: l * r.powi(3), g: alpha * r.powi(3), df: 3.0 * l * r * r, dg: 3.0 * alpha * r * r },
        Radial { f: r, g: r, df: 1.0, dg: 1.0 },
        Radial { f: 1.0 / r, g: beta / r, df: -1.0 / (r * r), dg: -beta / (r * r) },
        Radial { f: r.powi(-3), g: -r.powi(-3), df: -3.0 * r.powi(-4), dg: 3.0 * r.powi(-4) },
    ]
}

impl ShellRegion {
    fn radial(&self, r: f64) -> Radial {
        basis(&self.moduli, r).iter().zip(self.coef).fold(Radial::default(), |acc, (b, c)| Radial {
            f: acc.f + c * b.f,
            g: acc.g + c * b.g,
            df: acc.df + c * b.df,
            dg: acc.dg + c * b.dg,
        })
    }
}

/// Polar strain amplitudes `(e_rr, e_tt, e_rt)` from radial amplitudes.
fn polar_strain(q: &Radial, r: f64) -> (f64, f64, f64) {
    (q.df, (q.f - 2.0 * q.g) / r, 0.5 * (2.0 * q.f / r + q.dg - q.g / r))
}

/// Polar traction amplitudes `(s_rr, s_rt)` on a circle of radius `r`.
fn traction(m: &IsotropicModuli, q: &Radial, r: f64) -> (f64, f64) {
    let (err, ett, ert) = polar_strain(q, r);
    ((m.lambda + 2.0 * m.mu) * err + m.lambda * ett, 2.0 * m.mu * ert)
}

/// Plane-strain solution for a fiber of radius `a` in a matrix shell of
/// radius `b` whose outer boundary follows the affine shear `u = E12 (x2, x1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiluteFiberSolution {
    fiber: ShellRegion,
    matrix: ShellRegion,
    a: f64,
    b: f64,
    e12: f64,
}

pub fn dilute_fiber_oracle(
    fiber: IsotropicModuli,
    matrix: IsotropicModuli,
    a: f64,
    b: f64,
    e12: f64,
) -> Result<DiluteFiberSolution> {
    if !(a > 0.0 && b > a) {
        return Err(Error::Analysis(format!("need 0 < a < b, got a = {a}, b = {b}")));
    }
    // Solved on the unit shell; strains are invariant under the scaling r -> r / b.
    let ra = a / b;
    let bf = basis(&fiber, ra);
    let bm = basis(&matrix, ra);
    let bo = basis(&matrix, 1.0);
    // unknowns: fiber (A, B), matrix (A, B, C, D)
    let mut m = [[0.0; 6]; 6];
    let mut rhs = [0.0; 6];
    for k in 0..2 {
        m[0][k] = bf[k].f;
        m[1][k] = bf[k].g;
        let (srr, srt) = traction(&fiber, &bf[k], ra);
        m[2][k] = srr;
        m[3][k] = srt;
    }
    for k in 0..4 {
        m[0][2 + k] = -bm[k].f;
        m[1][2 + k] = -bm[k].g;
        let (srr, srt) = traction(&matrix, &bm[k], ra);
        m[2][2 + k] = -srr;
        m[3][2 + k] = -srt;
        m[4][2 + k] = bo[k].f;
        m[5][2 + k] = bo[k].g;
    }
    rhs[4] = e12;
    rhs[5] = e12;
    let x = solve_dense(m, rhs)?;
    let sol = DiluteFiberSolution {
        fiber: ShellRegion { moduli: fiber, coef: [x[0], x[1], 0.0, 0.0] },
        matrix: ShellRegion { moduli: matrix, coef: [x[2], x[3], x[4], x[5]] },
        a,
        b,
        e12,
    };
    let worst = sol.residuals().iter().fold(0.0f64, |w, r| w.max(r.abs()));
    if !(worst <= 1e-9 * e12.abs().max(f64::MIN_POSITIVE) * (fiber.mu + matrix.mu)) {
        return Err(Error::Singular(format!("shell solution residual {worst:e}")));
    }
    Ok(sol)
}

impl DiluteFiberSolution {
    fn region(&self, rho: f64) -> &ShellRegion {
        if rho < self.a / self.b {
            &self.fiber
        } else {
            &self.matrix
        }
    }

    /// Continuity of displacement and traction at the interface and the
    /// boundary condition at the outer radius, as absolute residuals.
    pub fn residuals(&self) -> [f64; 6] {
        let ra = self.a / self.b;
        let (qf, qm, qo) = (self.fiber.radial(ra), self.matrix.radial(ra), self.matrix.radial(1.0));
        let (tf, tm) = (traction(&self.fiber.moduli, &qf, ra), traction(&self.matrix.moduli, &qm, ra));
        [qf.f - qm.f, qf.g - qm.g, tf.0 - tm.0, tf.1 - tm.1, qo.f - self.e12, qo.g - self.e12]
    }

    /// In-plane strain at `(x1, x2)` relative to the fiber center.
    pub fn strain(&self, x1: f64, x2: f64) -> SymTensor {
        let r = x1.hypot(x2);
        if r == 0.0 {
            // uniform strain inside the fiber near the center: B term only
            return SymTensor::new(0.0, 0.0, 0.0, self.fiber.coef[1]);
        }
        let rho = r / self.b;
        let q = self.region(rho).radial(rho);
        let (err, ett, ert) = polar_strain(&q, rho);
        let t = x2.atan2(x1);
        let (s2, c2) = (2.0 * t).sin_cos();
        let (err, ett, ert) = (err * s2, ett * s2, ert * c2);
        let (s, c) = t.sin_cos();
        SymTensor::new(
            err * c * c + ett * s * s - 2.0 * ert * s * c,
            err * s * s + ett * c * c + 2.0 * ert * s * c,
            0.0,
            (err - ett) * s * c + ert * (c * c - s * s),
        )
    }

    pub fn radii(&self) -> (f64, f64) {
        (self.a, self.b)
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense<const N: usize>(mut m: [[f64; N]; N], mut rhs: [f64; N]) -> Result<[f64; N]> {
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        if m[piv][col] == 0.0 || !m[piv][col].is_finite() {
            return Err(Error::Singular(format!("zero pivot in column {col}")));
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..N {
            let factor = m[row][col] / m[col][col];
            for k in col..N {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}
