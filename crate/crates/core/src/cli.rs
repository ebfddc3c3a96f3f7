//! Command-line front end: `run`, `ensemble` and `gen` driven by a TOML config.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{
    ensemble, flow_stress, hardening_modulus, young_bounds, young_modulus, young_modulus_probe, EnsembleStats,
    FlowStress, OverallCurve,
};
use crate::config::{LoadingConfig, Microstructure, RunConfig};
use crate::error::{Error, Result};
use crate::green::IsotropicModuli;
use crate::io::{export_scalar_map, write_atomic};
use crate::material::{equivalent_strain, MaterialLaw};
use crate::microstructure::{percolates, write_phase_map, PhaseMap};
use crate::solver::{CellSolver, CellState, LoadingProgram};
use crate::tensor::{ScalarField, SymTensorField};

#[derive(Parser, Debug)]
#[command(name = "homog", version, about = "FFT-based homogenization of periodic composites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory, replacing output.dir.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Microstructure seed, replacing the generator seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Concurrent ensemble samples, replacing ensemble.threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// No per-step progress on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one microstructure along the configured loading program.
    Run { config: PathBuf },
    /// Solve independent random microstructures and summarize their properties.
    Ensemble { config: PathBuf },
    /// Generate and write the microstructure only.
    Gen { config: PathBuf },
}

/// 2 for configuration errors, 3 for solver failures, 4 for I/O errors.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidGrid(_)
        | Error::InvalidModuli(_)
        | Error::InvalidHardening(_)
        | Error::InvalidMicrostructure(_)
        | Error::HexagonalAspect
        | Error::UnattainableFraction { .. }
        | Error::PackingFailed { .. }
        | Error::InvalidProgram(_) => 2,
        Error::InfiniteContrast(_)
        | Error::ZeroMeanStress
        | Error::MaxIterations { .. }
        | Error::Diverged { .. }
        | Error::DegenerateDirection(_)
        | Error::BelowInitialYield { .. }
        | Error::NonFinite(_)
        | Error::Singular(_) => 3,
        Error::Io(_) | Error::Image { .. } | Error::Csv(_) => 4,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let path = match &cli.command {
        Command::Run { config } | Command::Ensemble { config } | Command::Gen { config } => config,
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let (Some(t), Some(e)) = (cli.threads, cfg.ensemble.as_mut()) {
        e.threads = t;
    }
    let cfg = cfg.resolved()?;
    match cli.command {
        Command::Run { .. } => run(&cfg, !cli.quiet),
        Command::Ensemble { .. } => run_ensemble(&cfg, !cli.quiet),
        Command::Gen { .. } => generate(&cfg),
    }
}

/// Outcome of a loading program, kept even when a step fails.
pub struct Simulation {
    pub reference: IsotropicModuli,
    pub program: LoadingProgram,
    pub state: CellState,
    pub failure: Option<Error>,
}

impl Simulation {
    pub fn curve(&self) -> OverallCurve {
        OverallCurve::from_history(&self.program, &self.state.history)
    }

    pub fn iterations(&self) -> usize {
        self.state.history.iter().map(|r| r.iterations).sum()
    }
}

pub fn simulate(cfg: &RunConfig, map: &PhaseMap, progress: bool) -> Result<Simulation> {
    let laws = cfg.laws()?;
    let program = cfg.loading.program()?;
    let mut solver = CellSolver::new(map, &laws, cfg.solver.clone())?;
    let mut state = solver.initial_state();
    let mut failure = None;
    for i in 0..program.len() {
        match solver.step(&mut state, &program.target(i)) {
            Ok(r) => {
                if progress {
                    eprintln!(
                        "step {}/{}: {} iterations, error {:.3e}, max p {:.4e}",
                        i + 1,
                        program.len(),
                        r.iterations,
                        r.errors.last().copied().unwrap_or(0.0),
                        r.max_plastic_strain
                    );
                }
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Ok(Simulation { reference: solver.reference(), program, state, failure })
}

/// Effective properties read off a curve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Properties {
    pub young_modulus: Option<f64>,
    pub flow_stress: Option<FlowStress>,
    pub hardening_modulus: Option<f64>,
}

/// Young's modulus for uniaxial loadings (from the first step when it is
/// elastic, otherwise from a separate elastic solve), and the flow stress
/// and end slope when some phase is plastic.
pub fn properties(cfg: &RunConfig, map: &PhaseMap, laws: &[MaterialLaw], curve: &OverallCurve) -> Result<Properties> {
    let mut props = Properties::default();
    if let Some(direction) = curve.loading.uniaxial() {
        props.young_modulus = Some(match young_modulus(curve) {
            Ok(e) => e,
            Err(_) => young_modulus_probe(map, laws, &direction, &cfg.solver)?,
        });
    }
    if laws.iter().any(|l| !l.is_elastic()) && !curve.points.is_empty() {
        props.flow_stress = Some(flow_stress(curve)?);
        props.hardening_modulus = hardening_modulus(curve).ok();
    }
    Ok(props)
}

fn image_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(format!("{name}.{}", cfg.output.format.extension()))
}

fn scalar_map(name: &str, state: &CellState) -> ScalarField {
    let of = |f: &SymTensorField, g: &dyn Fn(&crate::tensor::SymTensor) -> f64| ScalarField {
        grid: *f.grid(),
        data: f.data().iter().map(g).collect(),
    };
    match name {
        "p" => state.plastic_strain.clone(),
        "eps_eq" => of(&state.strain, &equivalent_strain),
        "sigma_eq" => state.stress.von_mises_field(),
        _ => {
            let c = ["11", "22", "33", "12"].iter().position(|c| name.ends_with(c)).expect("validated map name");
            if name.starts_with("eps") {
                state.strain.component(c)
            } else {
                state.stress.component(c)
            }
        }
    }
}

fn write_maps(cfg: &RunConfig, map: &PhaseMap, state: &CellState) -> Result<()> {
    for name in &cfg.output.maps {
        let path = image_path(cfg, name);
        if name == "phase" {
            write_phase_map(map, &path)?;
        } else {
            let scale = cfg.output.scale.get(name).map(|&[lo, hi]| (lo, hi));
            export_scalar_map(&scalar_map(name, state), &path, scale)?;
        }
    }
    Ok(())
}

fn describe_loading(loading: &LoadingConfig) -> String {
    match loading {
        LoadingConfig::Uniaxial { angle_deg, final_strain, steps } => format!(
            "uniaxial stress at {angle_deg} deg, {} steps to axial strain {final_strain}",
            steps.unwrap_or(1)
        ),
        LoadingConfig::StressDirection { direction, final_level, steps } => format!(
            "stress direction {direction:?}, {} steps to E:S0 = {final_level}",
            steps.unwrap_or(1)
        ),
        LoadingConfig::Strain { strain, steps } => format!("strain {strain:?} in {} steps", steps.unwrap_or(1)),
    }
}

fn header(out: &mut String, cfg: &RunConfig, micro: &Microstructure) {
    let g = micro.map.grid();
    let _ = writeln!(out, "grid: {} x {} pixels, cell {} x {}", g.n1, g.n2, g.t1, g.t2);
    let fractions: Vec<String> = micro.map.fractions().iter().map(|f| format!("{f:.6}")).collect();
    let _ = writeln!(out, "phase_fractions: {}", fractions.join(" "));
    if !micro.fibers.is_empty() {
        let _ = writeln!(out, "fibers: {}", micro.fibers.len());
    }
    if let Some(seed) = cfg.seed() {
        let _ = writeln!(out, "seed: {seed}");
    }
}

fn run_report(cfg: &RunConfig, micro: &Microstructure, sim: &Simulation, props: &Properties) -> Result<String> {
    let mut out = String::from("homog run report\n\n");
    header(&mut out, cfg, micro);
    let _ = writeln!(out, "reference_medium: lambda = {}, mu = {}", sim.reference.lambda, sim.reference.mu);
    let _ = writeln!(out, "loading: {}", describe_loading(&cfg.loading));
    match &sim.failure {
        None => {
            let _ = writeln!(out, "status: converged");
        }
        Some(e) => {
            let _ = writeln!(out, "status: failed at step {}: {e}", sim.state.history.len() + 1);
        }
    }
    let _ = writeln!(out, "total_iterations: {}", sim.iterations());

    let _ = writeln!(out, "\neffective properties (MPa)");
    if let Some(e) = props.young_modulus {
        let _ = writeln!(out, "young_modulus: {e:.6}");
    }
    let laws = cfg.laws()?;
    let phases: Vec<(IsotropicModuli, f64)> =
        laws.iter().map(|l| l.elastic).zip(micro.map.fractions()).collect();
    let (reuss, voigt) = young_bounds(&phases)?;
    let _ = writeln!(out, "young_reuss_bound: {reuss:.6}\nyoung_voigt_bound: {voigt:.6}");
    if let Some(f) = &props.flow_stress {
        let _ = writeln!(out, "flow_stress: {:.6}", f.value);
        if let Some(w) = &f.warning {
            let _ = writeln!(out, "flow_stress_warning: {w}");
        }
    }
    if let Some(h) = props.hardening_modulus {
        let _ = writeln!(out, "hardening_modulus: {h:.6}");
    }

    let _ = writeln!(out, "\nconvergence history");
    let _ = writeln!(out, "step time iterations final_error max_plastic_strain extrapolated_pixels");
    for (i, r) in sim.state.history.iter().enumerate() {
        let _ = writeln!(
            out,
            "{} {:.6e} {} {:.3e} {:.6e} {}",
            i + 1,
            r.time,
            r.iterations,
            r.errors.last().copied().unwrap_or(0.0),
            r.max_plastic_strain,
            r.extrapolated_pixels
        );
    }
    if sim.state.history.iter().any(|r| r.extrapolated_pixels > 0) {
        let _ = writeln!(out, "warning: hardening table extrapolated beyond its last point");
    }
    Ok(out)
}

fn convergence_csv(sim: &Simulation) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "iteration", "error"])?;
    for (i, r) in sim.state.history.iter().enumerate() {
        for (k, e) in r.errors.iter().enumerate() {
            w.write_record([(i + 1).to_string(), (k + 1).to_string(), format!("{e:.6e}")])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output.dir)?;
    write_atomic(&cfg.output.dir.join("config.toml"), cfg.to_toml()?.as_bytes())
}

/// Runs one configured simulation and writes its artifacts. A solver failure
/// still writes the partial curve and the report before returning the error.
pub fn run(cfg: &RunConfig, progress: bool) -> Result<()> {
    let micro = cfg.microstructure()?;
    prepare_output(cfg)?;
    let sim = simulate(cfg, &micro.map, progress)?;
    let curve = sim.curve();
    curve.write_csv(&cfg.output.dir.join("curve.csv"))?;
    write_atomic(&cfg.output.dir.join("convergence.csv"), &convergence_csv(&sim)?)?;
    let laws = cfg.laws()?;
    let props = if sim.failure.is_none() { properties(cfg, &micro.map, &laws, &curve)? } else { Properties::default() };
    write_atomic(&cfg.output.dir.join("report.txt"), run_report(cfg, &micro, &sim, &props)?.as_bytes())?;
    if let Some(e) = sim.failure {
        return Err(e);
    }
    write_maps(cfg, &micro.map, &sim.state)
}

/// Writes the microstructure image, its fibers and a short summary.
pub fn generate(cfg: &RunConfig) -> Result<()> {
    let micro = cfg.microstructure()?;
    prepare_output(cfg)?;
    write_phase_map(&micro.map, &image_path(cfg, "phase"))?;
    let mut out = String::from("homog microstructure\n\n");
    header(&mut out, cfg, &micro);
    for phase in 1..micro.map.n_phases() {
        let _ = writeln!(out, "phase_{phase}_percolates: {}", percolates(&micro.map, phase as u8));
    }
    write_atomic(&cfg.output.dir.join("microstructure.txt"), out.as_bytes())?;
    if !micro.fibers.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x1", "x2", "angle", "area"])?;
        for f in &micro.fibers {
            w.write_record([f.center.0, f.center.1, f.angle, f.area].map(|v| format!("{v:.10e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        write_atomic(&cfg.output.dir.join("fibers.csv"), &bytes)?;
    }
    Ok(())
}

/// Result of one ensemble member.
pub struct Sample {
    pub seed: u64,
    pub fraction: Option<f64>,
    pub iterations: usize,
    pub outcome: Result<Properties>,
}

pub fn run_sample(cfg: &RunConfig, seed: u64) -> Sample {
    let mut cfg = cfg.clone();
    cfg.set_seed(seed);
    let mut sample = Sample { seed, fraction: None, iterations: 0, outcome: Ok(Properties::default()) };
    let outcome = (|| {
        let micro = cfg.microstructure()?;
        sample.fraction = micro.map.fractions().get(1).copied();
        let sim = simulate(&cfg, &micro.map, false)?;
        sample.iterations = sim.iterations();
        if let Some(e) = sim.failure {
            return Err(e);
        }
        properties(&cfg, &micro.map, &cfg.laws()?, &sim.curve())
    })();
    sample.outcome = outcome;
    sample
}

/// Statistics of each property over the successful samples that report it.
pub fn sample_stats(samples: &[Sample]) -> Vec<(&'static str, EnsembleStats)> {
    let pick: [(&'static str, fn(&Properties) -> Option<f64>); 3] = [
        ("young_modulus", |p| p.young_modulus),
        ("flow_stress", |p| p.flow_stress.as_ref().map(|f| f.value)),
        ("hardening_modulus", |p| p.hardening_modulus),
    ];
    pick.iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = samples.iter().filter_map(|s| s.outcome.as_ref().ok().and_then(get)).collect();
            ensemble(&values).ok().map(|s| (*name, s))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.10e}")).unwrap_or_default()
}

/// Runs every ensemble sample, writes per-sample results and statistics, and
/// fails with the first sample error if any sample failed.
pub fn run_ensemble(cfg: &RunConfig, progress: bool) -> Result<()> {
    let ens = cfg.ensemble.as_ref().ok_or_else(|| Error::Config("missing [ensemble] section".into()))?;
    let Some(base) = cfg.seed() else {
        return Err(Error::Config("ensemble needs the random generator".into()));
    };
    prepare_output(cfg)?;
    let seeds = ens.seeds(base);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ens.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let samples: Vec<Sample> = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| {
                let s = run_sample(cfg, seed);
                if progress {
                    let status = s.outcome.as_ref().map(|_| "ok".to_string()).unwrap_or_else(|e| e.to_string());
                    eprintln!("sample {} (seed {seed}): {status}", i + 1);
                }
                s
            })
            .collect()
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sample",
        "seed",
        "status",
        "fiber_fraction",
        "iterations",
        "young_modulus",
        "flow_stress",
        "hardening_modulus",
        "message",
    ])?;
    for (i, s) in samples.iter().enumerate() {
        let (status, props, message) = match &s.outcome {
            Ok(p) => ("ok", p.clone(), String::new()),
            Err(e) => ("failed", Properties::default(), e.to_string()),
        };
        w.write_record([
            (i + 1).to_string(),
            s.seed.to_string(),
            status.to_string(),
            opt(s.fraction),
            s.iterations.to_string(),
            opt(props.young_modulus),
            opt(props.flow_stress.map(|f| f.value)),
            opt(props.hardening_modulus),
            message,
        ])?;
    }
    write_atomic(&cfg.output.dir.join("samples.csv"), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let stats = sample_stats(&samples);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "n", "mean", "std_dev", "error_on_mean"])?;
    for (name, s) in &stats {
        w.write_record([
            name.to_string(),
            s.n_samples.to_string(),
            format!("{:.10e}", s.mean),
            format!("{:.10e}", s.std_dev),
            format!("{:.10e}", s.error_on_mean),
        ])?;
    }
    write_atomic(&cfg.output.dir.join("stats.csv"), &w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;

    let failed = samples.iter().filter(|s| s.outcome.is_err()).count();
    let mut out = String::from("homog ensemble report\n\n");
    let _ = writeln!(out, "loading: {}", describe_loading(&cfg.loading));
    let _ = writeln!(out, "samples: {}\nfailed: {failed}", samples.len());
    for (name, s) in &stats {
        let _ = writeln!(
            out,
            "{name}: mean {:.6} std_dev {:.6} error_on_mean {:.4e} (n = {})",
            s.mean, s.std_dev, s.error_on_mean, s.n_samples
        );
    }
    write_atomic(&cfg.output.dir.join("report.txt"), out.as_bytes())?;

    match samples.into_iter().find_map(|s| s.outcome.err()) {
        Some(e) => {
            eprintln!("{failed} sample(s) failed");
            Err(e)
        }
        None => Ok(()),
    }
}

/// Parses `key: value` lines of a report.
pub fn report_value(report: &str, key: &str) -> Option<f64> {
    report.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix(':')?.trim().parse().ok())
}
