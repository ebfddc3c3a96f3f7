use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("non-Hermitian spectrum: imaginary residue {residue:e} exceeds {limit:e}")]
    NonHermitian { residue: f64, limit: f64 },

    #[error("invalid moduli: {0}")]
    InvalidModuli(String),

    #[error("acoustic tensor undefined at zero frequency")]
    ZeroFrequencyAcoustic,

    #[error("use zero-frequency rule: the Green operator is not defined at xi = 0")]
    ZeroFrequencyGreen,

    #[error("invalid hardening curve: {0}")]
    InvalidHardening(String),

    #[error("below initial yield: h^-1 argument {value} < sigma0(0) = {sigma0}")]
    BelowInitialYield { value: f64, sigma0: f64 },

    #[error("invalid microstructure: {0}")]
    InvalidMicrostructure(String),

    #[error("hexagonal cell requires 2:1 pixel grid and T1 = sqrt(3) T2")]
    HexagonalAspect,

    #[error("unattainable volume fraction {requested}: {reason}")]
    UnattainableFraction { requested: f64, reason: String },

    #[error("packing failed after exhausting the retry budget: placed {placed} of {requested} fibers, achieved fraction {achieved:.4}")]
    PackingFailed { placed: usize, requested: usize, achieved: f64 },

    #[error("contrast infinite: scheme does not converge ({0})")]
    InfiniteContrast(String),

    #[error("error metric undefined: zero mean stress")]
    ZeroMeanStress,

    #[error("no convergence after {iterations} iterations (last error {last_error:e})")]
    MaxIterations { iterations: usize, last_error: f64 },

    #[error("iteration diverged at iteration {iteration}: error {error:e} exceeds 10x its minimum {min_error:e}")]
    Diverged { iteration: usize, error: f64, min_error: f64 },

    #[error("degenerate stress direction: c0^-1:S0:S0 = {0:e}")]
    DegenerateDirection(f64),

    #[error("invalid loading program: {0}")]
    InvalidProgram(String),

    #[error("invalid analysis input: {0}")]
    Analysis(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite values at pixels {0:?}")]
    NonFinite(Vec<(usize, usize)>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image error for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
