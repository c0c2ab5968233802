use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("amplitude list has zero norm")]
    ZeroNorm,
    #[error("gaussian width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("invalid window [{n_min}, {n_max}]")]
    InvalidWindow { n_min: i64, n_max: i64 },
    #[error("window [{n_min}, {n_max}] misses {missing:.3e} of the gaussian mass (limit 1e-8)")]
    WindowTooSmall { n_min: i64, n_max: i64, missing: f64 },
    #[error("site {n} lies outside window [{n_min}, {n_max}]")]
    SiteOutsideWindow { n: i64, n_min: i64, n_max: i64 },
    #[error("shift {shift} exceeds window length {len}")]
    ShiftTooLarge { shift: i64, len: usize },
    #[error("bloch grid of {grid} points is smaller than the window length {len}")]
    BlochGridTooSmall { grid: usize, len: usize },
    #[error("argument {x} outside the supported range |x| < {limit}")]
    OutOfRange { x: f64, limit: f64 },
    #[error("{what} did not converge within {nodes} nodes")]
    NonConvergent { what: &'static str, nodes: usize },
    #[error("could not bracket zero {k} of J_{n}")]
    BracketFailure { n: u32, k: u32 },
    #[error("invalid drive protocol: {0}")]
    InvalidProtocol(String),
    #[error("protocol is not periodic")]
    Aperiodic,
    #[error("protocol is not resonant (f0/omega = {ratio})")]
    NonResonant { ratio: f64 },
    #[error("leaked probability {leaked:.3e} exceeds tolerance {tolerance:.3e}")]
    WindowLeak { leaked: f64, tolerance: f64 },
    #[error("invalid dispersion: {0}")]
    InvalidDispersion(String),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("invalid oracle configuration: {0}")]
    InvalidOracleConfig(String),
    #[error("step size underflow at t = {t} (dt = {dt:.3e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("monodromy deviates from unitarity by {defect:.3e}")]
    NonUnitary { defect: f64 },
}
