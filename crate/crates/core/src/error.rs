use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular input gain: |g| = {g:e} is below the floor {floor:e}")]
    SingularInputGain { g: f64, floor: f64 },
    #[error("phase form is singular near w1 = 0 (|w1| = {w1:e} < {floor:e})")]
    NearSingular { w1: f64, floor: f64 },
    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("signal error: {0}")]
    Signal(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("signal is aperiodic: {0}")]
    Aperiodic(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("infeasible accuracy specification: {0}")]
    Infeasible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
