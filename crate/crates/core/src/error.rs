use thiserror::Error;

/// Errors produced anywhere in the simulator stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid anthropometrics: {0}")]
    InvalidAnthropometrics(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("integration diverged: speed {speed:.1} m/s exceeds {limit:.0} m/s")]
    Diverged { speed: f64, limit: f64 },
    #[error("time step {0} s outside (0, 0.05]")]
    InvalidTimeStep(f64),
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid pattern set: {0}")]
    InvalidPatterns(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("delay {0} s outside [0, {1}] s")]
    InvalidDelay(f64, f64),
    #[error("empty episode log")]
    EmptyLog,
    #[error("corrupt log record {index}: {reason}")]
    CorruptLog { index: usize, reason: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
