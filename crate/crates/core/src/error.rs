use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),

    #[error("filter design failed: {0}")]
    DesignFailure(String),

    #[error("unsupported resampling ratio {from} Hz -> {to} Hz")]
    UnsupportedRatio { from: f64, to: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("power iteration did not converge after {0} iterations")]
    Convergence(usize),

    #[error("input of {len} samples is shorter than kernel length {kernel}")]
    InputTooShort { len: usize, kernel: usize },

    #[error("trace was produced by model revision {trace}, model is at revision {model}")]
    StaleTrace { trace: u64, model: u64 },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("reference signal is all zeros")]
    UndefinedReference,

    #[error("no aligned windows to evaluate")]
    EmptyEvaluation,

    #[error("all pairs tie, test is undefined")]
    UndefinedTest,

    #[error("insufficient data: need {need}, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    #[error("sampling rate mismatch: expected {expected} Hz, found {found} Hz")]
    FsMismatch { expected: f64, found: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
