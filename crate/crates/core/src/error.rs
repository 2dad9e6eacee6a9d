use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("energy decay curve never reaches {required_db} dB (minimum {reached_db:.1} dB)")]
    InsufficientDecay { required_db: f64, reached_db: f64 },

    #[error("input signal is silent")]
    SilentInput,

    #[error("input is {actual_s:.3} s long, at least {required_s} s required")]
    ShortInput { actual_s: f64, required_s: f64 },

    #[error("unsupported audio in {path}: {reason}")]
    UnsupportedAudio { path: PathBuf, reason: String },

    #[error("model file error: {0}")]
    Model(String),

    #[error("model version mismatch: file has version {found}, this build reads version {expected}")]
    ModelVersion { found: u32, expected: u32 },

    #[error("band mismatch: {0}")]
    BandMismatch(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("stratum t60={t60} has {count} entries, at least 2 required")]
    Stratification { t60: f64, count: usize },

    #[error("correlation undefined: zero variance")]
    UndefinedCorrelation,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Process exit status for the command-line tool: 3 for model problems,
    /// 1 for a diverged training run, 2 for everything the caller supplied.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Model(_) | Error::ModelVersion { .. } | Error::BandMismatch(_) => 3,
            Error::Diverged { .. } => 1,
            _ => 2,
        }
    }
}
