use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the crate can report. Variants map onto process exit codes
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("dimension error: {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("index error: timestep {index} outside 1..={max}")]
    Index { index: usize, max: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("synchronization error: audio at t={audio_t}, video at t={video_t}")]
    Synchronization { audio_t: usize, video_t: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("insufficient data: need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue} (max {max})")]
    NotPsd { eigenvalue: f64, max: f64 },

    #[error("prompt resolution error: no class matches {0:?}")]
    PromptResolution(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric, 5 state.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Configuration(_)
            | Error::PromptResolution(_)
            | Error::Index { .. } => 2,
            Error::Dimension { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::InsufficientData { .. } => 3,
            Error::Numeric(_) | Error::NotPsd { .. } => 4,
            Error::State(_) | Error::Synchronization { .. } => 5,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
