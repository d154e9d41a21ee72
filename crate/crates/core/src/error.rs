use std::path::PathBuf;

/// Errors surfaced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("fixed-point overflow in {0}")]
    Overflow(&'static str),

    #[error("loss model has no analytic oracle")]
    UnsupportedOracle,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("step schedule violates {0}")]
    Schedule(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
