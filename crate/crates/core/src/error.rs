use thiserror::Error;

/// Error taxonomy for the whole library.
///
/// `Validation` and `Io` are caller mistakes (bad dimensions, bad files);
/// everything else is a numeric condition detected while computing. The CLI
/// maps the former to exit code 1 and the latter to exit code 2.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("validation: {0}")]
    Validation(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("solver did not converge: KKT residual {kkt_residual:.3e} after {iterations} sweeps")]
    NonConvergence { kkt_residual: f64, iterations: usize },

    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("line scan stalled after {segments} segments: {detail}")]
    Stall { segments: usize, detail: String },

    #[error("io: {0}")]
    Io(String),
}

impl CoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CoreError::Validation(msg.into())
    }

    pub fn singular(msg: impl Into<String>) -> Self {
        CoreError::Singular(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        CoreError::Degenerate(msg.into())
    }

    pub fn inconsistency(msg: impl Into<String>) -> Self {
        CoreError::Inconsistency(msg.into())
    }

    /// True for errors that indicate a numeric condition rather than bad input.
    pub fn is_numeric(&self) -> bool {
        !matches!(self, CoreError::Validation(_) | CoreError::Io(_))
    }
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

impl From<csv::Error> for CoreError {
    fn from(e: csv::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
