use thiserror::Error;

/// Errors produced by graph construction, chain analysis and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph construction failed after {attempts} attempts: {reason}")]
    ConstructionFailure { attempts: u32, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An iterative procedure hit its iteration cap. `last` holds the final
    /// iterate when one exists (power iteration), and is empty otherwise.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("normal matrix is rank deficient (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("model diverged at iteration {iteration}")]
    Divergence { iteration: u64 },

    #[error("walk count overflow at hop {hop} from node {source_node}")]
    CountOverflow { source_node: usize, hop: usize },

    #[error("empty trace")]
    EmptyTrace,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: msg.into(),
    }
}
