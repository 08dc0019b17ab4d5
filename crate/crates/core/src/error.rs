use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MocpError {
    #[error("incompatible objective spaces: dimension {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid objective vector: {0}")]
    InvalidObjective(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective evaluation failed: {0}")]
    Evaluation(String),

    #[error("continuation stalled: {0}")]
    Stalled(String),

    #[error("line search: {0}")]
    LineSearch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("state blow-up at t = {time}")]
    BlowUp { time: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("shooting did not converge after {iterations} iterations (|mu(0)| = {residual:e})")]
    Shooting { iterations: usize, residual: f64 },

    #[error("geometry form failed in term {term}: {reason}")]
    Geometry { term: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MocpError {
    fn from(e: std::io::Error) -> Self {
        MocpError::Io(e.to_string())
    }
}

pub type Result<T, E = MocpError> = std::result::Result<T, E>;
