use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Error)]
pub enum ErgError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite coordinate produced at orbit step {step}")]
    NumericOverflow { step: usize },

    #[error("degenerate cocycle: re-orthogonalization rank loss at step {step}")]
    DegenerateCocycle { step: usize },

    #[error("no singular-value gap at position {index}: ratio {ratio} (splitting ill-defined)")]
    NoGap { index: usize, ratio: f64 },

    #[error("pulled-back node exits the cone field at depth {depth}, node {node}")]
    ConeEscape { depth: usize, node: usize },

    #[error("backward graph-transform step failed at depth {depth}, node {node}: {reason}")]
    StepFailure {
        depth: usize,
        node: usize,
        reason: String,
    },

    #[error("measure is not invariant: push-forward deviates by {deviation}")]
    NonInvariantMeasure { deviation: f64 },

    #[error("malformed {schema} data: {msg}")]
    Format { schema: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ErgError {
    pub fn format(schema: &'static str, msg: impl Into<String>) -> Self {
        ErgError::Format {
            schema,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ErgError>;
