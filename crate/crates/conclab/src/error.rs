use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    Dimension {
        left: usize,
        right: usize,
        context: &'static str,
    },

    #[error("invalid parameter {name}: {message}")]
    Parameter { name: &'static str, message: String },

    #[error("capacity exceeded: {requested} > {cap} ({context})")]
    Capacity {
        requested: u128,
        cap: u128,
        context: &'static str,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            message: message.into(),
        }
    }

    /// Process exit code taxonomy: 2 validation, 3 capacity, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity { .. } => 3,
            Error::Internal(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_same_len(left: usize, right: usize, context: &'static str) -> Result<()> {
    if left != right {
        return Err(Error::Dimension {
            left,
            right,
            context,
        });
    }
    Ok(())
}
