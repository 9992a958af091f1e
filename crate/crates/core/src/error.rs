use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),

    #[error("inadmissible state at point {point}: {quantity} = {value:e}")]
    Inadmissible {
        point: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("{stage} aborted at step {step} (t = {time:.6e}): {source}")]
    Aborted {
        stage: &'static str,
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Cubature(String),

    #[error("test mass matrix is singular ({0}); add stabilizing points")]
    SingularTestMass(String),

    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_point(self, point: usize) -> Self {
        match self {
            Error::Inadmissible {
                quantity, value, ..
            } => Error::Inadmissible {
                point,
                quantity,
                value,
            },
            other => other,
        }
    }

    /// True for failures of the numerics (positivity loss, singular systems)
    /// rather than of inputs or the filesystem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerics(_)
            | Error::Inadmissible { .. }
            | Error::Cubature(_)
            | Error::SingularTestMass(_) => true,
            Error::Aborted { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
