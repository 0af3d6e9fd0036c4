use thiserror::Error;

use crate::amp::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context}{}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    NonFinite {
        context: &'static str,
        index: Option<usize>,
    },

    /// A trial produced a non-finite iterate. The records computed before the
    /// failure are attached.
    #[error("iteration diverged at t = {iteration}")]
    Diverged {
        iteration: usize,
        partial: Box<Trajectory>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::ShapeMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn non_finite(context: &'static str, index: Option<usize>) -> Self {
        Error::NonFinite { context, index }
    }
}
