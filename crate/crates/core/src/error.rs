use thiserror::Error;

use crate::sidecar::SidecarError;
use crate::weights::WeightsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },
    #[error("{op}: empty tensor")]
    Empty { op: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("recurrent state is not initialised: {0}")]
    UninitializedState(&'static str),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(op: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
