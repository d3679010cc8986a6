use thiserror::Error;

/// Errors raised by tensor construction, graph evaluation and optimisation.
#[derive(Debug, Error, PartialEq)]
pub enum AutogradError {
    #[error("shape {shape:?} does not match data length {len}")]
    ShapeData { shape: Vec<usize>, len: usize },

    #[error("zero-sized dimension in shape {0:?}")]
    ZeroDim(Vec<usize>),

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph has already been consumed by a backward pass")]
    GraphConsumed,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` wrapper so the error enum can stay `PartialEq` for tests.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct IoError(#[from] pub std::io::Error);

impl PartialEq for IoError {
    fn eq(&self, other: &Self) -> bool {
        self.0.kind() == other.0.kind()
    }
}

impl From<std::io::Error> for AutogradError {
    fn from(e: std::io::Error) -> Self {
        AutogradError::Io(IoError(e))
    }
}

pub type Result<T> = std::result::Result<T, AutogradError>;
