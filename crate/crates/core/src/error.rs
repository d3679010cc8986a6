use std::path::PathBuf;

use rfdeg_autograd::AutogradError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: no such file", .path.display())]
    NotFound { path: PathBuf },

    #[error("{}: unsupported bit depth {depth} (8-bit images only)", .path.display())]
    UnsupportedDepth { path: PathBuf, depth: u8 },

    #[error("{}: unsupported color type {color} (grayscale or RGB only)", .path.display())]
    UnsupportedColor { path: PathBuf, color: String },

    #[error("{}: corrupt image: {msg}", .path.display())]
    CorruptImage { path: PathBuf, msg: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{op}: dimension mismatch {lhs:?} vs {rhs:?}")]
    DimMismatch {
        op: &'static str,
        lhs: (usize, usize, usize),
        rhs: (usize, usize, usize),
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("spectrum is not conjugate-symmetric (imaginary residual {residual:.3e})")]
    NotSymmetric { residual: f64 },

    #[error("training diverged at step {step}: {msg}")]
    Divergence { step: usize, msg: String },

    #[error("non-finite state at Euler step {step}")]
    NonFiniteState { step: usize },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Config,
            Error::Divergence { .. } | Error::NonFiniteState { .. } | Error::NotSymmetric { .. } => {
                ErrorKind::Numerical
            }
            Error::Autograd(AutogradError::NonFinite { .. } | AutogradError::NonFiniteGradient(_)) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
