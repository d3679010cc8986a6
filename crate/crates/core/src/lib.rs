//! Degradation modeling toolkit: image I/O, resampling, Fourier analysis,
//! metrics, and the FGDM/RFDM learned degradation modules.

pub mod corpus;
pub mod error;
pub mod fgdm;
pub mod fourier;
pub mod imgio;
pub mod metrics;
pub mod nn;
pub mod resample;
pub mod rfdm;

pub use error::{Error, ErrorKind, Result};
pub use imgio::ImageF;
