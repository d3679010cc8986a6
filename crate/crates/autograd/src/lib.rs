//! Minimal deterministic tensor library: eager NCHW operations recorded on a
//! single-use tape, reverse-mode gradients, Adam, counter-based random
//! streams and a flat binary checkpoint container.

mod adam;
pub mod checkpoint;
mod conv;
mod element;
mod error;
mod graph;
mod params;
pub mod rng;
mod tensor;

pub use adam::AdamState;
pub use element::Element;
pub use error::{AutogradError, IoError, Result};
pub use graph::{CustomOp, Graph, Var};
pub use params::ParamSet;
pub use rng::{derive_seed, randn, RngStream};
pub use tensor::Tensor;

/// Default leaky-ReLU slope used by every network in the workspace.
pub const LEAKY_SLOPE: f64 = 0.2;
