//! Binary complex neural networks: packed {+-1 +-i} arithmetic, quadrant
//! binarization with straight-through gradients, complex-aware batch
//! normalization, weight initialization, model construction, and a small
//! training harness for image classification.

pub mod bitpack;
pub mod error;
pub mod init;
pub mod layers;
pub mod models;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
