//! From-scratch separable-convolution autoencoder classifier.
//!
//! Everything is implemented directly over flat row-major tensors: the layer
//! primitives with hand-written gradients, the encoder/decoder architecture
//! with sigmoid channel gating and dual-receptive-field GAP fusion, SGD
//! training with checkpointing, the evaluation metric suite, parameter/FLOP
//! accounting, and Grad-CAM heatmaps. The crate has no external dependencies;
//! f32 is used for training and inference, f64 for gradient-check builds.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use parallel::Exec;
pub use rng::Rng;
pub use scalar::{Dtype, Scalar};
pub use tensor::{channel_scale, concat_channels, split_channels, Tensor};
