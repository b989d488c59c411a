//! Learned binary attribute representations for human activity recognition.
//!
//! Networks map a `[T, D]` sensor window to `n` attribute probabilities;
//! classes are decoded by nearest cosine distance to the rows of a binary
//! attribute matrix, and that matrix is searched with a keep-best
//! mutate/train/validate loop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attributes;
pub mod data;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod training;

pub use attributes::{AttributeMatrix, MutationConfig, MutationScope};
pub use error::{Error, Result};
pub use models::{Architecture, Network, NetworkConfig};
pub use rng::RngState;
pub use tensor::Tensor;
