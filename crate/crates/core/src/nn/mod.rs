//! Layer kernels: forward and backward passes for every layer the three
//! attribute networks use. All kernels operate on a single sample; batching
//! is done by the caller.

mod conv;
mod dense;
mod dropout;
mod lstm;
mod pool;

pub use conv::{temporal_conv_backward, temporal_conv_forward, ConvGrads, ConvParams};
pub use dense::{fully_connected_backward, fully_connected_forward, DenseGrads, DenseParams};
pub use dropout::{dropout, DropoutMask, Mode};
pub use lstm::{lstm_backward, lstm_forward, LstmGrads, LstmOutput, LstmParams, LstmTrace};
pub use pool::{max_pool_backward, max_pool_forward, Pooled};

use serde::{Deserialize, Serialize};

use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => crate::loss::sigmoid_scalar(v),
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
        }
    }

    /// Multiplies `grad` in place by the activation derivative at `out`.
    pub(crate) fn backprop(self, grad: &mut [f64], out: &[f64]) {
        if self == Activation::Identity {
            return;
        }
        for (g, &o) in grad.iter_mut().zip(out) {
            *g *= self.derivative_from_output(o);
        }
    }
}

/// Glorot-style uniform initialization in `[-l, l]`, `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngState) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.uniform_range(-limit, limit))
}
