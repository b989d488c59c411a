use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element multipliers applied by a dropout call, reused in backward.
#[derive(Debug, Clone)]
pub enum DropoutMask {
    Identity,
    Scale(Vec<f64>),
}

impl DropoutMask {
    pub fn backward(&self, grad: &Tensor) -> Tensor {
        match self {
            DropoutMask::Identity => grad.clone(),
            DropoutMask::Scale(m) => {
                let data = grad.data().iter().zip(m).map(|(g, s)| g * s).collect();
                Tensor::new(grad.shape().to_vec(), data).expect("mask matches grad")
            }
        }
    }
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; eval mode is identity.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, rng: &mut RngState) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::Identity));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(v, s)| v * s).collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, DropoutMask::Scale(mask)))
}
