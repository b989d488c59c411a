use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Activation};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Fully-connected layer parameters: `weights[M, U]`, `bias[U]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Tensor,
}

impl DenseParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        weights.expect_rank(2, "dense weights")?;
        bias.expect_shape(&[weights.shape()[1]], "dense bias")?;
        Ok(Self { weights, bias })
    }

    pub fn init(inputs: usize, units: usize, rng: &mut RngState) -> Self {
        Self {
            weights: glorot_uniform(&[inputs, units], inputs, units, rng),
            bias: Tensor::zeros(&[units]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[1]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "dense input width {} != {}",
                x.len(),
                self.inputs()
            )));
        }
        Ok(())
    }
}

/// `σ(x W + b)` for a flat input of width `M`.
pub fn fully_connected_forward(x: &Tensor, p: &DenseParams, activation: Activation) -> Result<Tensor> {
    p.check_input(x)?;
    x.ensure_finite("dense input")?;
    let units = p.units();
    let w = p.weights.data();
    let mut out = p.bias.data().to_vec();
    for (i, &xv) in x.data().iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[i * units..][..units]) {
            *o += xv * wv;
        }
    }
    for o in out.iter_mut() {
        *o = activation.apply(*o);
    }
    Ok(Tensor::from_vec(out))
}

pub fn fully_connected_backward(
    grad_out: &Tensor,
    x: &Tensor,
    p: &DenseParams,
    activation: Activation,
    output: &Tensor,
) -> Result<DenseGrads> {
    p.check_input(x)?;
    let units = p.units();
    if grad_out.len() != units || output.len() != units {
        return Err(Error::Shape("dense grad_out width".into()));
    }
    let mut g = grad_out.data().to_vec();
    activation.backprop(&mut g, output.data());

    let w = p.weights.data();
    let mut gw = vec![0.0; w.len()];
    let mut gx = vec![0.0; x.len()];
    for (i, &xv) in x.data().iter().enumerate() {
        let wrow = &w[i * units..][..units];
        gx[i] = wrow.iter().zip(&g).map(|(a, b)| a * b).sum();
        for (gwv, &gv) in gw[i * units..][..units].iter_mut().zip(&g) {
            *gwv = xv * gv;
        }
    }
    Ok(DenseGrads {
        grad_x: Tensor::new(x.shape().to_vec(), gx)?,
        grad_w: Tensor::new(p.weights.shape().to_vec(), gw)?,
        grad_b: Tensor::from_vec(g),
    })
}
