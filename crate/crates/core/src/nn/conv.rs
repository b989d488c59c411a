use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Activation};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Temporal convolution filters: `weights` has shape `[F, 1, C_in, C_out]`
/// and is shared across all sensor channels; `bias` has shape `[C_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub grad_x: Tensor,
    pub grad_w: Tensor,
    pub grad_b: Tensor,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        weights.expect_rank(4, "conv weights")?;
        let s = weights.shape();
        if s[0] == 0 || s[1] != 1 {
            return Err(Error::Shape(format!(
                "conv weights must be [F>=1, 1, C_in, C_out], got {s:?}"
            )));
        }
        bias.expect_shape(&[s[3]], "conv bias")?;
        Ok(Self { weights, bias })
    }

    pub fn init(filter_len: usize, in_channels: usize, out_channels: usize, rng: &mut RngState) -> Self {
        let weights = glorot_uniform(
            &[filter_len, 1, in_channels, out_channels],
            filter_len * in_channels,
            filter_len * out_channels,
            rng,
        );
        Self {
            weights,
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    pub fn filter_len(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[3]
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        x.expect_rank(3, "conv input")?;
        let (t, d, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if c != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv input has {c} channels, filters expect {}",
                self.in_channels()
            )));
        }
        if t < self.filter_len() {
            return Err(Error::Shape(format!(
                "time length {t} shorter than filter length {}",
                self.filter_len()
            )));
        }
        Ok((t, d, c))
    }
}

/// Valid convolution along time, applied to each sensor channel `d` with
/// the same filters: `x[T, D, C_in] -> y[T-F+1, D, C_out]`.
pub fn temporal_conv_forward(x: &Tensor, p: &ConvParams, activation: Activation) -> Result<Tensor> {
    let (t_in, d_len, c_in) = p.check_input(x)?;
    x.ensure_finite("conv input")?;
    let f_len = p.filter_len();
    let c_out = p.out_channels();
    let t_out = t_in - f_len + 1;
    let xs = x.data();
    let w = p.weights.data();
    let b = p.bias.data();

    let mut out = vec![0.0; t_out * d_len * c_out];
    for t in 0..t_out {
        for d in 0..d_len {
            let o = &mut out[(t * d_len + d) * c_out..][..c_out];
            o.copy_from_slice(b);
            for f in 0..f_len {
                let xrow = &xs[((t + f) * d_len + d) * c_in..][..c_in];
                for (c, &xv) in xrow.iter().enumerate() {
                    let wrow = &w[(f * c_in + c) * c_out..][..c_out];
                    for (ov, &wv) in o.iter_mut().zip(wrow) {
                        *ov += wv * xv;
                    }
                }
            }
            for ov in o.iter_mut() {
                *ov = activation.apply(*ov);
            }
        }
    }
    Tensor::new(vec![t_out, d_len, c_out], out)
}

/// Gradients of a scalar loss through [`temporal_conv_forward`]; `output` is
/// the forward result (used for the activation derivative).
pub fn temporal_conv_backward(
    grad_out: &Tensor,
    x: &Tensor,
    p: &ConvParams,
    activation: Activation,
    output: &Tensor,
) -> Result<ConvGrads> {
    let (t_in, d_len, c_in) = p.check_input(x)?;
    let f_len = p.filter_len();
    let c_out = p.out_channels();
    let t_out = t_in - f_len + 1;
    grad_out.expect_shape(&[t_out, d_len, c_out], "conv grad_out")?;
    output.expect_shape(&[t_out, d_len, c_out], "conv output")?;

    let mut g = grad_out.data().to_vec();
    activation.backprop(&mut g, output.data());

    let xs = x.data();
    let w = p.weights.data();
    let mut gx = vec![0.0; xs.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; c_out];

    for t in 0..t_out {
        for d in 0..d_len {
            let grow = &g[(t * d_len + d) * c_out..][..c_out];
            for (acc, &gv) in gb.iter_mut().zip(grow) {
                *acc += gv;
            }
            for f in 0..f_len {
                let base = ((t + f) * d_len + d) * c_in;
                for c in 0..c_in {
                    let widx = (f * c_in + c) * c_out;
                    let wrow = &w[widx..][..c_out];
                    let mut acc = 0.0;
                    for (&wv, &gv) in wrow.iter().zip(grow) {
                        acc += wv * gv;
                    }
                    gx[base + c] += acc;
                    let xv = xs[base + c];
                    for (gwv, &gv) in gw[widx..][..c_out].iter_mut().zip(grow) {
                        *gwv += xv * gv;
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        grad_x: Tensor::new(x.shape().to_vec(), gx)?,
        grad_w: Tensor::new(p.weights.shape().to_vec(), gw)?,
        grad_b: Tensor::from_vec(gb),
    })
}
