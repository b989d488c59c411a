use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Max-pooling result with the flat input index of each selected maximum.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Max over `size` consecutive time steps, per sensor and channel.
/// `x[T, D, C] -> y[(T - size) / stride + 1, D, C]`; ties pick the earliest step.
pub fn max_pool_forward(x: &Tensor, size: usize, stride: usize) -> Result<Pooled> {
    x.expect_rank(3, "pool input")?;
    if size == 0 || stride == 0 {
        return Err(Error::InvalidArgument("pool size and stride must be >= 1".into()));
    }
    let (t_in, d_len, c_len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if t_in < size {
        return Err(Error::Shape(format!("time length {t_in} shorter than pool size {size}")));
    }
    let t_out = (t_in - size) / stride + 1;
    let plane = d_len * c_len;
    let xs = x.data();
    let mut out = Vec::with_capacity(t_out * plane);
    let mut argmax = Vec::with_capacity(t_out * plane);
    for t in 0..t_out {
        let start = t * stride;
        for j in 0..plane {
            let mut best = start * plane + j;
            for p in 1..size {
                let idx = (start + p) * plane + j;
                if xs[idx] > xs[best] {
                    best = idx;
                }
            }
            out.push(xs[best]);
            argmax.push(best);
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![t_out, d_len, c_len], out)?,
        argmax,
    })
}

/// Routes each output gradient to the input position that won the max.
pub fn max_pool_backward(grad_out: &Tensor, pooled: &Pooled, input_shape: &[usize]) -> Result<Tensor> {
    grad_out.expect_shape(pooled.output.shape(), "pool grad_out")?;
    let mut gx = Tensor::zeros(input_shape);
    let gxs = gx.data_mut();
    for (&idx, &g) in pooled.argmax.iter().zip(grad_out.data()) {
        if idx >= gxs.len() {
            return Err(Error::Shape("pool argmax outside input".into()));
        }
        gxs[idx] += g;
    }
    Ok(gx)
}
