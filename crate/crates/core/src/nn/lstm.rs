use serde::{Deserialize, Serialize};

use super::glorot_uniform;
use crate::error::{Error, Result};
use crate::loss::sigmoid_scalar;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// LSTM parameters with the four gate blocks packed along the last axis in
/// the order input, forget, cell, output:
/// `input_weights[M, 4H]`, `recurrent_weights[H, 4H]`, `bias[4H]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_weights: Tensor,
    pub recurrent_weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// Hidden state at every step, `[T, H]`.
    pub hidden: Tensor,
    pub h_last: Tensor,
    pub c_last: Tensor,
}

/// Values kept from the forward pass for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    inputs: Tensor,
    /// Activated gates per step, `[T, 4H]`.
    gates: Vec<f64>,
    /// `c_0 .. c_T`, `[T + 1, H]`.
    cells: Vec<f64>,
    /// `h_0 .. h_T`, `[T + 1, H]`.
    hiddens: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub grad_input: Tensor,
    pub grad_input_weights: Tensor,
    pub grad_recurrent_weights: Tensor,
    pub grad_bias: Tensor,
    pub grad_h0: Tensor,
    pub grad_c0: Tensor,
}

impl LstmParams {
    pub fn new(input_weights: Tensor, recurrent_weights: Tensor, bias: Tensor) -> Result<Self> {
        input_weights.expect_rank(2, "lstm input weights")?;
        let four_h = input_weights.shape()[1];
        if four_h == 0 || !four_h.is_multiple_of(4) {
            return Err(Error::Shape(format!("lstm gate width {four_h} not a positive multiple of 4")));
        }
        let h = four_h / 4;
        recurrent_weights.expect_shape(&[h, four_h], "lstm recurrent weights")?;
        bias.expect_shape(&[four_h], "lstm bias")?;
        Ok(Self {
            input_weights,
            recurrent_weights,
            bias,
        })
    }

    /// Uniform fan-scaled weights, zero bias except the forget gate at 1.
    pub fn init(inputs: usize, hidden: usize, rng: &mut RngState) -> Self {
        let input_weights = glorot_uniform(&[inputs, 4 * hidden], inputs, 4 * hidden, rng);
        let recurrent_weights = glorot_uniform(&[hidden, 4 * hidden], hidden, 4 * hidden, rng);
        let mut bias = Tensor::zeros(&[4 * hidden]);
        for v in &mut bias.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        Self {
            input_weights,
            recurrent_weights,
            bias,
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            input_weights: Tensor::zeros(&[inputs, 4 * hidden]),
            recurrent_weights: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.input_weights.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.shape()[0]
    }
}

/// `acc[j] += Σ_i v[i] · m[i, j]` for a row-major `m` with `cols` columns.
fn accumulate_vec_mat(acc: &mut [f64], v: &[f64], m: &[f64], cols: usize) {
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (a, &w) in acc.iter_mut().zip(&m[i * cols..][..cols]) {
            *a += vi * w;
        }
    }
}

pub fn lstm_forward(seq: &Tensor, p: &LstmParams, h0: &Tensor, c0: &Tensor) -> Result<(LstmOutput, LstmTrace)> {
    seq.expect_rank(2, "lstm input")?;
    let (steps, m) = (seq.shape()[0], seq.shape()[1]);
    let h = p.hidden();
    if steps == 0 {
        return Err(Error::Shape("lstm sequence must have at least one step".into()));
    }
    if m != p.inputs() {
        return Err(Error::Shape(format!("lstm input width {m} != {}", p.inputs())));
    }
    h0.expect_shape(&[h], "lstm h0")?;
    c0.expect_shape(&[h], "lstm c0")?;
    seq.ensure_finite("lstm input")?;

    let four_h = 4 * h;
    let mut gates = vec![0.0; steps * four_h];
    let mut cells = Vec::with_capacity((steps + 1) * h);
    let mut hiddens = Vec::with_capacity((steps + 1) * h);
    cells.extend_from_slice(c0.data());
    hiddens.extend_from_slice(h0.data());

    for t in 0..steps {
        let z = &mut gates[t * four_h..][..four_h];
        z.copy_from_slice(p.bias.data());
        accumulate_vec_mat(z, seq.row(t), p.input_weights.data(), four_h);
        accumulate_vec_mat(z, &hiddens[t * h..][..h], p.recurrent_weights.data(), four_h);
        for k in 0..h {
            z[k] = sigmoid_scalar(z[k]);
            z[h + k] = sigmoid_scalar(z[h + k]);
            z[2 * h + k] = z[2 * h + k].tanh();
            z[3 * h + k] = sigmoid_scalar(z[3 * h + k]);
        }
        for k in 0..h {
            let c = z[h + k] * cells[t * h + k] + z[k] * z[2 * h + k];
            cells.push(c);
        }
        for k in 0..h {
            let hv = z[3 * h + k] * cells[(t + 1) * h + k].tanh();
            hiddens.push(hv);
        }
    }

    let output = LstmOutput {
        hidden: Tensor::new(vec![steps, h], hiddens[h..].to_vec())?,
        h_last: Tensor::from_vec(hiddens[steps * h..].to_vec()),
        c_last: Tensor::from_vec(cells[steps * h..].to_vec()),
    };
    let trace = LstmTrace {
        inputs: seq.clone(),
        gates,
        cells,
        hiddens,
    };
    Ok((output, trace))
}

/// Backpropagation through time. `grad_hidden` is the loss gradient w.r.t.
/// every returned hidden state `[T, H]`; `grad_c_last` optionally adds a
/// gradient on the final cell state.
pub fn lstm_backward(
    grad_hidden: &Tensor,
    grad_c_last: Option<&Tensor>,
    p: &LstmParams,
    trace: &LstmTrace,
) -> Result<LstmGrads> {
    let steps = trace.inputs.shape()[0];
    let m = trace.inputs.shape()[1];
    let h = p.hidden();
    let four_h = 4 * h;
    grad_hidden.expect_shape(&[steps, h], "lstm grad_hidden")?;

    let wx = p.input_weights.data();
    let wh = p.recurrent_weights.data();
    let mut g_wx = vec![0.0; wx.len()];
    let mut g_wh = vec![0.0; wh.len()];
    let mut g_b = vec![0.0; four_h];
    let mut g_in = vec![0.0; steps * m];

    let mut dh_next = vec![0.0; h];
    let mut dc_next = match grad_c_last {
        Some(g) => {
            g.expect_shape(&[h], "lstm grad_c_last")?;
            g.data().to_vec()
        }
        None => vec![0.0; h],
    };
    let mut dz = vec![0.0; four_h];

    for t in (0..steps).rev() {
        let z = &trace.gates[t * four_h..][..four_h];
        let c_prev = &trace.cells[t * h..][..h];
        let c_cur = &trace.cells[(t + 1) * h..][..h];
        let h_prev = &trace.hiddens[t * h..][..h];
        let gh = grad_hidden.row(t);
        for k in 0..h {
            let (i, f, g, o) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
            let dh = gh[k] + dh_next[k];
            let tc = c_cur[k].tanh();
            let d_o = dh * tc;
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * h + k] = dc * i * (1.0 - g * g);
            dz[3 * h + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        for (b, &d) in g_b.iter_mut().zip(&dz) {
            *b += d;
        }
        let x_t = trace.inputs.row(t);
        for (r, &xv) in x_t.iter().enumerate() {
            let row = &wx[r * four_h..][..four_h];
            g_in[t * m + r] = row.iter().zip(&dz).map(|(a, b)| a * b).sum();
            for (gw, &d) in g_wx[r * four_h..][..four_h].iter_mut().zip(&dz) {
                *gw += xv * d;
            }
        }
        for (r, &hv) in h_prev.iter().enumerate() {
            let row = &wh[r * four_h..][..four_h];
            dh_next[r] = row.iter().zip(&dz).map(|(a, b)| a * b).sum();
            for (gw, &d) in g_wh[r * four_h..][..four_h].iter_mut().zip(&dz) {
                *gw += hv * d;
            }
        }
    }

    Ok(LstmGrads {
        grad_input: Tensor::new(vec![steps, m], g_in)?,
        grad_input_weights: Tensor::new(p.input_weights.shape().to_vec(), g_wx)?,
        grad_recurrent_weights: Tensor::new(p.recurrent_weights.shape().to_vec(), g_wh)?,
        grad_bias: Tensor::from_vec(g_b),
        grad_h0: Tensor::from_vec(dh_next),
        grad_c0: Tensor::from_vec(dc_next),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_stay_at_zero() {
        let p = LstmParams::zeros(3, 4);
        let seq = Tensor::from_fn(&[5, 3], |i| i as f64 * 0.3 - 1.0);
        let (out, _) = lstm_forward(&seq, &p, &Tensor::zeros(&[4]), &Tensor::zeros(&[4])).unwrap();
        assert!(out.hidden.data().iter().all(|&v| v == 0.0));
        assert!(out.c_last.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_gate_formulas() {
        let mut rng = RngState::new(5);
        let (m, h) = (2, 1);
        let p = LstmParams::new(
            Tensor::from_fn(&[m, 4 * h], |_| rng.uniform_range(-1.0, 1.0)),
            Tensor::from_fn(&[h, 4 * h], |_| rng.uniform_range(-1.0, 1.0)),
            Tensor::from_fn(&[4 * h], |_| rng.uniform_range(-1.0, 1.0)),
        )
        .unwrap();
        let x = [0.3, -0.7];
        let (h0, c0) = (0.2, -0.4);
        let pre = |gate: usize| {
            p.bias.data()[gate]
                + x[0] * p.input_weights.data()[gate]
                + x[1] * p.input_weights.data()[4 + gate]
                + h0 * p.recurrent_weights.data()[gate]
        };
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (i, f, g, o) = (s(pre(0)), s(pre(1)), pre(2).tanh(), s(pre(3)));
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();

        let (out, _) = lstm_forward(
            &Tensor::new(vec![1, 2], x.to_vec()).unwrap(),
            &p,
            &Tensor::from_vec(vec![h0]),
            &Tensor::from_vec(vec![c0]),
        )
        .unwrap();
        assert!((out.h_last.data()[0] - h1).abs() < 1e-14);
        assert!((out.c_last.data()[0] - c1).abs() < 1e-14);
    }

    #[test]
    fn forget_bias_is_one() {
        let mut rng = RngState::new(0);
        let p = LstmParams::init(3, 2, &mut rng);
        assert_eq!(p.bias.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn width_mismatch_rejected() {
        let p = LstmParams::zeros(3, 2);
        let z = Tensor::zeros(&[2]);
        assert!(lstm_forward(&Tensor::zeros(&[4, 2]), &p, &z, &z).is_err());
        assert!(lstm_forward(&Tensor::zeros(&[0, 3]), &p, &z, &z).is_err());
    }
}
