//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use attrhar::loss::{bce_logit_grad, bce_loss, sigmoid_scalar};
use attrhar::metrics::{per_class_precision_recall, weighted_f1};
use attrhar::models::{Architecture, ChannelGroup, Network, NetworkConfig};
use attrhar::nn::*;
use attrhar::{RngState, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so gradients that are zero up to
/// roundoff do not blow the ratio up.
pub const REL_FLOOR: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-4;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_tensor(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

/// Max relative error between `analytic` and central differences of `f`
/// with respect to every entry of `x`.
pub fn check_wrt<F>(x: &Tensor, analytic: &Tensor, mut f: F) -> f64
where
    F: FnMut(&Tensor) -> f64,
{
    assert_eq!(x.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(rel_error(analytic.data()[i], numeric));
    }
    worst
}

/// `sum(out * weights)`, a scalar probe whose gradient w.r.t. `out` is `weights`.
pub fn probe(out: &Tensor, weights: &Tensor) -> f64 {
    assert_eq!(out.shape(), weights.shape());
    out.dot(weights)
}

/// The toy network size used by the gradient checks.
pub fn toy_config(arch: Architecture) -> NetworkConfig {
    let mut cfg = NetworkConfig::new(arch, 12, 6, 4);
    cfg.conv_filters = 4;
    cfg.filter_size = 3;
    cfg.hidden_units = 5;
    if arch == Architecture::AttrCnnImu {
        cfg.groups = vec![
            ChannelGroup {
                name: "a".into(),
                channels: vec![0, 1, 2],
            },
            ChannelGroup {
                name: "b".into(),
                channels: vec![3, 4, 5],
            },
        ];
    }
    cfg
}

fn sample_loss(net: &Network, x: &Tensor, target: &[f64], mode: Mode, seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let trace = net.forward_sample(x, mode, &mut rng).unwrap();
    bce_loss(target, trace.scores()).unwrap()
}

/// Max relative error of the analytic parameter and input gradients of a
/// full network's BCE loss. Dropout masks are held fixed by reseeding.
pub fn network_gradient_error(cfg: &NetworkConfig, seed: u64, mode: Mode) -> f64 {
    let mut net = Network::build(cfg, seed).unwrap();
    let mut rng = RngState::new(seed ^ 0xfeed);
    let x = Tensor::new(
        vec![cfg.window, cfg.channels],
        (0..cfg.window * cfg.channels).map(|_| rng.uniform()).collect(),
    )
    .unwrap();
    let target: Vec<f64> = (0..cfg.attributes).map(|i| (i % 2) as f64).collect();
    let dropout_seed = seed + 99;

    let mut r = RngState::new(dropout_seed);
    let (_, grads) = net.loss_and_gradients(&x, &target, mode, &mut r).unwrap();

    let mut worst: f64 = 0.0;
    let count = net.parameters().len();
    for p in 0..count {
        let len = net.parameters()[p].1.len();
        for i in 0..len {
            let orig = net.parameters()[p].1.data()[i];
            net.parameters_mut()[p].data_mut()[i] = orig + FD_STEP;
            let plus = sample_loss(&net, &x, &target, mode, dropout_seed);
            net.parameters_mut()[p].data_mut()[i] = orig - FD_STEP;
            let minus = sample_loss(&net, &x, &target, mode, dropout_seed);
            net.parameters_mut()[p].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(grads.0[p].data()[i], numeric));
        }
    }
    worst
}

/// Worst relative error over input, weight and bias gradients of a
/// temporal conv layer, for each activation.
pub fn conv_gradient_error(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for act in [Activation::Relu, Activation::Identity, Activation::Sigmoid] {
        let x = random_tensor(&[12, 6, 3], &mut rng);
        let p = ConvParams::new(random_tensor(&[3, 1, 3, 4], &mut rng), random_tensor(&[4], &mut rng)).unwrap();
        let out = temporal_conv_forward(&x, &p, act).unwrap();
        let w = random_tensor(out.shape(), &mut rng);
        let g = temporal_conv_backward(&w, &x, &p, act, &out).unwrap();
        worst = worst.max(check_wrt(&x, &g.grad_x, |x| probe(&temporal_conv_forward(x, &p, act).unwrap(), &w)));
        worst = worst.max(check_wrt(&p.weights, &g.grad_w, |k| {
            let q = ConvParams::new(k.clone(), p.bias.clone()).unwrap();
            probe(&temporal_conv_forward(&x, &q, act).unwrap(), &w)
        }));
        worst = worst.max(check_wrt(&p.bias, &g.grad_b, |b| {
            let q = ConvParams::new(p.weights.clone(), b.clone()).unwrap();
            probe(&temporal_conv_forward(&x, &q, act).unwrap(), &w)
        }));
    }
    worst
}

pub fn pool_gradient_error(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for (size, stride) in [(2, 1), (2, 2), (3, 2)] {
        let x = random_tensor(&[11, 4, 3], &mut rng);
        let pooled = max_pool_forward(&x, size, stride).unwrap();
        let w = random_tensor(pooled.output.shape(), &mut rng);
        let g = max_pool_backward(&w, &pooled, x.shape()).unwrap();
        worst = worst.max(check_wrt(&x, &g, |x| probe(&max_pool_forward(x, size, stride).unwrap().output, &w)));
    }
    worst
}

pub fn dense_gradient_error(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for act in [Activation::Relu, Activation::Identity, Activation::Sigmoid] {
        let x = random_tensor(&[9], &mut rng);
        let p = DenseParams::new(random_tensor(&[9, 5], &mut rng), random_tensor(&[5], &mut rng)).unwrap();
        let out = fully_connected_forward(&x, &p, act).unwrap();
        let w = random_tensor(out.shape(), &mut rng);
        let g = fully_connected_backward(&w, &x, &p, act, &out).unwrap();
        worst = worst.max(check_wrt(&x, &g.grad_x, |x| probe(&fully_connected_forward(x, &p, act).unwrap(), &w)));
        worst = worst.max(check_wrt(&p.weights, &g.grad_w, |k| {
            let q = DenseParams::new(k.clone(), p.bias.clone()).unwrap();
            probe(&fully_connected_forward(&x, &q, act).unwrap(), &w)
        }));
        worst = worst.max(check_wrt(&p.bias, &g.grad_b, |b| {
            let q = DenseParams::new(p.weights.clone(), b.clone()).unwrap();
            probe(&fully_connected_forward(&x, &q, act).unwrap(), &w)
        }));
    }
    worst
}

/// Probes every hidden state and the final cell state, so both BPTT inputs
/// are exercised.
pub fn lstm_gradient_error(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let (steps, m, h) = (6, 4, 3);
    let seq = random_tensor(&[steps, m], &mut rng);
    let p = LstmParams::new(
        random_tensor(&[m, 4 * h], &mut rng),
        random_tensor(&[h, 4 * h], &mut rng),
        random_tensor(&[4 * h], &mut rng),
    )
    .unwrap();
    let zero = Tensor::zeros(&[h]);
    let w_hidden = random_tensor(&[steps, h], &mut rng);
    let w_cell = random_tensor(&[h], &mut rng);
    let objective = |seq: &Tensor, p: &LstmParams| {
        let (out, _) = lstm_forward(seq, p, &zero, &zero).unwrap();
        probe(&out.hidden, &w_hidden) + probe(&out.c_last, &w_cell)
    };
    let (_, trace) = lstm_forward(&seq, &p, &zero, &zero).unwrap();
    let g = lstm_backward(&w_hidden, Some(&w_cell), &p, &trace).unwrap();

    let mut worst = check_wrt(&seq, &g.grad_input, |s| objective(s, &p));
    worst = worst.max(check_wrt(&p.input_weights, &g.grad_input_weights, |k| {
        objective(&seq, &LstmParams::new(k.clone(), p.recurrent_weights.clone(), p.bias.clone()).unwrap())
    }));
    worst = worst.max(check_wrt(&p.recurrent_weights, &g.grad_recurrent_weights, |k| {
        objective(&seq, &LstmParams::new(p.input_weights.clone(), k.clone(), p.bias.clone()).unwrap())
    }));
    worst.max(check_wrt(&p.bias, &g.grad_bias, |b| {
        objective(&seq, &LstmParams::new(p.input_weights.clone(), p.recurrent_weights.clone(), b.clone()).unwrap())
    }))
}

/// Sigmoid output followed by mean BCE, differentiated w.r.t. the logits.
pub fn head_gradient_error(seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let logits = random_tensor(&[7], &mut rng).scale(4.0);
        let target: Vec<f64> = (0..7).map(|_| rng.below(2) as f64).collect();
        let loss = |z: &Tensor| {
            let p: Vec<f64> = z.data().iter().map(|&v| sigmoid_scalar(v)).collect();
            bce_loss(&target, &p).unwrap()
        };
        let p: Vec<f64> = logits.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let analytic = Tensor::from_vec(bce_logit_grad(&target, &p));
        worst = worst.max(check_wrt(&logits, &analytic, loss));
    }
    worst
}

fn random_wide(shape: &[usize], rng: &mut RngState) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).unwrap()
}

pub fn at3(t: &Tensor, i: usize, j: usize, k: usize) -> f64 {
    let s = t.shape();
    t.data()[(i * s[1] + j) * s[2] + k]
}

pub fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, relu: bool) -> Vec<f64> {
    let (t_in, d_len, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (f_len, c_out) = (w.shape()[0], w.shape()[3]);
    let mut out = Vec::new();
    for t in 0..=t_in - f_len {
        for d in 0..d_len {
            for co in 0..c_out {
                let mut acc = 0.0;
                for f in 0..f_len {
                    for ci in 0..c_in {
                        acc += w.data()[(f * c_in + ci) * c_out + co] * at3(x, t + f, d, ci);
                    }
                }
                acc += b.data()[co];
                out.push(if relu { acc.max(0.0) } else { acc });
            }
        }
    }
    out
}

pub fn pool_oracle(x: &Tensor, size: usize, stride: usize) -> Vec<f64> {
    let (t_in, d_len, c_len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Vec::new();
    let mut t = 0;
    while t + size <= t_in {
        for d in 0..d_len {
            for c in 0..c_len {
                let m = (t..t + size).map(|u| at3(x, u, d, c)).fold(f64::NEG_INFINITY, f64::max);
                out.push(m);
            }
        }
        t += stride;
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst deviation of conv and pool forwards from the loop oracles over
/// `instances` random shapes.
pub fn conv_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let f = 1 + rng.below(5);
        let t = f + rng.below(10);
        let (d, ci, co) = (1 + rng.below(5), 1 + rng.below(4), 1 + rng.below(4));
        let x = random_wide(&[t, d, ci], &mut rng);
        let w = random_wide(&[f, 1, ci, co], &mut rng);
        let b = random_wide(&[co], &mut rng);
        let p = ConvParams::new(w.clone(), b.clone()).unwrap();
        for (act, relu) in [(Activation::Identity, false), (Activation::Relu, true)] {
            let y = temporal_conv_forward(&x, &p, act).unwrap();
            assert_eq!(y.shape(), &[t - f + 1, d, co]);
            worst = worst.max(max_abs_diff(y.data(), &conv_oracle(&x, &w, &b, relu)));
        }
    }
    worst
}

pub fn pool_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let size = 1 + rng.below(4);
        let stride = 1 + rng.below(3);
        let t = size + rng.below(12);
        let x = random_wide(&[t, 1 + rng.below(4), 1 + rng.below(4)], &mut rng);
        let y = max_pool_forward(&x, size, stride).unwrap();
        assert_eq!(y.output.shape()[0], (t - size) / stride + 1);
        worst = worst.max(max_abs_diff(y.output.data(), &pool_oracle(&x, size, stride)));
    }
    worst
}

pub fn bce_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut rng = RngState::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 1 + rng.below(40);
        let a: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.uniform_range(1e-6, 1.0 - 1e-6)).collect();
        let mut sum = 0.0;
        for i in 0..n {
            sum += a[i] * p[i].ln() + (1.0 - a[i]) * (1.0 - p[i]).ln();
        }
        worst = worst.max((bce_loss(&a, &p).unwrap() - (-sum / n as f64)).abs());
    }
    worst
}

/// Number of random prediction sets (K <= 6, N <= 30) on which precision,
/// recall or weighted F1 disagree with hand counting.
pub fn f1_oracle_mismatches(instances: usize, seed: u64) -> usize {
    let mut rng = RngState::new(seed);
    let mut mismatches = 0;
    for _ in 0..instances {
        let k = 1 + rng.below(6);
        let n = 1 + rng.below(30);
        let truth: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();

        let mut precision = vec![0.0; k];
        let mut recall = vec![0.0; k];
        let mut expected = 0.0;
        for c in 0..k {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for i in 0..n {
                match (pred[i] == c, truth[i] == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            precision[c] = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            recall[c] = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f1 = if precision[c] + recall[c] == 0.0 {
                0.0
            } else {
                2.0 * precision[c] * recall[c] / (precision[c] + recall[c])
            };
            expected += (tp + fn_) as f64 / n as f64 * f1;
        }
        let pr = per_class_precision_recall(&pred, &truth, k).unwrap();
        let f1 = weighted_f1(&pred, &truth, k).unwrap();
        if pr.precision != precision || pr.recall != recall || (f1 - expected).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    mismatches
}
