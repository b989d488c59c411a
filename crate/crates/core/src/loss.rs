//! Output activations and the binary cross-entropy attribute loss.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-12;

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Softmax over a flat vector, shifted by its maximum.
pub fn softmax(x: &Tensor) -> Tensor {
    let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.data().iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::new(x.shape().to_vec(), exps.into_iter().map(|e| e / total).collect()).expect("same shape")
}

/// Mean binary cross-entropy between binary targets and predicted
/// attribute probabilities.
pub fn bce_loss(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "bce: {} targets vs {} predictions",
            target.len(),
            predicted.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::Empty("bce target"));
    }
    if let Some(v) = target.iter().find(|&&a| a != 0.0 && a != 1.0) {
        return Err(Error::InvalidArgument(format!("bce target {v} is not binary")));
    }
    let mut total = 0.0;
    for (&a, &p) in target.iter().zip(predicted) {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        total += a * p.ln() + (1.0 - a) * (1.0 - p).ln();
    }
    Ok(-total / target.len() as f64)
}

/// Gradient of `bce_loss(target, sigmoid(logits))` with respect to the logits.
pub fn bce_logit_grad(target: &[f64], predicted: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    target.iter().zip(predicted).map(|(a, p)| (p - a) / n).collect()
}

/// Attribute pseudo-probabilities for a batch, `scores[B, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    pub scores: Tensor,
    pub classes: Option<Vec<usize>>,
}

impl PredictionBatch {
    pub fn new(scores: Tensor) -> Result<Self> {
        scores.expect_rank(2, "prediction scores")?;
        if scores.shape()[0] == 0 {
            return Err(Error::Empty("prediction batch"));
        }
        if scores.data().iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidArgument("scores must lie strictly in (0, 1)".into()));
        }
        Ok(Self { scores, classes: None })
    }

    pub fn len(&self) -> usize {
        self.scores.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn attributes(&self) -> usize {
        self.scores.shape()[1]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.scores.row(i)
    }
}
