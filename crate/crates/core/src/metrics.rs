//! Weighted F1 and its per-class components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class sample counts taken from the true labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub per_class: Vec<usize>,
    pub total: usize,
}

impl ClassCounts {
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        let mut per_class = vec![0; classes];
        for &l in labels {
            *per_class
                .get_mut(l)
                .ok_or(Error::LabelOutOfRange { label: l, classes })? += 1;
        }
        Ok(Self {
            per_class,
            total: labels.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl PrecisionRecall {
    /// Harmonic mean per class, 0 where precision + recall is 0.
    pub fn f1(&self) -> Vec<f64> {
        self.precision
            .iter()
            .zip(&self.recall)
            .map(|(&p, &r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
            .collect()
    }
}

fn validate(predicted: &[usize], truth: &[usize], classes: usize) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("label list"));
    }
    if let Some(&label) = predicted.iter().chain(truth).find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Precision `TP/(TP+FP)` and recall `TP/(TP+FN)` per class, 0 on empty denominators.
pub fn per_class_precision_recall(predicted: &[usize], truth: &[usize], classes: usize) -> Result<PrecisionRecall> {
    validate(predicted, truth, classes)?;
    let mut tp = vec![0usize; classes];
    let mut pred_count = vec![0usize; classes];
    let mut true_count = vec![0usize; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        pred_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(PrecisionRecall {
        precision: (0..classes).map(|k| ratio(tp[k], pred_count[k])).collect(),
        recall: (0..classes).map(|k| ratio(tp[k], true_count[k])).collect(),
    })
}

/// Class-frequency weighted F1, with weights `n_i / N` counted from `truth`.
pub fn weighted_f1(predicted: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let pr = per_class_precision_recall(predicted, truth, classes)?;
    let counts = ClassCounts::from_labels(truth, classes)?;
    let total = counts.total as f64;
    Ok(pr
        .f1()
        .iter()
        .zip(&counts.per_class)
        .map(|(f1, &n)| n as f64 / total * f1)
        .sum())
}
