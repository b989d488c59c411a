use log::warn;
use serde::{Deserialize, Serialize};

use super::recording::majority;
use super::{NormStats, RawRecording};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How a window's class is chosen from its per-sample labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Labeling {
    #[default]
    Majority,
    Last,
}

/// Fixed-length segments `[B, T, D]` with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub segments: Tensor,
    pub labels: Vec<usize>,
    pub window: usize,
    pub step: usize,
    pub stats: Option<NormStats>,
}

/// Number of windows of length `window` at stride `step` in `len` samples.
pub fn window_count(len: usize, window: usize, step: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / step + 1
    }
}

/// Cuts windows starting at `0, s, 2s, …`.
pub fn sliding_windows(rec: &RawRecording, window: usize, step: usize, labeling: Labeling) -> Result<WindowedDataset> {
    if window == 0 || step == 0 {
        return Err(Error::InvalidArgument("window length and step must be >= 1".into()));
    }
    let d = rec.channels();
    let count = window_count(rec.len(), window, step);
    if count == 0 {
        warn!("recording of {} samples is shorter than window {window}", rec.len());
    }
    let mut data = Vec::with_capacity(count * window * d);
    let mut labels = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * step;
        data.extend_from_slice(&rec.samples.data()[start * d..(start + window) * d]);
        let span = &rec.labels[start..start + window];
        labels.push(match labeling {
            Labeling::Majority => majority(span),
            Labeling::Last => span[window - 1],
        });
    }
    Ok(WindowedDataset {
        segments: Tensor::new(vec![count, window, d], data)?,
        labels,
        window,
        step,
        stats: None,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.segments.shape()[2]
    }

    pub fn sample(&self, i: usize) -> Tensor {
        self.segments.slice0(i)
    }

    /// Appends `other`'s windows after this dataset's.
    pub fn concat(&self, other: &WindowedDataset) -> Result<WindowedDataset> {
        if self.window != other.window || self.channels() != other.channels() {
            return Err(Error::Shape("cannot concatenate datasets of different window shape".into()));
        }
        let mut data = self.segments.data().to_vec();
        data.extend_from_slice(other.segments.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(WindowedDataset {
            segments: Tensor::new(vec![labels.len(), self.window, self.channels()], data)?,
            labels,
            window: self.window,
            step: self.step,
            stats: self.stats.clone(),
        })
    }

    pub fn max_label(&self) -> Option<usize> {
        self.labels.iter().copied().max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(labels: Vec<usize>) -> RawRecording {
        let l = labels.len();
        RawRecording {
            samples: Tensor::from_fn(&[l, 2], |i| i as f64),
            labels,
            timestamps: vec![0.0; l],
            channel_names: vec!["a".into(), "b".into()],
            sample_rate: 30.0,
            groups: vec![],
        }
    }

    #[test]
    fn counts() {
        assert_eq!(sliding_windows(&rec(vec![0; 100]), 24, 12, Labeling::Majority).unwrap().len(), 7);
        for s in [1, 5, 24, 100] {
            assert_eq!(sliding_windows(&rec(vec![0; 24]), 24, s, Labeling::Majority).unwrap().len(), 1);
        }
        assert!(sliding_windows(&rec(vec![0; 10]), 24, 12, Labeling::Majority).unwrap().is_empty());
    }

    #[test]
    fn window_content_and_labels() {
        let r = rec(vec![0, 0, 1, 1, 1, 2]);
        let ds = sliding_windows(&r, 3, 2, Labeling::Majority).unwrap();
        assert_eq!(ds.labels, vec![0, 1]);
        assert_eq!(ds.sample(1).data(), &r.samples.data()[4..10]);
        let last = sliding_windows(&r, 3, 2, Labeling::Last).unwrap();
        assert_eq!(last.labels, vec![1, 1]);
    }
}
