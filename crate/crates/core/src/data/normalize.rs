use serde::{Deserialize, Serialize};

use super::RawRecording;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Per-channel min/max taken from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn from_samples(samples: &Tensor) -> Result<Self> {
        samples.expect_rank(2, "samples")?;
        let (rows, d) = (samples.shape()[0], samples.shape()[1]);
        if rows == 0 {
            return Err(Error::Empty("normalization input"));
        }
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in 0..rows {
            for (c, &v) in samples.row(r).iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)` clamped to `[0, 1]`; constant channels map to 0.
    pub fn apply(&self, v: f64, channel: usize) -> f64 {
        let range = self.max[channel] - self.min[channel];
        if range > 0.0 {
            ((v - self.min[channel]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Scales every channel to `[0, 1]`. Without `stats` the statistics are
/// computed from `rec` (training split); with `stats` they are reused and
/// out-of-range values are clamped.
pub fn normalize_per_channel(rec: &RawRecording, stats: Option<&NormStats>) -> Result<(RawRecording, NormStats)> {
    let stats = match stats {
        Some(s) => {
            if s.channels() != rec.channels() {
                return Err(Error::Shape(format!(
                    "normalization stats for {} channels, recording has {}",
                    s.channels(),
                    rec.channels()
                )));
            }
            s.clone()
        }
        None => NormStats::from_samples(&rec.samples)?,
    };
    let d = rec.channels();
    let data = rec
        .samples
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| stats.apply(v, i % d))
        .collect();
    let mut out = rec.clone();
    out.samples = Tensor::new(rec.samples.shape().to_vec(), data)?;
    Ok((out, stats))
}

/// Adds i.i.d. `N(mu, sigma²)` noise to every element.
pub fn add_gaussian_noise(segments: &Tensor, mu: f64, sigma: f64, rng: &mut RngState) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 && mu == 0.0 {
        return Ok(segments.clone());
    }
    let data = segments.data().iter().map(|v| v + mu + sigma * rng.normal()).collect();
    Tensor::new(segments.shape().to_vec(), data)
}
