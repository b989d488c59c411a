use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::RawRecording;
use crate::error::{Error, Result};
use crate::models::ChannelGroup;
use crate::rng::{stream, RngState};
use crate::tensor::Tensor;

/// Parameters of a synthetic multichannel activity recording: each class
/// is a set of per-channel sinusoids with class-specific frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub channels: usize,
    #[serde(default = "one")]
    pub groups: usize,
    pub samples_per_class: usize,
    /// Length of each contiguous single-class span.
    #[serde(default = "default_span")]
    pub span_length: usize,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    /// Standard deviation of additive Gaussian noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// `[K][D]` frequencies in cycles per sample; derived from the class
    /// index when absent.
    #[serde(default)]
    pub frequencies: Option<Vec<Vec<f64>>>,
    /// `[K][D]` amplitudes; derived when absent.
    #[serde(default)]
    pub amplitudes: Option<Vec<Vec<f64>>>,
}

fn one() -> usize {
    1
}
fn default_span() -> usize {
    60
}
fn default_rate() -> f64 {
    30.0
}
fn default_noise() -> f64 {
    0.05
}

impl SynthSpec {
    pub fn new(classes: usize, channels: usize, groups: usize, samples_per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            channels,
            groups,
            samples_per_class,
            span_length: default_span(),
            sample_rate: default_rate(),
            noise: default_noise(),
            seed,
            frequencies: None,
            amplitudes: None,
        }
    }

    pub fn frequency(&self, class: usize, channel: usize) -> f64 {
        match &self.frequencies {
            Some(f) => f[class][channel],
            None => {
                let base = 0.02 + 0.33 * class as f64 / self.classes as f64;
                base * (1.0 + 0.15 * (channel % 3) as f64)
            }
        }
    }

    pub fn amplitude(&self, class: usize, channel: usize) -> f64 {
        match &self.amplitudes {
            Some(a) => a[class][channel],
            None => 0.5 + 0.25 * ((class + channel) % 3) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.classes == 0 {
            return fail("classes must be >= 1".into());
        }
        if self.channels == 0 {
            return fail("channels must be >= 1".into());
        }
        if self.groups == 0 || self.groups > self.channels {
            return fail(format!("groups {} not in [1, {}]", self.groups, self.channels));
        }
        if self.samples_per_class == 0 || self.span_length == 0 {
            return fail("samples per class and span length must be >= 1".into());
        }
        if !(self.noise >= 0.0) || !(self.sample_rate > 0.0) {
            return fail("noise must be >= 0 and sample rate > 0".into());
        }
        for (name, table) in [("frequencies", &self.frequencies), ("amplitudes", &self.amplitudes)] {
            if let Some(t) = table {
                if t.len() != self.classes || t.iter().any(|r| r.len() != self.channels) {
                    return fail(format!("{name} must be a {}x{} table", self.classes, self.channels));
                }
            }
        }
        let tuples: Vec<Vec<u64>> = (0..self.classes)
            .map(|k| (0..self.channels).map(|d| self.frequency(k, d).to_bits()).collect())
            .collect();
        for k in 0..self.classes {
            for d in 0..self.channels {
                let f = self.frequency(k, d);
                if !(f > 0.0 && f < 0.5) {
                    return fail(format!("frequency {f} of class {k} outside (0, 0.5)"));
                }
            }
            if tuples[..k].contains(&tuples[k]) {
                return fail(format!("class {k} repeats another class's frequencies"));
            }
        }
        Ok(())
    }

    /// Contiguous, near-equal channel groups named `imu0`, `imu1`, ….
    pub fn channel_groups(&self) -> Vec<ChannelGroup> {
        let base = self.channels / self.groups;
        let extra = self.channels % self.groups;
        let mut start = 0;
        (0..self.groups)
            .map(|g| {
                let len = base + usize::from(g < extra);
                let group = ChannelGroup {
                    name: format!("imu{g}"),
                    channels: (start..start + len).collect(),
                };
                start += len;
                group
            })
            .collect()
    }
}

/// Generates the recording: spans cycle through the classes until every
/// class has `samples_per_class` samples; each span draws fresh phases.
pub fn synth_generate(spec: &SynthSpec) -> Result<RawRecording> {
    spec.validate()?;
    let mut rng = RngState::with_stream(spec.seed, stream::SYNTH);
    let (k_count, d) = (spec.classes, spec.channels);
    let total = k_count * spec.samples_per_class;
    let mut samples = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut remaining = vec![spec.samples_per_class; k_count];
    while remaining.iter().any(|&r| r > 0) {
        for (k, rem) in remaining.iter_mut().enumerate() {
            let len = (*rem).min(spec.span_length);
            if len == 0 {
                continue;
            }
            *rem -= len;
            let phases: Vec<f64> = (0..d).map(|_| rng.uniform_range(0.0, 2.0 * PI)).collect();
            for t in 0..len {
                for (c, phase) in phases.iter().enumerate() {
                    let clean = spec.amplitude(k, c) * (2.0 * PI * spec.frequency(k, c) * t as f64 + phase).sin();
                    let noise = if spec.noise > 0.0 { spec.noise * rng.normal() } else { 0.0 };
                    samples.push(clean + noise);
                }
                labels.push(k);
            }
        }
    }
    let l = labels.len();
    Ok(RawRecording {
        samples: Tensor::new(vec![l, d], samples)?,
        labels,
        timestamps: (0..l).map(|i| i as f64 / spec.sample_rate).collect(),
        channel_names: (0..d).map(|c| format!("ch{c}")).collect(),
        sample_rate: spec.sample_rate,
        groups: spec.channel_groups(),
    })
}
