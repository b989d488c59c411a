//! Mini-batch RMSProp training on attribute targets and evaluation by
//! nearest-attribute decoding.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::attributes::AttributeMatrix;
use crate::data::{add_gaussian_noise, WindowedDataset};
use crate::error::{Error, Result};
use crate::loss::bce_loss;
use crate::metrics::{per_class_precision_recall, weighted_f1};
use crate::models::{Architecture, Gradients, Network};
use crate::nn::Mode;
use crate::rng::{stream, RngState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::rms_decay")]
    pub rms_decay: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Use the whole training set as one batch.
    #[serde(default)]
    pub full_batch: bool,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::shuffle")]
    pub shuffle: bool,
    /// Standard deviation of the Gaussian noise added to training inputs.
    #[serde(default = "defaults::noise_sigma")]
    pub noise_sigma: f64,
}

mod defaults {
    pub fn learning_rate() -> f64 {
        1e-4
    }
    pub fn rms_decay() -> f64 {
        0.9
    }
    pub fn epsilon() -> f64 {
        1e-8
    }
    pub fn batch_size() -> usize {
        100
    }
    pub fn epochs() -> usize {
        10
    }
    pub fn shuffle() -> bool {
        true
    }
    pub fn noise_sigma() -> f64 {
        0.01
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: defaults::learning_rate(),
            rms_decay: defaults::rms_decay(),
            epsilon: defaults::epsilon(),
            batch_size: defaults::batch_size(),
            full_batch: false,
            epochs: defaults::epochs(),
            seed: 0,
            shuffle: defaults::shuffle(),
            noise_sigma: defaults::noise_sigma(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return fail("learning rate must be > 0");
        }
        if !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return fail("RMS decay must be in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("RMSProp epsilon must be > 0");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch size and epochs must be >= 1");
        }
        if !(self.noise_sigma >= 0.0) {
            return fail("noise sigma must be >= 0");
        }
        Ok(())
    }
}

/// Running mean of squared gradients, one tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub cache: Vec<Tensor>,
    pub epsilon: f64,
}

impl RmspropState {
    pub fn new(params: &[&Tensor], epsilon: f64) -> Self {
        Self {
            cache: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            epsilon,
        }
    }

    pub fn for_network(net: &Network, epsilon: f64) -> Self {
        let params: Vec<&Tensor> = net.parameters().into_iter().map(|(_, t)| t).collect();
        Self::new(&params, epsilon)
    }
}

/// `cache = decay·cache + (1-decay)·g²; p -= lr·g / (sqrt(cache) + eps)`.
pub fn rmsprop_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut RmspropState, learning_rate: f64, decay: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.cache.len() {
        return Err(Error::Shape(format!(
            "rmsprop: {} params, {} grads, {} cache entries",
            params.len(),
            grads.len(),
            state.cache.len()
        )));
    }
    for ((p, g), c) in params.iter().zip(grads).zip(&state.cache) {
        if p.shape() != g.shape() || p.shape() != c.shape() {
            return Err(Error::Shape(format!("rmsprop: {:?} vs {:?}", p.shape(), g.shape())));
        }
        g.ensure_finite("gradient")?;
    }
    for ((p, g), c) in params.iter_mut().zip(grads).zip(state.cache.iter_mut()) {
        for ((pv, &gv), cv) in p.data_mut().iter_mut().zip(g.data()).zip(c.data_mut()) {
            *cv = decay * *cv + (1.0 - decay) * gv * gv;
            *pv -= learning_rate * gv / (cv.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample BCE of each epoch.
    pub loss_curve: Vec<f64>,
    pub optimizer_steps: usize,
}

impl TrainReport {
    pub fn write_loss_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut text = String::from("epoch,mean_bce\n");
        for (e, l) in self.loss_curve.iter().enumerate() {
            text.push_str(&format!("{},{}\n", e + 1, l));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn check_labels(dataset: &WindowedDataset, attributes: &AttributeMatrix) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if let Some(&label) = dataset.labels.iter().find(|&&l| l >= attributes.classes()) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: attributes.classes(),
        });
    }
    Ok(())
}

/// Trains `net` in place for a fixed number of epochs.
pub fn train(net: &mut Network, dataset: &WindowedDataset, attributes: &AttributeMatrix, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_labels(dataset, attributes)?;
    if attributes.attributes() != net.attributes() {
        return Err(Error::Config(format!(
            "network predicts {} attributes, matrix has {}",
            net.attributes(),
            attributes.attributes()
        )));
    }
    let targets = attributes.targets_for_batch(&dataset.labels)?;
    let batch_size = if cfg.full_batch { dataset.len() } else { cfg.batch_size };
    let mut state = RmspropState::for_network(net, cfg.epsilon);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = RngState::with_stream(cfg.seed, stream::TRAIN);
    let mut report = TrainReport {
        loss_curve: Vec::with_capacity(cfg.epochs),
        optimizer_steps: 0,
    };

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(batch_size).enumerate() {
            let samples = batch
                .iter()
                .map(|&i| {
                    let x = dataset.sample(i);
                    let mut noise_rng = RngState::derive(cfg.seed, stream::NOISE, &[epoch as u64, i as u64]);
                    add_gaussian_noise(&x, 0.0, cfg.noise_sigma, &mut noise_rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let batch_targets: Vec<Vec<f64>> = batch.iter().map(|&i| targets.row(i).to_vec()).collect();
            let (loss, mut grads) = net.batch_loss_and_gradients(&samples, &batch_targets, Mode::Train, |j| {
                RngState::derive(cfg.seed, stream::DROPOUT, &[epoch as u64, step as u64, j as u64])
            })?;
            grads.scale(1.0 / batch.len() as f64);
            apply_update(net, &grads, &mut state, cfg)?;
            report.optimizer_steps += 1;
            epoch_loss += loss;
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        debug!("epoch {} mean bce {mean:.6}", epoch + 1);
        report.loss_curve.push(mean);
    }
    Ok(report)
}

fn apply_update(net: &mut Network, grads: &Gradients, state: &mut RmspropState, cfg: &TrainConfig) -> Result<()> {
    let mut params = net.parameters_mut();
    rmsprop_step(&mut params, &grads.0, state, cfg.learning_rate, cfg.rms_decay)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub weighted_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub mean_bce: f64,
    pub samples: usize,
}

pub const METRICS_FORMAT: &str = "attrhar-metrics";

/// The metrics JSON written by the final-training and evaluation commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub format: String,
    pub split: String,
    pub architecture: Architecture,
    pub classes: usize,
    pub attributes: usize,
    pub weighted_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub mean_bce: f64,
    pub samples: usize,
}

impl MetricsReport {
    pub fn new(split: &str, net: &Network, attributes: &AttributeMatrix, m: Metrics) -> Self {
        Self {
            format: METRICS_FORMAT.into(),
            split: split.into(),
            architecture: net.architecture(),
            classes: attributes.classes(),
            attributes: attributes.attributes(),
            weighted_f1: m.weighted_f1,
            precision: m.precision,
            recall: m.recall,
            mean_bce: m.mean_bce,
            samples: m.samples,
        }
    }

    /// Range and shape checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("metrics report: {m}")));
        if self.format != METRICS_FORMAT {
            return bad("wrong format tag");
        }
        if !(0.0..=1.0).contains(&self.weighted_f1) {
            return bad("weighted_f1 outside [0, 1]");
        }
        if self.precision.len() != self.classes || self.recall.len() != self.classes {
            return bad("per-class vectors do not match class count");
        }
        if self.precision.iter().chain(&self.recall).any(|v| !(0.0..=1.0).contains(v)) {
            return bad("precision or recall outside [0, 1]");
        }
        if !self.mean_bce.is_finite() || self.mean_bce < 0.0 {
            return bad("mean_bce not a finite non-negative number");
        }
        if self.samples == 0 || self.attributes == 0 {
            return bad("empty evaluation");
        }
        Ok(())
    }
}

/// Class predictions of an eval-mode forward pass, decoded against `attributes`.
pub fn predict(net: &Network, dataset: &WindowedDataset, attributes: &AttributeMatrix) -> Result<(Vec<usize>, Tensor)> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let scores = net.forward(&dataset.segments, Mode::Eval, &mut RngState::new(0))?;
    let classes = (0..scores.len())
        .map(|i| attributes.decode_nearest(scores.sample(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((classes, scores.scores))
}

/// Eval-mode forward, nearest-attribute decoding, weighted F1 against the
/// true labels. No noise and no dropout.
pub fn evaluate(net: &Network, dataset: &WindowedDataset, attributes: &AttributeMatrix) -> Result<Metrics> {
    check_labels(dataset, attributes)?;
    let (predicted, scores) = predict(net, dataset, attributes)?;
    let targets = attributes.targets_for_batch(&dataset.labels)?;
    let mut total_bce = 0.0;
    for i in 0..dataset.len() {
        total_bce += bce_loss(targets.row(i), scores.row(i))?;
    }
    let k = attributes.classes();
    let pr = per_class_precision_recall(&predicted, &dataset.labels, k)?;
    Ok(Metrics {
        weighted_f1: weighted_f1(&predicted, &dataset.labels, k)?,
        precision: pr.precision,
        recall: pr.recall,
        mean_bce: total_bce / dataset.len() as f64,
        samples: dataset.len(),
    })
}
