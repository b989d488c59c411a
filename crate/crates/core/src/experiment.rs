//! The TOML experiment file shared by every command: dataset, network,
//! training and evolution sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    normalize_per_channel, presets, sliding_windows, synth_generate, CsvSchema, Labeling, NormStats, RawRecording,
    SynthSpec, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::evolution::{reference_attributes, reference_epochs, EvolutionConfig, WalkPolicy};
use crate::attributes::MutationConfig;
use crate::models::{Architecture, ChannelGroup, NetworkConfig, Pooling};
use crate::training::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Base seed for network initialization, training and mutation.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub evolution: Option<EvolutionSection>,
    #[serde(default, rename = "final")]
    pub final_training: FinalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub classes: usize,
    pub window: usize,
    pub step: usize,
    #[serde(default)]
    pub labeling: Labeling,
    /// Integer decimation factor applied after loading.
    #[serde(default = "one")]
    pub downsample: usize,
    #[serde(default)]
    pub csv: Option<CsvSection>,
    #[serde(default)]
    pub splits: Option<SplitFiles>,
    #[serde(default)]
    pub synthetic: Option<SynthSpec>,
    /// Channel-group template: "opportunity" or "pamap2".
    #[serde(default)]
    pub layout: Option<String>,
    #[serde(default)]
    pub groups: Option<Vec<ChannelGroup>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CsvSection {
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default)]
    pub channels: Option<Vec<String>>,
    #[serde(default)]
    pub label_values: Option<Vec<i64>>,
    #[serde(default)]
    pub max_gap: Option<usize>,
    #[serde(default)]
    pub sample_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub train: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub architecture: Architecture,
    #[serde(default)]
    pub conv_filters: Option<usize>,
    #[serde(default)]
    pub filter_size: Option<usize>,
    #[serde(default)]
    pub conv_layers: Option<usize>,
    #[serde(default)]
    pub hidden_units: Option<usize>,
    /// Pool after convs 2 and 4 (`true`), never (`false`), or the dataset
    /// default when absent: on for Pamap2, off otherwise.
    #[serde(default)]
    pub pooling: Option<bool>,
    #[serde(default)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub generations: usize,
    /// Defaults to the reference count for known dataset names.
    #[serde(default)]
    pub attributes: Option<usize>,
    /// Training epochs per generation. Falls back to the reference table for
    /// known dataset names, then to `training.epochs`.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub mutation: Option<MutationConfig>,
    #[serde(default)]
    pub policy: WalkPolicy,
    #[serde(default)]
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FinalSection {
    /// Epochs for the final train+validation run; overrides `training.epochs`.
    #[serde(default)]
    pub epochs: Option<usize>,
}

/// Normalized, windowed train/validation/test sets.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: WindowedDataset,
    pub validation: WindowedDataset,
    pub test: WindowedDataset,
    pub groups: Vec<ChannelGroup>,
    /// Every input file read, for manifests.
    pub inputs: Vec<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        let ds = &self.dataset;
        if ds.classes == 0 {
            return Err(Error::Config("dataset.classes must be >= 1".into()));
        }
        if ds.window == 0 || ds.step == 0 || ds.downsample == 0 {
            return Err(Error::Config("window, step and downsample must be >= 1".into()));
        }
        match (&ds.synthetic, &ds.splits) {
            (Some(spec), None) => {
                spec.validate()?;
                if spec.classes != ds.classes {
                    return Err(Error::Config(format!(
                        "synthetic.classes {} != dataset.classes {}",
                        spec.classes, ds.classes
                    )));
                }
            }
            (None, Some(_)) => {}
            _ => return Err(Error::Config("dataset needs exactly one of [dataset.splits] or [dataset.synthetic]".into())),
        }
        if let Some(layout) = &ds.layout {
            if !matches!(layout.as_str(), "opportunity" | "pamap2") {
                return Err(Error::Config(format!("unknown layout {layout:?}")));
            }
        }
        self.training.validate()?;
        if let Some(evo) = &self.evolution {
            self.evolution_config_with(evo)?.validate()?;
        }
        Ok(())
    }

    pub fn attributes(&self) -> Result<usize> {
        let from_evo = self.evolution.as_ref().and_then(|e| e.attributes);
        from_evo
            .or_else(|| reference_attributes(&self.dataset.name))
            .ok_or_else(|| Error::Config("evolution.attributes is required for this dataset".into()))
    }

    fn evolution_config_with(&self, evo: &EvolutionSection) -> Result<EvolutionConfig> {
        let mut train = self.training.clone();
        if let Some(e) = evo
            .epochs
            .or_else(|| reference_epochs(&self.dataset.name, self.network.architecture))
        {
            train.epochs = e;
        }
        Ok(EvolutionConfig {
            generations: evo.generations,
            classes: self.dataset.classes,
            attributes: self.attributes()?,
            mutation: evo.mutation,
            policy: evo.policy,
            base_seed: self.seed,
            record_wall_time: evo.record_wall_time,
            train,
        })
    }

    pub fn evolution_config(&self) -> Result<EvolutionConfig> {
        let evo = self
            .evolution
            .as_ref()
            .ok_or_else(|| Error::Config("missing [evolution] section".into()))?;
        self.evolution_config_with(evo)
    }

    pub fn final_train_config(&self) -> TrainConfig {
        let mut t = self.training.clone();
        if let Some(e) = self.final_training.epochs {
            t.epochs = e;
        }
        t.seed = self.seed;
        t
    }

    /// Network config for `channels` inputs, `attributes` outputs and the
    /// dataset's channel groups.
    pub fn network_config(&self, channels: usize, attributes: usize, groups: &[ChannelGroup]) -> Result<NetworkConfig> {
        let n = &self.network;
        let mut cfg = NetworkConfig::new(n.architecture, self.dataset.window, channels, attributes);
        if let Some(v) = n.conv_filters {
            cfg.conv_filters = v;
        }
        if let Some(v) = n.filter_size {
            cfg.filter_size = v;
        }
        if let Some(v) = n.conv_layers {
            cfg.conv_layers = v;
        }
        if let Some(v) = n.hidden_units {
            cfg.hidden_units = v;
        }
        if let Some(v) = n.dropout {
            cfg.dropout = v;
        }
        let pooling = n
            .pooling
            .unwrap_or_else(|| self.dataset.name.eq_ignore_ascii_case("pamap2"));
        cfg.pooling = pooling.then(Pooling::default);
        cfg.groups = if groups.is_empty() {
            vec![ChannelGroup {
                name: "all".into(),
                channels: (0..channels).collect(),
            }]
        } else {
            groups.to_vec()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn schema(&self) -> CsvSchema {
        let mut s = CsvSchema::new(self.dataset.classes);
        if let Some(c) = &self.dataset.csv {
            if let Some(v) = &c.label_column {
                s.label_column = v.clone();
            }
            if let Some(v) = &c.timestamp_column {
                s.timestamp_column = v.clone();
            }
            s.channels = c.channels.clone();
            s.label_values = c.label_values.clone();
            if let Some(v) = c.max_gap {
                s.max_gap = v;
            }
            if let Some(v) = c.sample_rate {
                s.sample_rate = v;
            }
        }
        s
    }

    /// The recording a synthetic split is generated from; splits use
    /// consecutive seeds.
    pub fn synthetic_recording(&self, split: usize) -> Result<RawRecording> {
        let spec = self
            .dataset
            .synthetic
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no [dataset.synthetic] section".into()))?;
        let mut spec = spec.clone();
        spec.seed = spec.seed.wrapping_add(split as u64);
        synth_generate(&spec)
    }

    /// Loads (or generates), normalizes with training statistics, and windows
    /// all three splits. Relative paths resolve against `base_dir`.
    pub fn load_splits(&self, base_dir: &Path) -> Result<Splits> {
        let ds = &self.dataset;
        let (raw, inputs): ([Vec<RawRecording>; 3], Vec<PathBuf>) = match (&ds.synthetic, &ds.splits) {
            (Some(_), _) => (
                [
                    vec![self.synthetic_recording(0)?],
                    vec![self.synthetic_recording(1)?],
                    vec![self.synthetic_recording(2)?],
                ],
                Vec::new(),
            ),
            (None, Some(files)) => {
                let schema = self.schema();
                let mut inputs = Vec::new();
                let mut load = |list: &[PathBuf]| -> Result<Vec<RawRecording>> {
                    if list.is_empty() {
                        return Err(Error::Config("every split needs at least one file".into()));
                    }
                    list.iter()
                        .map(|p| {
                            let path = base_dir.join(p);
                            inputs.push(path.clone());
                            RawRecording::load_csv(&path, &schema)?.decimate(ds.downsample)
                        })
                        .collect()
                };
                let train = load(&files.train)?;
                let validation = load(&files.validation)?;
                let test = load(&files.test)?;
                ([train, validation, test], inputs)
            }
            (None, None) => return Err(Error::Config("dataset has no data source".into())),
        };

        let channels = raw[0][0].channels();
        for r in raw.iter().flatten() {
            if r.channels() != channels || r.channel_names != raw[0][0].channel_names {
                return Err(Error::Config("all recordings must share the same channel columns".into()));
            }
        }
        let stats = training_stats(&raw[0])?;
        let window = |recs: &[RawRecording]| -> Result<WindowedDataset> {
            let mut out: Option<WindowedDataset> = None;
            for r in recs {
                let (norm, _) = normalize_per_channel(r, Some(&stats))?;
                let w = sliding_windows(&norm, ds.window, ds.step, ds.labeling)?;
                out = Some(match out {
                    None => w,
                    Some(acc) => acc.concat(&w)?,
                });
            }
            let mut w = out.ok_or(Error::Empty("split"))?;
            w.stats = Some(stats.clone());
            Ok(w)
        };
        let splits = [window(&raw[0])?, window(&raw[1])?, window(&raw[2])?];
        for (name, s) in ["training", "validation", "test"].iter().zip(&splits) {
            if s.is_empty() {
                return Err(Error::Config(format!("{name} split yields no windows of length {}", ds.window)));
            }
        }

        let groups = match (&ds.groups, ds.layout.as_deref()) {
            (Some(g), _) => g.clone(),
            (None, Some("opportunity")) => presets::opportunity_groups(),
            (None, Some("pamap2")) => presets::pamap2_groups(),
            _ => raw[0][0].groups.clone(),
        };
        let [train, validation, test] = splits;
        Ok(Splits {
            train,
            validation,
            test,
            groups,
            inputs,
        })
    }
}

fn training_stats(recs: &[RawRecording]) -> Result<NormStats> {
    let mut stats: Option<NormStats> = None;
    for r in recs {
        let s = NormStats::from_samples(&r.samples)?;
        stats = Some(match stats {
            None => s,
            Some(acc) => NormStats {
                min: acc.min.iter().zip(&s.min).map(|(a, b)| a.min(*b)).collect(),
                max: acc.max.iter().zip(&s.max).map(|(a, b)| a.max(*b)).collect(),
            },
        });
    }
    stats.ok_or(Error::Empty("training split"))
}
