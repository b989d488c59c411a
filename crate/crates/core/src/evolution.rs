//! Keep-best evolutionary search over attribute matrices: each generation
//! trains a fresh network on the current matrix, scores it by validation
//! weighted F1, keeps the best matrix so far, and mutates.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::{min_attributes, AttributeMatrix, MutationConfig};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::models::{Architecture, Network, NetworkConfig};
use crate::rng::{stream, RngState};
use crate::training::{evaluate, train, TrainConfig};

/// Which matrix the next generation mutates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WalkPolicy {
    /// Mutate the current generation's matrix whether or not it was kept.
    #[default]
    Literal,
    /// Mutate the best matrix found so far.
    Elitist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub generations: usize,
    pub classes: usize,
    pub attributes: usize,
    /// Defaults to one expected flip per mutated row.
    #[serde(default)]
    pub mutation: Option<MutationConfig>,
    #[serde(default)]
    pub policy: WalkPolicy,
    #[serde(default)]
    pub base_seed: u64,
    /// Write measured wall time into the history; off keeps outputs
    /// byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub train: TrainConfig,
}

impl EvolutionConfig {
    pub fn new(generations: usize, classes: usize, attributes: usize, train: TrainConfig) -> Self {
        Self {
            generations,
            classes,
            attributes,
            mutation: None,
            policy: WalkPolicy::Literal,
            base_seed: 0,
            record_wall_time: false,
            train,
        }
    }

    pub fn mutation(&self) -> MutationConfig {
        self.mutation.unwrap_or_else(|| MutationConfig::per_bit(self.attributes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.generations == 0 {
            return Err(Error::Config("generations must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("evolution needs at least 2 classes".into()));
        }
        let needed = min_attributes(self.classes);
        if self.attributes < needed {
            return Err(Error::Config(format!(
                "{} attributes cannot encode {} classes with distinct non-zero rows (need >= {needed})",
                self.attributes, self.classes
            )));
        }
        self.mutation().validate()?;
        self.train.validate()
    }
}

/// Training epochs per generation used for each dataset/network pairing.
pub fn reference_epochs(dataset: &str, arch: Architecture) -> Option<usize> {
    let row = match dataset.to_ascii_lowercase().as_str() {
        "gestures" => [12, 5, 10],
        "locomotion" => [10, 5, 10],
        "pamap2" => [25, 5, 25],
        _ => return None,
    };
    Some(match arch {
        Architecture::AttrCnn => row[0],
        Architecture::AttrCnnImu => row[1],
        Architecture::AttrDeepConvLstm => row[2],
    })
}

/// Attribute count used for each dataset.
pub fn reference_attributes(dataset: &str) -> Option<usize> {
    match dataset.to_ascii_lowercase().as_str() {
        "locomotion" => Some(10),
        "gestures" => Some(32),
        "pamap2" => Some(24),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 1-based generation index.
    pub generation: usize,
    pub f1: f64,
    pub best_f1: f64,
    pub matrix_digest: String,
    /// Digest of the freshly initialized network parameters.
    pub init_digest: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitnessHistory {
    pub records: Vec<GenerationRecord>,
}

impl FitnessHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("generation,f1,best_f1,matrix_digest,seconds\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.generation, r.f1, r.best_f1, r.matrix_digest, r.seconds
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Everything needed to continue a search: persisted after every generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub config_digest: String,
    /// Generations completed so far.
    pub completed: usize,
    pub current: AttributeMatrix,
    pub best: AttributeMatrix,
    pub best_f1: f64,
    pub history: FitnessHistory,
}

impl EvolutionState {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: format!("corrupt evolution state: {e}"),
        })
    }
}

pub fn dataset_digest(ds: &WindowedDataset) -> String {
    let mut h = Sha256::new();
    for &s in ds.segments.shape() {
        h.update((s as u64).to_le_bytes());
    }
    for v in ds.segments.data() {
        h.update(v.to_bits().to_le_bytes());
    }
    for &l in &ds.labels {
        h.update((l as u64).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Digest of everything that determines a run's trajectory. The generation
/// budget and timing flag are excluded so a finished run can be extended.
pub fn config_digest(cfg: &EvolutionConfig, net: &NetworkConfig, train_set: &WindowedDataset, validation: &WindowedDataset) -> Result<String> {
    let mut trajectory = cfg.clone();
    trajectory.generations = 0;
    trajectory.record_wall_time = false;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&trajectory)?);
    h.update(serde_json::to_vec(net)?);
    h.update(dataset_digest(train_set).as_bytes());
    h.update(dataset_digest(validation).as_bytes());
    Ok(hex::encode(&h.finalize()[..16]))
}

/// Where a run persists its state and human-readable outputs.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn state(&self) -> PathBuf {
        self.dir.join("evolution_state.json")
    }
    pub fn history(&self) -> PathBuf {
        self.dir.join("fitness_history.csv")
    }
    pub fn best(&self) -> PathBuf {
        self.dir.join("best_attributes.csv")
    }

    fn persist(&self, state: &EvolutionState) -> Result<()> {
        state.save(&self.state())?;
        state.history.write_csv(&self.history())?;
        state.best.write_csv(&self.best())
    }
}

pub struct Evolution<'a> {
    cfg: &'a EvolutionConfig,
    net: &'a NetworkConfig,
    train_set: &'a WindowedDataset,
    validation: &'a WindowedDataset,
    digest: String,
}

impl<'a> Evolution<'a> {
    pub fn new(
        cfg: &'a EvolutionConfig,
        net: &'a NetworkConfig,
        train_set: &'a WindowedDataset,
        validation: &'a WindowedDataset,
    ) -> Result<Self> {
        cfg.validate()?;
        net.validate()?;
        if net.attributes != cfg.attributes {
            return Err(Error::Config(format!(
                "network predicts {} attributes, evolution searches {}",
                net.attributes, cfg.attributes
            )));
        }
        for (name, ds) in [("training", train_set), ("validation", validation)] {
            if ds.is_empty() {
                return Err(Error::Config(format!("{name} set is empty")));
            }
            if let Some(label) = ds.labels.iter().copied().find(|&l| l >= cfg.classes) {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: cfg.classes,
                });
            }
        }
        let digest = config_digest(cfg, net, train_set, validation)?;
        Ok(Self {
            cfg,
            net,
            train_set,
            validation,
            digest,
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// State before the first generation: a random initial matrix.
    pub fn initial_state(&self) -> Result<EvolutionState> {
        let mut rng = RngState::with_stream(self.cfg.base_seed, stream::ATTRIBUTES);
        let initial = AttributeMatrix::random(self.cfg.classes, self.cfg.attributes, &mut rng)?;
        Ok(EvolutionState {
            config_digest: self.digest.clone(),
            completed: 0,
            current: initial.clone(),
            best: initial,
            best_f1: 0.0,
            history: FitnessHistory::default(),
        })
    }

    /// Loads a persisted state, refusing one written under a different config.
    pub fn load_state(&self, path: &Path) -> Result<EvolutionState> {
        let state = EvolutionState::load(path)?;
        if state.config_digest != self.digest {
            return Err(Error::DigestMismatch {
                stored: state.config_digest,
                current: self.digest.clone(),
            });
        }
        if state.current.classes() != self.cfg.classes || state.current.attributes() != self.cfg.attributes {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: "stored matrix does not match the configured shape".into(),
            });
        }
        Ok(state)
    }

    /// Runs one generation and advances `state`.
    pub fn step(&self, state: &mut EvolutionState) -> Result<()> {
        let g = state.completed;
        let started = Instant::now();
        let seed = self.cfg.base_seed.wrapping_add(g as u64);
        let mut network = Network::build(self.net, seed)?;
        let init_digest = network.parameter_digest();
        let train_cfg = TrainConfig {
            seed,
            ..self.cfg.train.clone()
        };
        train(&mut network, self.train_set, &state.current, &train_cfg)?;
        let f1 = evaluate(&network, self.validation, &state.current)?.weighted_f1;
        if f1 > state.best_f1 {
            state.best = state.current.clone();
            state.best_f1 = f1;
        }
        let seconds = if self.cfg.record_wall_time {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        state.history.records.push(GenerationRecord {
            generation: g + 1,
            f1,
            best_f1: state.best_f1,
            matrix_digest: state.current.digest(),
            init_digest,
            seconds,
        });
        info!("generation {} f1 {f1:.4} best {:.4}", g + 1, state.best_f1);

        let parent = match self.cfg.policy {
            WalkPolicy::Literal => &state.current,
            WalkPolicy::Elitist => &state.best,
        };
        let mut rng = RngState::derive(self.cfg.base_seed, stream::MUTATE, &[g as u64]);
        state.current = parent.mutate(&self.cfg.mutation(), &mut rng)?;
        state.completed += 1;
        Ok(())
    }

    /// Runs until the generation budget is spent, or for at most
    /// `max_new` more generations. Persists after every generation when
    /// `files` is given.
    pub fn run(&self, mut state: EvolutionState, max_new: Option<usize>, files: Option<&RunFiles>) -> Result<EvolutionState> {
        let mut done = 0;
        while state.completed < self.cfg.generations && max_new.is_none_or(|m| done < m) {
            self.step(&mut state)?;
            done += 1;
            if let Some(f) = files {
                f.persist(&state)?;
            }
        }
        if let Some(f) = files {
            f.persist(&state)?;
        }
        Ok(state)
    }
}

/// Full search from a random initial matrix.
pub fn evolve(
    cfg: &EvolutionConfig,
    train_set: &WindowedDataset,
    validation: &WindowedDataset,
    net: &NetworkConfig,
) -> Result<(AttributeMatrix, FitnessHistory)> {
    let evo = Evolution::new(cfg, net, train_set, validation)?;
    let state = evo.run(evo.initial_state()?, None, None)?;
    Ok((state.best, state.history))
}

/// Continues a persisted search to the configured generation budget.
pub fn resume(
    files: &RunFiles,
    cfg: &EvolutionConfig,
    train_set: &WindowedDataset,
    validation: &WindowedDataset,
    net: &NetworkConfig,
) -> Result<EvolutionState> {
    let evo = Evolution::new(cfg, net, train_set, validation)?;
    let state = evo.load_state(&files.state())?;
    evo.run(state, None, Some(files))
}
