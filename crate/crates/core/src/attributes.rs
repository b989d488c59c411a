//! The binary attribute matrix: one row of `n` bits per class.
//!
//! Rows must be non-zero (cosine decoding is undefined otherwise) and
//! pairwise distinct (decoding would be ambiguous).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMatrix {
    names: Vec<String>,
    rows: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ZeroRow(usize),
    DuplicateRows(usize, usize),
    NonBinary { row: usize, col: usize },
    RaggedRow(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroRow(r) => write!(f, "row {r} is all zero"),
            Violation::DuplicateRows(a, b) => write!(f, "rows {a} and {b} are identical"),
            Violation::NonBinary { row, col } => write!(f, "entry ({row}, {col}) is not 0/1"),
            Violation::RaggedRow(r) => write!(f, "row {r} has the wrong length"),
        }
    }
}

/// Invariant violations of a raw row set, in row order.
pub fn violations(rows: &[Vec<u8>]) -> Vec<Violation> {
    let width = rows.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            out.push(Violation::RaggedRow(i));
        }
        if let Some(col) = row.iter().position(|&b| b > 1) {
            out.push(Violation::NonBinary { row: i, col });
        }
        if row.iter().all(|&b| b == 0) {
            out.push(Violation::ZeroRow(i));
        }
        if let Some(j) = rows[..i].iter().position(|r| r == row) {
            out.push(Violation::DuplicateRows(j, i));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MutationScope {
    #[default]
    OneRow,
    AllRows,
}

/// Global bit-flip mutation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    pub flip_probability: f64,
    #[serde(default)]
    pub scope: MutationScope,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    1000
}

impl MutationConfig {
    pub fn new(flip_probability: f64, scope: MutationScope) -> Result<Self> {
        let cfg = Self {
            flip_probability,
            scope,
            max_retries: default_retries(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One expected flip per mutated row.
    pub fn per_bit(attributes: usize) -> Self {
        Self {
            flip_probability: 1.0 / attributes as f64,
            scope: MutationScope::OneRow,
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flip_probability > 0.0 && self.flip_probability < 1.0) {
            return Err(Error::Config(format!(
                "flip probability {} not in (0, 1)",
                self.flip_probability
            )));
        }
        if self.max_retries == 0 {
            return Err(Error::Config("mutation retry budget must be >= 1".into()));
        }
        Ok(())
    }
}

/// Smallest `n` with at least `classes` distinct non-zero binary rows.
pub fn min_attributes(classes: usize) -> usize {
    let mut n = 0;
    while (1u128 << n) - 1 < classes as u128 {
        n += 1;
    }
    n
}

impl AttributeMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let names = (0..rows.len()).map(|k| k.to_string()).collect();
        Self::with_names(names, rows)
    }

    pub fn with_names(names: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidAttributes("matrix must have at least one row and column".into()));
        }
        if names.len() != rows.len() {
            return Err(Error::InvalidAttributes(format!(
                "{} class names for {} rows",
                names.len(),
                rows.len()
            )));
        }
        if let Some(v) = violations(&rows).first() {
            return Err(Error::InvalidAttributes(v.to_string()));
        }
        Ok(Self { names, rows })
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn attributes(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, k: usize) -> &[u8] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn popcount(&self, k: usize) -> usize {
        self.rows[k].iter().filter(|&&b| b == 1).count()
    }

    /// Short hex digest of the bit pattern (names excluded).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.classes() as u64).to_le_bytes());
        h.update((self.attributes() as u64).to_le_bytes());
        for row in &self.rows {
            h.update(row);
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Random matrix with i.i.d. fair bits; offending rows are redrawn until
    /// all rows are non-zero and distinct.
    pub fn random(classes: usize, attributes: usize, rng: &mut RngState) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidAttributes(format!("need at least 2 classes, got {classes}")));
        }
        let needed = min_attributes(classes);
        if attributes < needed {
            return Err(Error::InvalidAttributes(format!(
                "{attributes} attributes cannot give {classes} distinct non-zero rows (need >= {needed})"
            )));
        }
        let mut rows: Vec<Vec<u8>> = Vec::with_capacity(classes);
        while rows.len() < classes {
            let row: Vec<u8> = (0..attributes).map(|_| rng.bernoulli(0.5) as u8).collect();
            if row.contains(&1) && !rows.contains(&row) {
                rows.push(row);
            }
        }
        Self::new(rows)
    }

    /// Global mutation; `self` is left untouched.
    pub fn mutate(&self, cfg: &MutationConfig, rng: &mut RngState) -> Result<Self> {
        cfg.validate()?;
        self.mutate_unchecked(cfg, rng)
    }

    pub(crate) fn mutate_unchecked(&self, cfg: &MutationConfig, rng: &mut RngState) -> Result<Self> {
        for _ in 0..cfg.max_retries {
            let mut rows = self.rows.clone();
            match cfg.scope {
                MutationScope::OneRow => {
                    let k = rng.below(rows.len());
                    flip_bits(&mut rows[k], cfg.flip_probability, rng);
                }
                MutationScope::AllRows => {
                    for row in rows.iter_mut() {
                        flip_bits(row, cfg.flip_probability, rng);
                    }
                }
            }
            if violations(&rows).is_empty() {
                return Ok(Self {
                    names: self.names.clone(),
                    rows,
                });
            }
        }
        Err(Error::MutationExhausted(cfg.max_retries))
    }

    /// Class whose row is nearest in cosine distance; ties go to the lowest index.
    pub fn decode_nearest(&self, scores: &[f64]) -> Result<usize> {
        if scores.len() != self.attributes() {
            return Err(Error::Shape(format!(
                "{} scores for {} attributes",
                scores.len(),
                self.attributes()
            )));
        }
        let norm = scores.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("cosine decoding needs a non-zero finite score vector".into()));
        }
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, row) in self.rows.iter().enumerate() {
            let (mut dot, mut ones) = (0.0, 0usize);
            for (&s, &b) in scores.iter().zip(row) {
                if b == 1 {
                    dot += s;
                    ones += 1;
                }
            }
            let dist = 1.0 - dot / (norm * (ones as f64).sqrt());
            if dist < best_dist {
                best_dist = dist;
                best = k;
            }
        }
        Ok(best)
    }

    /// Number of attributes present in both class rows.
    pub fn shared_attribute_count(&self, i: usize, j: usize) -> Result<usize> {
        let classes = self.classes();
        for idx in [i, j] {
            if idx >= classes {
                return Err(Error::LabelOutOfRange { label: idx, classes });
            }
        }
        Ok(self.rows[i]
            .iter()
            .zip(&self.rows[j])
            .filter(|(&a, &b)| a == 1 && b == 1)
            .count())
    }

    /// Binary training targets `[B, n]` for a batch of class labels.
    pub fn targets_for_batch(&self, labels: &[usize]) -> Result<Tensor> {
        let n = self.attributes();
        let mut data = Vec::with_capacity(labels.len() * n);
        for &l in labels {
            let row = self.rows.get(l).ok_or(Error::LabelOutOfRange {
                label: l,
                classes: self.classes(),
            })?;
            data.extend(row.iter().map(|&b| b as f64));
        }
        Tensor::new(vec![labels.len(), n], data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        let mut header = vec!["class".to_string()];
        header.extend((0..self.attributes()).map(|i| format!("attr_{i}")));
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.rows) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|b| b.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (names, rows) = read_csv_rows(path)?;
        Self::with_names(names, rows).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Parses an attribute CSV without enforcing the matrix invariants.
pub fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<u8>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let schema_err = |message: String| Error::Schema {
        path: path.to_path_buf(),
        message,
    };
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("class") || header.len() < 2 {
        return Err(schema_err("header must be class,attr_0,...".into()));
    }
    for (i, h) in header.iter().skip(1).enumerate() {
        if h != format!("attr_{i}") {
            return Err(schema_err(format!("column {} should be attr_{i}, found {h}", i + 1)));
        }
    }
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line + 2,
            message,
        };
        if rec.len() != header.len() {
            return Err(malformed(format!("{} fields, expected {}", rec.len(), header.len())));
        }
        names.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|v| match v {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(malformed(format!("entry {other:?} is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(schema_err("no class rows".into()));
    }
    Ok((names, rows))
}

fn flip_bits(row: &mut [u8], p: f64, rng: &mut RngState) {
    for b in row.iter_mut() {
        if rng.bernoulli(p) {
            *b ^= 1;
        }
    }
}
