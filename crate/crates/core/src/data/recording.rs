use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ChannelGroup;
use crate::tensor::Tensor;

/// A continuous labeled multichannel recording, `samples[L, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub channel_names: Vec<String>,
    pub sample_rate: f64,
    pub groups: Vec<ChannelGroup>,
}

/// How to read a sensor CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_timestamp_column")]
    pub timestamp_column: String,
    /// Channel columns to read; every other column when absent.
    #[serde(default)]
    pub channels: Option<Vec<String>>,
    pub classes: usize,
    /// Raw label value of each class, in class order. When absent the raw
    /// value is the class index.
    #[serde(default)]
    pub label_values: Option<Vec<i64>>,
    /// Longest run of missing values filled by linear interpolation.
    #[serde(default = "default_max_gap")]
    pub max_gap: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
}

fn default_label_column() -> String {
    "label".into()
}
fn default_timestamp_column() -> String {
    "timestamp".into()
}
fn default_max_gap() -> usize {
    3
}
fn default_sample_rate() -> f64 {
    30.0
}

impl CsvSchema {
    pub fn new(classes: usize) -> Self {
        Self {
            label_column: default_label_column(),
            timestamp_column: default_timestamp_column(),
            channels: None,
            classes,
            label_values: None,
            max_gap: default_max_gap(),
            sample_rate: default_sample_rate(),
        }
    }

    fn class_of(&self, raw: i64) -> Option<usize> {
        match &self.label_values {
            Some(values) => values.iter().position(|&v| v == raw),
            None => usize::try_from(raw).ok().filter(|&k| k < self.classes),
        }
    }
}

fn parse_value(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        f.parse::<f64>().ok().filter(|v| !v.is_infinite())
    }
}

impl RawRecording {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    /// Reads `timestamp,label,<channels…>` rows. Short interior gaps of
    /// missing values are interpolated; rows with longer gaps are dropped.
    pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let schema_err = |message: String| Error::Schema {
            path: path.to_path_buf(),
            message,
        };
        let header = rdr.headers().map_err(|e| schema_err(e.to_string()))?.clone();
        if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
            return Err(schema_err("empty file".into()));
        }
        let find = |name: &str| header.iter().position(|h| h == name);
        let label_idx = find(&schema.label_column)
            .ok_or_else(|| schema_err(format!("label column {:?} missing", schema.label_column)))?;
        let ts_idx = find(&schema.timestamp_column);
        let channel_names: Vec<String> = match &schema.channels {
            Some(names) => names.clone(),
            None => header
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != label_idx && Some(i) != ts_idx)
                .map(|(_, h)| h.to_string())
                .collect(),
        };
        let channel_idx = channel_names
            .iter()
            .map(|n| find(n).ok_or_else(|| schema_err(format!("channel column {n:?} missing"))))
            .collect::<Result<Vec<_>>>()?;
        if channel_idx.is_empty() {
            return Err(schema_err("no channel columns".into()));
        }

        let d = channel_idx.len();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut timestamps = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let malformed = |message: String| Error::Malformed {
                path: path.to_path_buf(),
                line,
                message,
            };
            let rec = rec.map_err(|e| malformed(e.to_string()))?;
            if rec.len() != header.len() {
                return Err(malformed(format!("{} fields, expected {}", rec.len(), header.len())));
            }
            let raw_label: i64 = rec[label_idx]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0)
                .map(|v| v as i64)
                .ok_or_else(|| malformed(format!("label {:?} is not an integer", &rec[label_idx])))?;
            let class = schema
                .class_of(raw_label)
                .ok_or_else(|| malformed(format!("unknown label {raw_label}")))?;
            labels.push(class);
            let ts = match ts_idx {
                Some(i) => parse_value(&rec[i])
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(format!("bad timestamp {:?}", &rec[i])))?,
                None => row as f64 / schema.sample_rate,
            };
            timestamps.push(ts);
            for &c in &channel_idx {
                values.push(parse_value(&rec[c]).ok_or_else(|| malformed(format!("bad value {:?}", &rec[c])))?);
            }
        }
        if labels.is_empty() {
            return Err(schema_err("no data rows".into()));
        }

        let keep = fill_gaps(&mut values, labels.len(), d, schema.max_gap);
        let dropped = keep.iter().filter(|k| !**k).count();
        if dropped > 0 {
            warn!("{}: dropped {dropped} rows with unrecoverable missing values", path.display());
        }
        let mut samples = Vec::with_capacity(values.len());
        let mut kept_labels = Vec::new();
        let mut kept_ts = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                samples.extend_from_slice(&values[i * d..(i + 1) * d]);
                kept_labels.push(labels[i]);
                kept_ts.push(timestamps[i]);
            }
        }
        if kept_labels.is_empty() {
            return Err(Error::Empty("recording after dropping missing rows"));
        }
        info!("{}: {} rows, {d} channels", path.display(), kept_labels.len());
        Ok(Self {
            samples: Tensor::new(vec![kept_labels.len(), d], samples)?,
            labels: kept_labels,
            timestamps: kept_ts,
            channel_names,
            sample_rate: schema.sample_rate,
            groups: Vec::new(),
        })
    }

    /// Writes `timestamp,label,<channels…>` with class indices as labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        let mut header = vec!["timestamp".to_string(), "label".to_string()];
        header.extend(self.channel_names.iter().cloned());
        w.write_record(&header)?;
        let d = self.channels();
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(d + 2);
            rec.push(self.timestamps[i].to_string());
            rec.push(self.labels[i].to_string());
            rec.extend(self.samples.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Mean-pools blocks of `factor` consecutive samples (integer
    /// decimation). Each block takes its majority label; a trailing
    /// partial block is discarded.
    pub fn decimate(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("decimation factor must be >= 1".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let d = self.channels();
        let blocks = self.len() / factor;
        let mut samples = Vec::with_capacity(blocks * d);
        let mut labels = Vec::with_capacity(blocks);
        let mut timestamps = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let range = b * factor..(b + 1) * factor;
            for c in 0..d {
                let s: f64 = range.clone().map(|i| self.samples.row(i)[c]).sum();
                samples.push(s / factor as f64);
            }
            labels.push(majority(&self.labels[range.clone()]));
            timestamps.push(self.timestamps[range.start]);
        }
        Ok(Self {
            samples: Tensor::new(vec![blocks, d], samples)?,
            labels,
            timestamps,
            channel_names: self.channel_names.clone(),
            sample_rate: self.sample_rate / factor as f64,
            groups: self.groups.clone(),
        })
    }
}

/// Most frequent label; ties go to the smallest label.
pub(crate) fn majority(labels: &[usize]) -> usize {
    let max = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    counts.iter().position(|&c| c == best).unwrap_or(0)
}

/// Linearly interpolates interior NaN runs of length <= `max_gap` per
/// channel. Returns which rows are fully finite afterwards.
fn fill_gaps(values: &mut [f64], rows: usize, d: usize, max_gap: usize) -> Vec<bool> {
    for c in 0..d {
        let mut i = 0;
        while i < rows {
            if !values[i * d + c].is_nan() {
                i += 1;
                continue;
            }
            let start = i;
            while i < rows && values[i * d + c].is_nan() {
                i += 1;
            }
            let len = i - start;
            if start == 0 || i == rows || len > max_gap {
                continue;
            }
            let lo = values[(start - 1) * d + c];
            let hi = values[i * d + c];
            for (k, r) in (start..i).enumerate() {
                let frac = (k + 1) as f64 / (len + 1) as f64;
                values[r * d + c] = lo + (hi - lo) * frac;
            }
        }
    }
    (0..rows)
        .map(|r| values[r * d..(r + 1) * d].iter().all(|v| v.is_finite()))
        .collect()
}
