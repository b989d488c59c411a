use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "attrCNN")]
    AttrCnn,
    #[serde(rename = "attrDeepConvLSTM")]
    AttrDeepConvLstm,
    #[serde(rename = "attrCNN-IMU")]
    AttrCnnImu,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::AttrCnn => "attrCNN",
            Architecture::AttrDeepConvLstm => "attrDeepConvLSTM",
            Architecture::AttrCnnImu => "attrCNN-IMU",
        }
    }
}

/// A named set of input channels processed by one convolutional branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelGroup {
    pub name: String,
    pub channels: Vec<usize>,
}

/// Max-pooling inserted after the listed (1-based) convolution layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pooling {
    pub after: Vec<usize>,
    pub size: usize,
    pub stride: usize,
}

impl Default for Pooling {
    fn default() -> Self {
        Self {
            after: vec![2, 4],
            size: 2,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// Window length `T`.
    pub window: usize,
    /// Sensor channel count `D`.
    pub channels: usize,
    /// Attribute count `n`.
    pub attributes: usize,
    #[serde(default = "defaults::conv_filters")]
    pub conv_filters: usize,
    #[serde(default = "defaults::filter_size")]
    pub filter_size: usize,
    #[serde(default = "defaults::conv_layers")]
    pub conv_layers: usize,
    #[serde(default = "defaults::hidden_units")]
    pub hidden_units: usize,
    #[serde(default)]
    pub pooling: Option<Pooling>,
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
    /// Channel groups for the IMU-branched network; ignored by the others.
    #[serde(default)]
    pub groups: Vec<ChannelGroup>,
}

mod defaults {
    pub fn conv_filters() -> usize {
        64
    }
    pub fn filter_size() -> usize {
        5
    }
    pub fn conv_layers() -> usize {
        4
    }
    pub fn hidden_units() -> usize {
        128
    }
    pub fn dropout() -> f64 {
        0.5
    }
}

impl NetworkConfig {
    pub fn new(architecture: Architecture, window: usize, channels: usize, attributes: usize) -> Self {
        Self {
            architecture,
            window,
            channels,
            attributes,
            conv_filters: defaults::conv_filters(),
            filter_size: defaults::filter_size(),
            conv_layers: defaults::conv_layers(),
            hidden_units: defaults::hidden_units(),
            pooling: None,
            dropout: defaults::dropout(),
            groups: Vec::new(),
        }
    }

    /// Time length left after the convolution/pooling stack.
    pub fn output_time_len(&self) -> Result<usize> {
        let mut t = self.window as i64;
        for layer in 1..=self.conv_layers {
            t -= self.filter_size as i64 - 1;
            if t < 1 {
                return Err(Error::Config(format!(
                    "time length collapses below 1 after conv {layer} (T={}, F={})",
                    self.window, self.filter_size
                )));
            }
            if let Some(p) = &self.pooling {
                if p.after.contains(&layer) {
                    if t < p.size as i64 {
                        return Err(Error::Config(format!("time length {t} shorter than pool after conv {layer}")));
                    }
                    t = (t - p.size as i64) / p.stride as i64 + 1;
                }
            }
        }
        Ok(t as usize)
    }

    /// Channel sets of the convolutional branches for this architecture.
    pub fn branch_channels(&self) -> Vec<Vec<usize>> {
        match self.architecture {
            Architecture::AttrCnnImu => self.groups.iter().map(|g| g.channels.clone()).collect(),
            _ => vec![(0..self.channels).collect()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.attributes == 0 {
            return fail("attribute count must be >= 1".into());
        }
        if self.window == 0 || self.channels == 0 {
            return fail("window and channel count must be >= 1".into());
        }
        if self.conv_filters == 0 || self.filter_size == 0 || self.hidden_units == 0 || self.conv_layers == 0 {
            return fail("filters, filter size, conv layers and hidden units must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if let Some(p) = &self.pooling {
            if p.size == 0 || p.stride == 0 {
                return fail("pool size and stride must be >= 1".into());
            }
            if p.after.iter().any(|&l| l == 0 || l > self.conv_layers) {
                return fail(format!("pooling positions {:?} outside conv layers", p.after));
            }
        }
        self.output_time_len()?;
        if self.architecture == Architecture::AttrCnnImu {
            if self.groups.is_empty() {
                return fail("attrCNN-IMU needs at least one channel group".into());
            }
            let mut seen = vec![false; self.channels];
            for g in &self.groups {
                if g.channels.is_empty() {
                    return fail(format!("channel group {:?} is empty", g.name));
                }
                for &c in &g.channels {
                    match seen.get_mut(c) {
                        None => return fail(format!("group {:?} channel {c} >= D={}", g.name, self.channels)),
                        Some(true) => return fail(format!("channel {c} appears in more than one group")),
                        Some(s) => *s = true,
                    }
                }
            }
            if let Some(c) = seen.iter().position(|s| !s) {
                return fail(format!("channel {c} is not covered by any group"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_length_arithmetic() {
        let cfg = NetworkConfig::new(Architecture::AttrCnn, 100, 40, 24);
        assert_eq!(cfg.output_time_len().unwrap(), 84);
        let mut pooled = cfg.clone();
        pooled.pooling = Some(Pooling::default());
        assert_eq!(pooled.output_time_len().unwrap(), 82);
        let short = NetworkConfig::new(Architecture::AttrCnn, 16, 3, 4);
        assert!(short.validate().is_err());
    }

    #[test]
    fn group_validation() {
        let mut cfg = NetworkConfig::new(Architecture::AttrCnnImu, 24, 4, 5);
        assert!(cfg.validate().is_err());
        cfg.groups = vec![
            ChannelGroup { name: "a".into(), channels: vec![0, 1] },
            ChannelGroup { name: "b".into(), channels: vec![1, 2, 3] },
        ];
        assert!(cfg.validate().is_err());
        cfg.groups[1].channels = vec![2, 3];
        cfg.validate().unwrap();
        cfg.groups[1].channels = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn architecture_names() {
        let s = serde_json::to_string(&Architecture::AttrCnnImu).unwrap();
        assert_eq!(s, "\"attrCNN-IMU\"");
    }
}
