//! Run manifests: what a command read, what it wrote, and with which seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FORMAT: &str = "attrhar-manifest";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, recorded_as: impl Into<String>) -> Result<Self> {
        Ok(Self {
            path: recorded_as.into(),
            sha256: file_digest(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub version: String,
    /// Digest of the effective configuration after command-line overrides.
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    /// Output files relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_digest,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(FileDigest::of(path, path.display().to_string())?);
        Ok(self)
    }

    /// Records `dir/name` under `name`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<&mut Self> {
        self.outputs.push(FileDigest::of(&dir.join(name), name)?);
        Ok(self)
    }

    /// Inputs whose current content no longer matches the recorded digest.
    pub fn stale_inputs(&self) -> Result<Vec<PathBuf>> {
        let mut stale = Vec::new();
        for f in &self.inputs {
            let path = PathBuf::from(&f.path);
            if file_digest(&path)? != f.sha256 {
                stale.push(path);
            }
        }
        Ok(stale)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("not a manifest (format {:?})", m.format),
            });
        }
        Ok(m)
    }
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes_digest(&bytes))
}
