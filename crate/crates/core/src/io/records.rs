//! Experiment config (TOML), dataset manifest (JSON) and line-delimited records.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Split, SynthConfig};
use crate::error::{GcfError, Result};
use crate::objective::{LossConfig, SgdConfig};
use crate::params::GcfConfig;

/// Which model `train` fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Gcf,
    /// Per-clip classifier behind the central and dense baselines.
    ClipClassifier,
}

/// Everything a training run depends on besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model_kind: ModelKind,
    pub model: GcfConfig,
    pub loss: LossConfig,
    pub sgd: SgdConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model_kind: ModelKind::Gcf,
            model: GcfConfig::bench_s(),
            loss: LossConfig::default(),
            sgd: SgdConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| GcfError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GcfError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.sgd.validate()
    }
}

/// Reads any TOML-deserializable settings file.
pub fn read_toml<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GcfError::io(path, e))?;
    toml::from_str(&text).map_err(|e| GcfError::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub split: Split,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub videos: usize,
    pub sha256: String,
}

/// Describes a dataset directory and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub command: Vec<String>,
    pub seed: u64,
    pub synth: Option<SynthConfig>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GcfError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| GcfError::Malformed {
            path: path.to_path_buf(),
            offset: 0,
            detail: e.to_string(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| GcfError::io(path, e))
    }

    pub fn entry(&self, split: Split) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.split == split)
    }

    /// Checks every listed file's checksum relative to `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for e in &self.files {
            let p = dir.join(&e.path);
            let bytes = std::fs::read(&p).map_err(|err| GcfError::io(&p, err))?;
            let found = sha256_hex(&bytes);
            if found != e.sha256 {
                return Err(GcfError::Malformed {
                    path: p,
                    offset: 0,
                    detail: format!("checksum {found} does not match manifest {}", e.sha256),
                });
            }
        }
        Ok(())
    }
}

/// Appends one JSON record as a line.
pub fn append_jsonl<T: Serialize>(path: impl AsRef<Path>, record: &T) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| GcfError::io(path, e))?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| GcfError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GcfError::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim_end();
        if !body.is_empty() {
            out.push(serde_json::from_str(body).map_err(|e| GcfError::Malformed {
                path: path.to_path_buf(),
                offset,
                detail: e.to_string(),
            })?);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}
