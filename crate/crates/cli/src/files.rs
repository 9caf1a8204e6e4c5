//! On-disk formats used by the commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gas_core::{GaussianBackendSpec, LatentGrid, LatentShape};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Latent as `{"shape": [c, h, w], "data": [...]}`, data in C order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentFile {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl LatentFile {
    pub fn from_grid(g: &LatentGrid) -> Self {
        let s = g.shape();
        Self {
            shape: [s.channels, s.height, s.width],
            data: g.to_vec(),
        }
    }

    pub fn to_grid(&self) -> gas_core::Result<LatentGrid> {
        let [c, h, w] = self.shape;
        LatentGrid::from_vec(LatentShape::new(c, h, w), self.data.clone())
    }
}

/// Gaussian data laws for the analytic backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSpecFile {
    pub variance: f64,
    pub null_mean: LatentFile,
    /// Condition text to mean.
    pub means: BTreeMap<String, LatentFile>,
}

impl AnalyticSpecFile {
    pub fn from_spec(spec: &GaussianBackendSpec) -> Self {
        Self {
            variance: spec.variance(),
            null_mean: LatentFile::from_grid(spec.null_mean()),
            means: spec
                .means()
                .iter()
                .map(|(k, v)| (k.clone(), LatentFile::from_grid(v)))
                .collect(),
        }
    }

    pub fn to_spec(&self) -> gas_core::Result<GaussianBackendSpec> {
        let mut spec = GaussianBackendSpec::new(self.variance, self.null_mean.to_grid()?)?;
        for (k, v) in &self.means {
            spec.insert_mean(k.clone(), v.to_grid()?)?;
        }
        Ok(spec)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(stage: &'static str, path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(stage, path, e))
}

pub fn read_json<T: DeserializeOwned>(stage: &'static str, path: &Path) -> CliResult<(T, String)> {
    let bytes = read_bytes(stage, path)?;
    let value = serde_json::from_slice(&bytes).map_err(|e| {
        CliError::new(
            crate::error::EXIT_PARSE,
            stage,
            format!("{}: {e}", path.display()),
        )
    })?;
    Ok((value, sha256_hex(&bytes)))
}

/// Pretty JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_bytes(stage: &'static str, path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(stage, path, e))
}

pub fn write_json<T: Serialize>(stage: &'static str, path: &Path, value: &T) -> CliResult<()> {
    write_bytes(stage, path, to_canonical_json(value).as_bytes())
}
