//! Run manifests: everything needed to reproduce a command's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use gas_core::GradientReport;
use gas_eval::MetricReport;
use serde::{Deserialize, Serialize};

use crate::config::JobConfig;
use crate::error::{CliError, CliResult, EXIT_INTERNAL};
use crate::files::{sha256_hex, to_canonical_json, write_bytes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestError {
    pub stage: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub job_id: String,
    /// `ok`, `diverged` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ManifestError>,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub config_sha256: String,
    pub config: JobConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<GradientReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckResult>,
    /// Output name to path relative to the manifest's directory.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; omitted when timings are disabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

/// Hash of the config snapshot with `output_dir` cleared, so the same job
/// written to different places keeps its id.
pub fn config_sha256(config: &JobConfig) -> String {
    let mut c = config.clone();
    c.output_dir = Default::default();
    sha256_hex(to_canonical_json(&c).as_bytes())
}

/// Stable id from the command, input hashes, config and seed.
pub fn job_id(command: &str, inputs: &[InputRecord], config_sha: &str, seed: u64) -> String {
    let mut key = format!("{command}\n");
    for i in inputs {
        key.push_str(&format!("{}={}\n", i.role, i.sha256));
    }
    key.push_str(&format!("config={config_sha}\nseed={seed}\n"));
    sha256_hex(key.as_bytes())[..16].to_string()
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<InputRecord>, config: &JobConfig, seed: u64) -> Self {
        let config_sha = config_sha256(config);
        Self {
            command: command.to_string(),
            job_id: job_id(command, &inputs, &config_sha, seed),
            status: "ok".into(),
            error: None,
            seed,
            inputs,
            config_sha256: config_sha,
            config: config.clone(),
            steps_run: None,
            converged: None,
            reports: Vec::new(),
            metrics: None,
            checks: Vec::new(),
            artifacts: BTreeMap::new(),
            timings: None,
        }
    }

    pub fn fail(&mut self, status: &str, e: &CliError) {
        self.status = status.into();
        self.error = Some(ManifestError {
            stage: e.stage.into(),
            message: e.message.clone(),
            exit_code: e.code,
        });
    }

    /// Writes `manifest.json` into `dir` after checking every artifact exists.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        for (name, rel) in &self.artifacts {
            if !dir.join(rel).is_file() {
                return Err(CliError::new(
                    EXIT_INTERNAL,
                    "output",
                    format!("artifact {name} ({rel}) is missing"),
                ));
            }
        }
        write_bytes(
            "output",
            &dir.join("manifest.json"),
            to_canonical_json(self).as_bytes(),
        )
    }
}

/// Per-stage wall-clock stopwatch.
#[derive(Debug)]
pub struct Stopwatch {
    enabled: bool,
    start: Instant,
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Stopwatch {
    pub fn new(enabled: bool) -> Self {
        let now = Instant::now();
        Self {
            enabled,
            start: now,
            last: now,
            stages: BTreeMap::new(),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        *self.stages.entry(stage.to_string()).or_default() += (now - self.last).as_secs_f64();
        self.last = now;
    }

    pub fn finish(mut self) -> Option<BTreeMap<String, f64>> {
        if !self.enabled {
            return None;
        }
        self.stages
            .insert("total".into(), self.start.elapsed().as_secs_f64());
        Some(self.stages)
    }
}
