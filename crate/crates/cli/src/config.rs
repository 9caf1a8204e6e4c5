//! Job configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.
//!
//! The file mirrors [`JobConfig`]; every key is optional:
//!
//! ```toml
//! output_dir = "runs/demo"
//!
//! [gas]
//! omega = 7.5
//! eta = 5.0
//! alpha_values = [0.5, 0.4, 0.3, 0.2, 0.1]
//!
//! [optimizer]
//! max_steps = 500
//! seed = 0
//!
//! [backend]
//! kind = "analytic"          # or "http"
//! analytic_spec = "spec.json"
//!
//! [clients]
//! chat_endpoint = "https://example.invalid/v1/chat/completions"
//! detector_endpoint = "http://localhost:8001/detect"
//! ```

use std::path::PathBuf;

use gas_core::{DiffusionSchedule, GasConfig, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Closed-form Gaussian score; latent space only.
    Analytic,
    /// Remote noise predictor; pixel space via its encode/decode endpoints.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub url: Option<String>,
    pub analytic_spec: Option<PathBuf>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Analytic,
            url: None,
            analytic_spec: None,
            max_attempts: 3,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub num_timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            num_timesteps: gas_core::schedule::DEFAULT_NUM_TIMESTEPS,
            beta_start: gas_core::schedule::DEFAULT_BETA_START,
            beta_end: gas_core::schedule::DEFAULT_BETA_END,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientsSection {
    pub chat_endpoint: Option<String>,
    pub chat_model: String,
    pub detector_endpoint: Option<String>,
    pub detector_threshold: f64,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    /// Directory for cached chat responses; caching is off when unset.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ClientsSection {
    fn default() -> Self {
        Self {
            chat_endpoint: None,
            chat_model: "gpt-4o".into(),
            detector_endpoint: None,
            detector_threshold: gas_prep::clients::DEFAULT_SCORE_THRESHOLD,
            max_attempts: 3,
            timeout_secs: 120,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSection {
    pub height: usize,
    pub width: usize,
}

impl Default for LatentSection {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Mock embedder dimension.
    pub embedding_dim: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { embedding_dim: 512 }
    }
}

/// Fully resolved configuration of one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub output_dir: PathBuf,
    pub gas: GasConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleSection,
    pub backend: BackendSection,
    pub clients: ClientsSection,
    /// Mask resolution used when grounding boxes.
    pub latent: LatentSection,
    pub eval: EvalSection,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("gas-output"),
            gas: GasConfig::default(),
            optimizer: OptimizerConfig::default(),
            schedule: ScheduleSection::default(),
            backend: BackendSection::default(),
            clients: ClientsSection::default(),
            latent: LatentSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Recursively overlays `top` onto `base`; tables merge key by key.
fn overlay(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl JobConfig {
    /// Defaults overlaid with the TOML text. Unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        Self::from_toml_str_over(Self::default(), text)
    }

    /// `base` overlaid with the TOML text.
    pub fn from_toml_str_over(base: JobConfig, text: &str) -> CliResult<Self> {
        let file: toml::Value = toml::from_str(text)
            .map_err(|e| CliError::validation("config", format!("invalid config file: {e}")))?;
        let mut merged = toml::Value::try_from(base)
            .map_err(|e| CliError::new(crate::error::EXIT_INTERNAL, "config", e.to_string()))?;
        overlay(&mut merged, file);
        merged
            .try_into()
            .map_err(|e| CliError::validation("config", format!("invalid config file: {e}")))
    }

    pub fn schedule(&self) -> CliResult<DiffusionSchedule> {
        let s = &self.schedule;
        DiffusionSchedule::linear_beta(s.num_timesteps, s.beta_start, s.beta_end)
            .map_err(|e| CliError::gas("config", e))
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        let sched = self.schedule()?;
        self.gas
            .validate()
            .map_err(|e| CliError::gas("config", e))?;
        self.optimizer
            .validate(&sched)
            .map_err(|e| CliError::gas("config", e))?;
        let bad = |m: String| Err(CliError::validation("config", m));
        if self.latent.height == 0 || self.latent.width == 0 {
            return bad("latent dimensions must be positive".into());
        }
        if self.eval.embedding_dim == 0 {
            return bad("eval.embedding_dim must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.clients.detector_threshold) {
            return bad(format!(
                "clients.detector_threshold must be in [0, 1], got {}",
                self.clients.detector_threshold
            ));
        }
        if self.clients.max_attempts == 0 || self.backend.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        if self.backend.kind == BackendKind::Http && self.backend.url.is_none() {
            return bad("backend.url is required for the http backend".into());
        }
        Ok(())
    }
}
