use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{BackendKind, JobConfig};
use crate::error::{CliError, CliResult};

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gas",
    version,
    about = "Grounded multi-attribute image editing by score distillation"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Optimization step budget.
    #[arg(long, global = true, value_parser = positive)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub step_size: Option<f64>,
    /// Classifier-free guidance weight.
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Null-text penalty range.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Full-prompt weights per timestep band, comma separated, highest SNR first.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha_bands: Option<Vec<f64>>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Independent jobs to run in parallel, each with its own seed and directory.
    #[arg(long, global = true, value_parser = positive, default_value_t = 1)]
    pub jobs: usize,
    /// Leave wall-clock timings out of the manifest.
    #[arg(long, global = true)]
    pub no_timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a request, ground its phrases and write an edit plan.
    Plan(PlanArgs),
    /// Optimize a latent (or image) according to a plan.
    Edit(EditArgs),
    /// Score an edited image against its plan.
    Eval(EvalArgs),
    /// Run the synthetic analytic-backend demo and export gradient reports.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Edit request, e.g. "Change a dog into a cat."
    #[arg(
        long,
        required_unless_present = "scenario",
        conflicts_with = "scenario"
    )]
    pub request: Option<String>,
    /// Generate three synthetic requests and write one plan per request.
    #[arg(long)]
    pub scenario: bool,
    /// JSON fixture replayed by mock chat and detector clients.
    #[arg(long)]
    pub mock_clients: Option<PathBuf>,
    /// Show the subtask table and ask for confirmation before writing.
    #[arg(long)]
    pub review: bool,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Initial latent (JSON `{shape, data}`).
    #[arg(long, required_unless_present = "image", conflicts_with = "image")]
    pub latent: Option<PathBuf>,
    /// Source image; requires the http backend.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub plan: PathBuf,
    /// Gaussian data laws for the analytic backend.
    #[arg(long)]
    pub analytic_spec: Option<PathBuf>,
    /// Also save the latent every N steps.
    #[arg(long, value_parser = positive)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub edited: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = positive)]
    pub checkpoint_every: Option<usize>,
}

impl CommonArgs {
    /// Base config, overlaid by the file, then by these flags; validated.
    pub fn resolve(&self, base: JobConfig) -> CliResult<JobConfig> {
        let mut c = match &self.config {
            None => base,
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io("config", p, e))?;
                JobConfig::from_toml_str_over(base, &text)?
            }
        };
        if let Some(v) = self.seed {
            c.optimizer.seed = v;
        }
        if let Some(v) = self.steps {
            c.optimizer.max_steps = v;
        }
        if let Some(v) = self.step_size {
            c.optimizer.step_size = v;
        }
        if let Some(v) = self.omega {
            c.gas.omega = v;
        }
        if let Some(v) = self.eta {
            c.gas.eta = v;
        }
        if let Some(v) = &self.alpha_bands {
            c.gas.alpha_values = v.clone();
        }
        if let Some(v) = self.backend {
            c.backend.kind = v;
        }
        if let Some(v) = &self.out_dir {
            c.output_dir = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}
