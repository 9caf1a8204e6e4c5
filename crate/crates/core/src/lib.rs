//! Grounded multi-attribute image editing by score distillation.
//!
//! The optimized latent is pulled toward each target phrase only inside that
//! phrase's grounded mask, with a per-subtask null-text penalty and a
//! timestep-banded full-prompt guidance term over the union of the masks.

// `!(x >= 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod error;
pub mod gradient;
pub mod latent;
pub mod optimizer;
pub mod plan;
pub mod schedule;

pub use backend::{
    analytic_noise, cfg_combine, perturb, predict_noise, AnalyticBackend, Condition, ConditionKind,
    GaussianBackendSpec, NoiseQuery, ScoreBackend,
};
pub use error::{GasError, Result};
pub use gradient::{
    alpha_for_timestep, dds_gradient, gas_gradient, null_text_divergence_map, null_text_penalty,
    overlap_weights, sds_gradient, GradientReport,
};
pub use latent::{LatentGrid, LatentShape, Mask};
pub use optimizer::{
    apply_regularizer, run_edit, run_edit_with_hooks, EditResult, EditSession, OptimizerConfig,
    RegularizerHook, RegularizerRegistry,
};
pub use plan::{EditPlan, GasConfig, Subtask};
pub use schedule::{snr_band, DiffusionSchedule};
