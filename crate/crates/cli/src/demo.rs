//! Synthetic two-object edit on an 8x8 single-channel latent.
//!
//! The top-left quadrant should brighten to +1 and the bottom-right quadrant
//! darken to -1 under the analytic backend.

use gas_core::{EditPlan, GaussianBackendSpec, LatentGrid, LatentShape, Mask, Subtask};

use crate::config::JobConfig;

pub const SHAPE: LatentShape = LatentShape {
    channels: 1,
    height: 8,
    width: 8,
};

pub const SOURCE_PROMPT: &str = "A gray square and a gray disc on a gray floor.";
pub const TARGET_PROMPT: &str = "A white square and a black disc on a gray floor.";

#[derive(Debug, Clone)]
pub struct DemoProblem {
    pub z0: LatentGrid,
    pub plan: EditPlan,
    pub spec: GaussianBackendSpec,
    /// Target condition mean on each subtask's mask.
    pub target_means: Vec<f64>,
}

pub fn masks() -> [Mask; 2] {
    [Mask::rect(8, 8, 0, 4, 0, 4), Mask::rect(8, 8, 4, 8, 4, 8)]
}

fn on_mask(mask: &Mask, value: f64) -> LatentGrid {
    LatentGrid::from_fn(
        SHAPE,
        |(_, y, x)| if mask.contains(y, x) { value } else { 0.0 },
    )
}

pub fn demo_problem() -> DemoProblem {
    let [m1, m2] = masks();
    let zero = LatentGrid::zeros(SHAPE);
    let target_full = on_mask(&m1, 1.0).add(&on_mask(&m2, -1.0));
    let spec = GaussianBackendSpec::new(1.0, zero.clone())
        .and_then(|s| s.with_mean("a gray square", zero.clone()))
        .and_then(|s| s.with_mean("a gray disc", zero.clone()))
        .and_then(|s| s.with_mean("a white square", on_mask(&m1, 1.0)))
        .and_then(|s| s.with_mean("a black disc", on_mask(&m2, -1.0)))
        .and_then(|s| s.with_mean(SOURCE_PROMPT, zero.clone()))
        .and_then(|s| s.with_mean(TARGET_PROMPT, target_full))
        .expect("demo spec is valid");
    let plan = EditPlan::new(
        SOURCE_PROMPT,
        TARGET_PROMPT,
        vec![
            Subtask::new("a gray square", "a white square", m1, false, false),
            Subtask::new("a gray disc", "a black disc", m2, false, false),
        ],
    )
    .expect("demo plan is valid");
    DemoProblem {
        z0: zero,
        plan,
        spec,
        target_means: vec![1.0, -1.0],
    }
}

/// Guidance 2, step 0.05, seed 7, 500 steps; other settings at defaults.
pub fn demo_config() -> JobConfig {
    let mut c = JobConfig::default();
    c.gas.omega = 2.0;
    c.optimizer.step_size = 0.05;
    c.optimizer.seed = 7;
    c.optimizer.max_steps = 500;
    c.latent.height = SHAPE.height;
    c.latent.width = SHAPE.width;
    c
}
