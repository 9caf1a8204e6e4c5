//! SGD loop over the latent driven by [`gas_gradient`].

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backend::ScoreBackend;
use crate::error::{GasError, Result};
use crate::gradient::{gas_gradient, GradientReport};
use crate::latent::{LatentGrid, LatentShape};
use crate::plan::{EditPlan, GasConfig};
use crate::schedule::DiffusionSchedule;

/// Latent norm beyond which a run is declared diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_steps: usize,
    pub step_size: f64,
    /// Inclusive bounds of the uniform timestep draw.
    pub t_min: usize,
    pub t_max: usize,
    pub seed: u64,
    pub convergence_window: usize,
    /// Threshold on the windowed mean of the per-element RMS of the masked
    /// gradient. Zero disables early stopping.
    pub convergence_tol: f64,
    /// Structure-preservation hook id; `None` means the no-op hook.
    pub regularizer: Option<String>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_steps: 500,
            step_size: 0.1,
            t_min: 50,
            t_max: 950,
            seed: 0,
            convergence_window: 50,
            convergence_tol: 1e-3,
            regularizer: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, sched: &DiffusionSchedule) -> Result<()> {
        let bad = |m: String| Err(GasError::Config(m));
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad(format!(
                "step_size must be finite and >= 0, got {}",
                self.step_size
            ));
        }
        if !(self.t_min < self.t_max && self.t_max < sched.num_timesteps()) {
            return bad(format!(
                "need 0 <= t_min < t_max < {}, got [{}, {}]",
                sched.num_timesteps(),
                self.t_min,
                self.t_max
            ));
        }
        if self.convergence_window == 0 {
            return bad("convergence_window must be at least 1".into());
        }
        if !(self.convergence_tol >= 0.0) {
            return bad(format!(
                "convergence_tol must be >= 0, got {}",
                self.convergence_tol
            ));
        }
        Ok(())
    }
}

/// Independent RNG seed for job `job_id` of a batch started from `seed`.
pub fn derive_job_seed(seed: u64, job_id: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut x = seed ^ job_id.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seeded source of `(t, eps)` draws.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    rng: ChaCha8Rng,
    t_min: usize,
    t_max: usize,
}

impl NoiseSampler {
    pub fn new(seed: u64, t_min: usize, t_max: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            t_min,
            t_max,
        }
    }

    /// Draws the timestep, then the noise in row-major order.
    pub fn sample(&mut self, shape: LatentShape) -> (usize, LatentGrid) {
        let t = self.rng.random_range(self.t_min..=self.t_max);
        let rng = &mut self.rng;
        let eps = LatentGrid::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal));
        (t, eps)
    }
}

/// Additive structure-preservation gradient term.
pub trait RegularizerHook: Send + Sync {
    fn gradient(&self, z: &LatentGrid, z0: &LatentGrid, plan: &EditPlan) -> LatentGrid;
}

/// Zero term.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopRegularizer;

impl RegularizerHook for NoopRegularizer {
    fn gradient(&self, z: &LatentGrid, _z0: &LatentGrid, _plan: &EditPlan) -> LatentGrid {
        LatentGrid::zeros(z.shape())
    }
}

/// `strength * (z - z0)`: pulls preserved regions back toward the source.
#[derive(Debug, Clone, Copy)]
pub struct AnchorRegularizer {
    pub strength: f64,
}

impl RegularizerHook for AnchorRegularizer {
    fn gradient(&self, z: &LatentGrid, z0: &LatentGrid, _plan: &EditPlan) -> LatentGrid {
        z.sub(z0).scale(self.strength)
    }
}

/// Hook lookup by id. Built in: `none`, `anchor` and `anchor:<strength>`.
#[derive(Clone, Default)]
pub struct RegularizerRegistry {
    hooks: BTreeMap<String, Arc<dyn RegularizerHook>>,
}

impl std::fmt::Debug for RegularizerRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.hooks.keys()).finish()
    }
}

impl RegularizerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: impl Into<String>, hook: Arc<dyn RegularizerHook>) {
        self.hooks.insert(id.into(), hook);
    }

    pub fn resolve(&self, id: Option<&str>) -> Result<Arc<dyn RegularizerHook>> {
        let Some(id) = id else {
            return Ok(Arc::new(NoopRegularizer));
        };
        if let Some(h) = self.hooks.get(id) {
            return Ok(h.clone());
        }
        match id.split_once(':') {
            _ if id == "none" => Ok(Arc::new(NoopRegularizer)),
            _ if id == "anchor" => Ok(Arc::new(AnchorRegularizer { strength: 1.0 })),
            Some(("anchor", s)) => match s.parse::<f64>() {
                Ok(strength) if strength.is_finite() && strength >= 0.0 => {
                    Ok(Arc::new(AnchorRegularizer { strength }))
                }
                _ => Err(GasError::Config(format!("invalid anchor strength {s:?}"))),
            },
            _ => Err(GasError::Config(format!("unknown regularizer hook {id:?}"))),
        }
    }
}

/// Hook term restricted to the union of `preserve_form` masks; zero when no
/// subtask asks for shape preservation.
pub fn apply_regularizer(
    hook: &dyn RegularizerHook,
    z: &LatentGrid,
    z0: &LatentGrid,
    plan: &EditPlan,
) -> LatentGrid {
    match plan.preserve_mask() {
        Some(mask) => hook.gradient(z, z0, plan).masked(&mask),
        None => LatentGrid::zeros(z.shape()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub final_latent: LatentGrid,
    pub steps_run: usize,
    pub reports: Vec<GradientReport>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Running,
    Converged,
    Exhausted,
}

/// Stepwise optimization state. Keeps the last finite latent available when a
/// step fails so callers can preserve partial output.
pub struct EditSession<'a, B: ScoreBackend + ?Sized> {
    backend: &'a B,
    plan: &'a EditPlan,
    sched: &'a DiffusionSchedule,
    gas: &'a GasConfig,
    opt: &'a OptimizerConfig,
    hook: Arc<dyn RegularizerHook>,
    sampler: NoiseSampler,
    z0: LatentGrid,
    z: LatentGrid,
    reports: Vec<GradientReport>,
    window: VecDeque<f64>,
    status: StepStatus,
}

impl<'a, B: ScoreBackend + ?Sized> EditSession<'a, B> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        z0: LatentGrid,
        plan: &'a EditPlan,
        backend: &'a B,
        sched: &'a DiffusionSchedule,
        gas: &'a GasConfig,
        opt: &'a OptimizerConfig,
        hooks: &RegularizerRegistry,
    ) -> Result<Self> {
        gas.validate()?;
        opt.validate(sched)?;
        if !z0.is_finite() {
            return Err(GasError::invalid("initial latent is not finite"));
        }
        let s = z0.shape();
        if plan.mask_dims() != (s.height, s.width) {
            return Err(GasError::invalid(format!(
                "plan masks are {:?} but latent is {s}",
                plan.mask_dims()
            )));
        }
        let hook = hooks.resolve(opt.regularizer.as_deref())?;
        Ok(Self {
            backend,
            plan,
            sched,
            gas,
            opt,
            hook,
            sampler: NoiseSampler::new(opt.seed, opt.t_min, opt.t_max),
            z: z0.clone(),
            z0,
            reports: Vec::new(),
            window: VecDeque::with_capacity(opt.convergence_window),
            status: StepStatus::Running,
        })
    }

    pub fn latent(&self) -> &LatentGrid {
        &self.z
    }

    pub fn reference(&self) -> &LatentGrid {
        &self.z0
    }

    pub fn reports(&self) -> &[GradientReport] {
        &self.reports
    }

    pub fn steps_run(&self) -> usize {
        self.reports.len()
    }

    pub fn status(&self) -> StepStatus {
        self.status
    }

    /// Runs one SGD step. A no-op once the session has stopped.
    pub fn step(&mut self) -> Result<StepStatus> {
        if self.status != StepStatus::Running {
            return Ok(self.status);
        }
        let step_index = self.reports.len();
        let (t, eps) = self.sampler.sample(self.z.shape());
        let (grad, report) = gas_gradient(
            self.backend,
            &self.z,
            &self.z0,
            self.plan,
            t,
            &eps,
            self.sched,
            self.gas,
        )?;
        let reg = apply_regularizer(self.hook.as_ref(), &self.z, &self.z0, self.plan);

        let mut next = self.z.clone();
        next.add_scaled(-self.opt.step_size, &grad);
        next.add_scaled(-self.opt.step_size, &reg);
        let norm = next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(GasError::Diverged {
                step: step_index,
                norm,
            });
        }
        self.z = next;

        let masked_elems = (self.plan.union_mask().area() * self.z.shape().channels) as f64;
        let rms = report.grad_norm_inside / masked_elems.sqrt();
        self.reports.push(report);
        if self.window.len() == self.opt.convergence_window {
            self.window.pop_front();
        }
        self.window.push_back(rms);

        self.status = if self.window.len() == self.opt.convergence_window
            && self.window.iter().sum::<f64>() / (self.window.len() as f64)
                < self.opt.convergence_tol
        {
            StepStatus::Converged
        } else if self.reports.len() >= self.opt.max_steps {
            StepStatus::Exhausted
        } else {
            StepStatus::Running
        };
        Ok(self.status)
    }

    /// Steps until convergence or the step budget, calling `observe` after
    /// every step.
    pub fn run_with(
        mut self,
        mut observe: impl FnMut(usize, &LatentGrid, &[GradientReport]),
    ) -> Result<EditResult> {
        while self.step()? == StepStatus::Running {
            observe(self.reports.len(), &self.z, &self.reports);
        }
        observe(self.reports.len(), &self.z, &self.reports);
        Ok(self.finish())
    }

    pub fn finish(self) -> EditResult {
        EditResult {
            converged: self.status == StepStatus::Converged,
            steps_run: self.reports.len(),
            final_latent: self.z,
            reports: self.reports,
        }
    }
}

/// Optimizes `z0` toward the plan's targets with the configured hooks.
#[allow(clippy::too_many_arguments)]
pub fn run_edit_with_hooks<B: ScoreBackend + ?Sized>(
    z0: &LatentGrid,
    plan: &EditPlan,
    backend: &B,
    sched: &DiffusionSchedule,
    gas_config: &GasConfig,
    opt_config: &OptimizerConfig,
    hooks: &RegularizerRegistry,
) -> Result<EditResult> {
    EditSession::new(
        z0.clone(),
        plan,
        backend,
        sched,
        gas_config,
        opt_config,
        hooks,
    )?
    .run_with(|_, _, _| {})
}

/// [`run_edit_with_hooks`] with only the built-in hooks.
pub fn run_edit<B: ScoreBackend + ?Sized>(
    z0: &LatentGrid,
    plan: &EditPlan,
    backend: &B,
    sched: &DiffusionSchedule,
    gas_config: &GasConfig,
    opt_config: &OptimizerConfig,
) -> Result<EditResult> {
    run_edit_with_hooks(
        z0,
        plan,
        backend,
        sched,
        gas_config,
        opt_config,
        &RegularizerRegistry::new(),
    )
}
