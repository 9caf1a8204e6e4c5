use std::collections::BTreeMap;

use crate::backend::{Condition, ScoreBackend};
use crate::error::{GasError, Result};
use crate::latent::{LatentGrid, LatentShape};
use crate::schedule::DiffusionSchedule;

/// Data law `N(mu_c, variance * I)` per condition text, plus the law used for
/// the null condition.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBackendSpec {
    means: BTreeMap<String, LatentGrid>,
    variance: f64,
    null_mean: LatentGrid,
}

impl GaussianBackendSpec {
    /// `variance` may be zero (deterministic data); the predictor is then
    /// undefined only at `alpha_bar = 1`.
    pub fn new(variance: f64, null_mean: LatentGrid) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(GasError::Config(format!(
                "variance must be finite and non-negative, got {variance}"
            )));
        }
        Ok(Self {
            means: BTreeMap::new(),
            variance,
            null_mean,
        })
    }

    pub fn with_mean(mut self, text: impl Into<String>, mean: LatentGrid) -> Result<Self> {
        self.insert_mean(text, mean)?;
        Ok(self)
    }

    pub fn insert_mean(&mut self, text: impl Into<String>, mean: LatentGrid) -> Result<()> {
        let text = text.into();
        if text.is_empty() {
            return Err(GasError::Config("condition text must be non-empty".into()));
        }
        mean.ensure_same_shape(&self.null_mean, "condition mean")?;
        self.means.insert(text, mean);
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn null_mean(&self) -> &LatentGrid {
        &self.null_mean
    }

    pub fn means(&self) -> &BTreeMap<String, LatentGrid> {
        &self.means
    }

    pub fn shape(&self) -> LatentShape {
        self.null_mean.shape()
    }

    pub fn mean_for(&self, cond: &Condition) -> Result<&LatentGrid> {
        if cond.is_null() {
            return Ok(&self.null_mean);
        }
        self.means
            .get(cond.text())
            .ok_or_else(|| GasError::ConditionNotFound(cond.text().to_string()))
    }
}

/// Exact MMSE noise predictor for the Gaussian data law of `cond`:
/// `sqrt(1 - a) (z_t - sqrt(a) mu) / (a var + 1 - a)` with `a = alpha_bar_t`.
pub fn analytic_noise(
    spec: &GaussianBackendSpec,
    z_t: &LatentGrid,
    t: usize,
    cond: &Condition,
    sched: &DiffusionSchedule,
) -> Result<LatentGrid> {
    let mu = spec.mean_for(cond)?;
    z_t.ensure_same_shape(mu, "analytic_noise")?;
    let a = sched.alpha_bar(t)?;
    let denom = a * spec.variance + 1.0 - a;
    if denom <= 0.0 {
        return Err(GasError::invalid(format!(
            "analytic predictor undefined at alpha_bar = {a} with variance {}",
            spec.variance
        )));
    }
    let k = (1.0 - a).sqrt() / denom;
    Ok(z_t.lin_comb(k, mu, -k * a.sqrt()))
}

/// [`ScoreBackend`] backed by [`analytic_noise`]. Pure, so trivially reentrant.
#[derive(Debug, Clone)]
pub struct AnalyticBackend {
    spec: GaussianBackendSpec,
    sched: DiffusionSchedule,
}

impl AnalyticBackend {
    pub fn new(spec: GaussianBackendSpec, sched: DiffusionSchedule) -> Self {
        Self { spec, sched }
    }

    pub fn spec(&self) -> &GaussianBackendSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.sched
    }
}

impl ScoreBackend for AnalyticBackend {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid> {
        analytic_noise(&self.spec, z_t, t, cond, &self.sched)
    }
}
