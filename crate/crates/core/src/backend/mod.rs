//! Noise-prediction interface, forward perturbation and classifier-free
//! guidance.

mod analytic;
pub mod http;

pub use analytic::{analytic_noise, AnalyticBackend, GaussianBackendSpec};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};
use crate::latent::LatentGrid;
use crate::schedule::DiffusionSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Phrase,
    FullPrompt,
    Null,
}

/// Stable cache token for a condition; adapters key text-embedding caches on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmbeddingHandle(pub u64);

/// A text condition as presented to a [`ScoreBackend`].
///
/// The null condition is its own kind with empty text; phrase and full-prompt
/// conditions always carry non-empty text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    kind: ConditionKind,
    text: String,
}

impl Condition {
    pub fn new(kind: ConditionKind, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        match (kind, text.is_empty()) {
            (ConditionKind::Null, false) => {
                Err(GasError::invalid("null condition must have empty text"))
            }
            (ConditionKind::Phrase | ConditionKind::FullPrompt, true) => Err(GasError::invalid(
                "phrase and full-prompt conditions need non-empty text",
            )),
            _ => Ok(Self { kind, text }),
        }
    }

    /// Panics if `text` is empty.
    pub fn phrase(text: impl Into<String>) -> Self {
        Self::new(ConditionKind::Phrase, text).expect("phrase text must be non-empty")
    }

    /// Panics if `text` is empty.
    pub fn full_prompt(text: impl Into<String>) -> Self {
        Self::new(ConditionKind::FullPrompt, text).expect("prompt text must be non-empty")
    }

    pub fn null() -> Self {
        Self {
            kind: ConditionKind::Null,
            text: String::new(),
        }
    }

    pub fn kind(&self) -> ConditionKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_null(&self) -> bool {
        self.kind == ConditionKind::Null
    }

    /// FNV-1a over the kind tag and text.
    pub fn handle(&self) -> EmbeddingHandle {
        let tag: u8 = match self.kind {
            ConditionKind::Phrase => 1,
            ConditionKind::FullPrompt => 2,
            ConditionKind::Null => 0,
        };
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in std::iter::once(tag).chain(self.text.bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        EmbeddingHandle(h)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ConditionKind::Null => write!(f, "<null>"),
            _ => write!(f, "{:?}", self.text),
        }
    }
}

/// One entry of a batched noise-prediction request at a shared timestep.
#[derive(Debug, Clone, Copy)]
pub struct NoiseQuery<'a> {
    pub z_t: &'a LatentGrid,
    pub cond: &'a Condition,
}

/// Noise predictor `eps_hat(z_t, t, cond)`.
///
/// Implementations must be deterministic in their inputs and safe to call
/// concurrently from several jobs.
pub trait ScoreBackend: Send + Sync {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid>;

    /// Batched entry point; must agree with sequential `predict_noise` calls.
    fn predict_noise_batch(&self, t: usize, queries: &[NoiseQuery<'_>]) -> Result<Vec<LatentGrid>> {
        queries
            .iter()
            .map(|q| self.predict_noise(q.z_t, t, q.cond))
            .collect()
    }
}

impl<B: ScoreBackend + ?Sized> ScoreBackend for &B {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid> {
        (**self).predict_noise(z_t, t, cond)
    }

    fn predict_noise_batch(&self, t: usize, queries: &[NoiseQuery<'_>]) -> Result<Vec<LatentGrid>> {
        (**self).predict_noise_batch(t, queries)
    }
}

impl<B: ScoreBackend + ?Sized> ScoreBackend for Box<B> {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize, cond: &Condition) -> Result<LatentGrid> {
        (**self).predict_noise(z_t, t, cond)
    }

    fn predict_noise_batch(&self, t: usize, queries: &[NoiseQuery<'_>]) -> Result<Vec<LatentGrid>> {
        (**self).predict_noise_batch(t, queries)
    }
}

fn check_prediction(input: &LatentGrid, out: &LatentGrid) -> Result<()> {
    if out.shape() != input.shape() {
        return Err(GasError::Backend {
            message: format!(
                "prediction shape {} differs from input shape {}",
                out.shape(),
                input.shape()
            ),
            attempts: 1,
        });
    }
    if !out.is_finite() {
        return Err(GasError::Backend {
            message: "prediction contains non-finite values".into(),
            attempts: 1,
        });
    }
    Ok(())
}

/// Queries the backend and checks the output contract (same shape, finite).
pub fn predict_noise<B: ScoreBackend + ?Sized>(
    backend: &B,
    z_t: &LatentGrid,
    t: usize,
    cond: &Condition,
) -> Result<LatentGrid> {
    let out = backend.predict_noise(z_t, t, cond)?;
    check_prediction(z_t, &out)?;
    Ok(out)
}

/// Batched form of [`predict_noise`] with the same output checks.
pub fn predict_noise_batch<B: ScoreBackend + ?Sized>(
    backend: &B,
    t: usize,
    queries: &[NoiseQuery<'_>],
) -> Result<Vec<LatentGrid>> {
    let out = backend.predict_noise_batch(t, queries)?;
    if out.len() != queries.len() {
        return Err(GasError::Backend {
            message: format!(
                "batch returned {} predictions for {} queries",
                out.len(),
                queries.len()
            ),
            attempts: 1,
        });
    }
    for (q, o) in queries.iter().zip(&out) {
        check_prediction(q.z_t, o)?;
    }
    Ok(out)
}

/// Variance-preserving forward process at a given `alpha_bar`.
pub fn perturb_with_alpha_bar(
    z: &LatentGrid,
    eps: &LatentGrid,
    alpha_bar: f64,
) -> Result<LatentGrid> {
    z.ensure_same_shape(eps, "perturb")?;
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(GasError::invalid(format!(
            "alpha_bar {alpha_bar} outside [0, 1]"
        )));
    }
    Ok(z.lin_comb(alpha_bar.sqrt(), eps, (1.0 - alpha_bar).sqrt()))
}

/// `z_t = sqrt(alpha_bar_t) z + sqrt(1 - alpha_bar_t) eps`.
pub fn perturb(
    z: &LatentGrid,
    t: usize,
    eps: &LatentGrid,
    sched: &DiffusionSchedule,
) -> Result<LatentGrid> {
    perturb_with_alpha_bar(z, eps, sched.alpha_bar(t)?)
}

/// Classifier-free guidance: `eps_null + omega * (eps_cond - eps_null)`.
pub fn cfg_combine(eps_cond: &LatentGrid, eps_null: &LatentGrid, omega: f64) -> Result<LatentGrid> {
    eps_cond.ensure_same_shape(eps_null, "cfg_combine")?;
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(GasError::invalid(format!(
            "guidance weight {omega} must be finite and >= 0"
        )));
    }
    if omega == 1.0 {
        return Ok(eps_cond.clone());
    }
    let mut out = eps_null.clone();
    out.add_scaled(omega, &eps_cond.sub(eps_null));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::LatentShape;

    fn shape() -> LatentShape {
        LatentShape::new(2, 3, 3)
    }

    #[test]
    fn perturb_endpoints_and_arithmetic() {
        let z = LatentGrid::from_fn(shape(), |(c, y, x)| (c + 2 * y + 3 * x) as f64 * 0.1);
        let eps = LatentGrid::from_fn(shape(), |(c, y, x)| (c * y) as f64 - x as f64);
        assert_eq!(perturb_with_alpha_bar(&z, &eps, 1.0).unwrap(), z);
        assert_eq!(perturb_with_alpha_bar(&z, &eps, 0.0).unwrap(), eps);

        let out = perturb_with_alpha_bar(
            &LatentGrid::filled(shape(), 1.0),
            &LatentGrid::filled(shape(), 0.5),
            0.64,
        )
        .unwrap();
        for v in out.array() {
            assert!((v - 1.1).abs() < 1e-15);
        }
    }

    #[test]
    fn perturb_shape_mismatch() {
        let z = LatentGrid::zeros(shape());
        let eps = LatentGrid::zeros(LatentShape::new(1, 3, 3));
        assert!(matches!(
            perturb_with_alpha_bar(&z, &eps, 0.5),
            Err(GasError::InvalidArgument(_))
        ));
        let sched = DiffusionSchedule::default();
        assert!(perturb(&z, 1000, &z, &sched).is_err());
    }

    #[test]
    fn cfg_examples() {
        let a = LatentGrid::filled(shape(), 0.2);
        let b = LatentGrid::filled(shape(), 0.1);
        assert_eq!(cfg_combine(&a, &b, 1.0).unwrap(), a);
        assert_eq!(cfg_combine(&a, &b, 0.0).unwrap(), b);
        let g = cfg_combine(&a, &b, 7.5).unwrap();
        for v in g.array() {
            assert!((v - 0.85).abs() < 1e-14);
        }
        assert!(cfg_combine(&a, &b, -1.0).is_err());
        assert!(cfg_combine(&a, &LatentGrid::zeros(LatentShape::new(1, 1, 1)), 2.0).is_err());
    }

    #[test]
    fn cfg_idempotent_on_equal_inputs() {
        let a = LatentGrid::from_fn(shape(), |(c, y, x)| (c + y + x) as f64);
        for omega in [0.0, 0.5, 2.0, 7.5] {
            assert_eq!(cfg_combine(&a, &a, omega).unwrap(), a);
        }
    }

    #[test]
    fn condition_invariants() {
        assert!(Condition::new(ConditionKind::Null, "x").is_err());
        assert!(Condition::new(ConditionKind::Phrase, "").is_err());
        assert!(Condition::null().is_null());
        assert_ne!(
            Condition::phrase("a cat").handle(),
            Condition::full_prompt("a cat").handle()
        );
        assert_eq!(
            Condition::phrase("a cat").handle(),
            Condition::phrase("a cat").handle()
        );
    }
}
