//! Edit plans and the gradient-engine configuration.

use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};
use crate::latent::Mask;

/// One attribute edit: replace `source_phrase` with `target_phrase` inside `mask`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subtask {
    pub source_phrase: String,
    pub target_phrase: String,
    pub mask: Mask,
    pub preserve_form: bool,
    /// Frozen at plan time from the mask's area ratio.
    pub penalty_eligible: bool,
}

impl Subtask {
    pub fn new(
        source_phrase: impl Into<String>,
        target_phrase: impl Into<String>,
        mask: Mask,
        preserve_form: bool,
        penalty_eligible: bool,
    ) -> Self {
        Self {
            source_phrase: source_phrase.into(),
            target_phrase: target_phrase.into(),
            mask,
            preserve_form,
            penalty_eligible,
        }
    }
}

/// Full source/target prompts plus their per-region subtasks.
#[derive(Debug, Clone, PartialEq)]
pub struct EditPlan {
    source_prompt: String,
    target_prompt: String,
    subtasks: Vec<Subtask>,
    union_mask: Mask,
}

impl EditPlan {
    /// Validates the subtasks and computes the union mask.
    pub fn new(
        source_prompt: impl Into<String>,
        target_prompt: impl Into<String>,
        subtasks: Vec<Subtask>,
    ) -> Result<Self> {
        let source_prompt = source_prompt.into();
        let target_prompt = target_prompt.into();
        if source_prompt.trim().is_empty() || target_prompt.trim().is_empty() {
            return Err(GasError::invalid(
                "full source and target prompts must be non-empty",
            ));
        }
        let Some(first) = subtasks.first() else {
            return Err(GasError::DegeneratePlan("plan has no subtasks".into()));
        };
        let dims = first.mask.dims();
        let mut union_mask = Mask::empty(dims.0, dims.1);
        for (k, s) in subtasks.iter().enumerate() {
            if s.source_phrase.trim().is_empty() || s.target_phrase.trim().is_empty() {
                return Err(GasError::invalid(format!(
                    "subtask {k} has an empty phrase"
                )));
            }
            if s.mask.dims() != dims {
                return Err(GasError::invalid(format!(
                    "subtask {k} mask is {:?}, expected {dims:?}",
                    s.mask.dims()
                )));
            }
            if s.mask.area() == 0 {
                return Err(GasError::DegeneratePlan(format!(
                    "subtask {k} ({:?}) has an empty mask",
                    s.source_phrase
                )));
            }
            union_mask = union_mask.union(&s.mask);
        }
        Ok(Self {
            source_prompt,
            target_prompt,
            subtasks,
            union_mask,
        })
    }

    pub fn source_prompt(&self) -> &str {
        &self.source_prompt
    }

    pub fn target_prompt(&self) -> &str {
        &self.target_prompt
    }

    pub fn subtasks(&self) -> &[Subtask] {
        &self.subtasks
    }

    pub fn union_mask(&self) -> &Mask {
        &self.union_mask
    }

    pub fn mask_dims(&self) -> (usize, usize) {
        self.union_mask.dims()
    }

    /// Union of the masks of subtasks flagged `preserve_form`, if any.
    pub fn preserve_mask(&self) -> Option<Mask> {
        self.subtasks
            .iter()
            .filter(|s| s.preserve_form)
            .map(|s| s.mask.clone())
            .reduce(|a, b| a.union(&b))
    }
}

/// Weights and thresholds of the grounded score gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    /// Classifier-free guidance weight.
    pub omega: f64,
    /// Range of the null-text penalty.
    pub eta: f64,
    /// Full-prompt guidance weight per timestep band, highest SNR first.
    pub alpha_values: Vec<f64>,
    /// Factor applied to the larger mask's share of an overlap.
    pub overlap_factor: f64,
    /// Masks covering less than this fraction of the grid get the penalty.
    pub area_threshold: f64,
    /// Constant `w'(t)`.
    pub loss_weight: f64,
    /// Global switch for the null-text penalty.
    pub null_text_penalty: bool,
}

impl Default for GasConfig {
    fn default() -> Self {
        Self {
            omega: 7.5,
            eta: 5.0,
            alpha_values: vec![0.5, 0.4, 0.3, 0.2, 0.1],
            overlap_factor: 0.3,
            area_threshold: 0.15,
            loss_weight: 1.0,
            null_text_penalty: true,
        }
    }
}

impl GasConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GasError::Config(m));
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad(format!("omega must be >= 0, got {}", self.omega));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if self.alpha_values.is_empty() {
            return bad("alpha_values must have at least one band".into());
        }
        if self.alpha_values.iter().any(|a| !a.is_finite()) {
            return bad("alpha_values must be finite".into());
        }
        if self.alpha_values.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!(
                "alpha_values must be nonincreasing: {:?}",
                self.alpha_values
            ));
        }
        if !(self.overlap_factor > 0.0 && self.overlap_factor <= 1.0) {
            return bad(format!(
                "overlap_factor must be in (0, 1], got {}",
                self.overlap_factor
            ));
        }
        if !(self.area_threshold > 0.0 && self.area_threshold <= 1.0) {
            return bad(format!(
                "area_threshold must be in (0, 1], got {}",
                self.area_threshold
            ));
        }
        if !self.loss_weight.is_finite() {
            return bad("loss_weight must be finite".into());
        }
        Ok(())
    }

    pub fn num_bands(&self) -> usize {
        self.alpha_values.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(mask: Mask) -> Subtask {
        Subtask::new("a dog", "a cat", mask, false, false)
    }

    #[test]
    fn union_is_or_of_masks() {
        let a = Mask::rect(8, 8, 0, 2, 0, 3);
        let b = Mask::rect(8, 8, 1, 3, 1, 4);
        let plan = EditPlan::new("X", "Y", vec![sub(a.clone()), sub(b.clone())]).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(
                    plan.union_mask().contains(y, x),
                    a.contains(y, x) || b.contains(y, x)
                );
            }
        }
        assert_eq!(plan.union_mask().area(), 6 + 6 - 2);
    }

    #[test]
    fn rejects_degenerate_plans() {
        assert!(matches!(
            EditPlan::new("X", "Y", vec![]),
            Err(GasError::DegeneratePlan(_))
        ));
        assert!(matches!(
            EditPlan::new("X", "Y", vec![sub(Mask::empty(4, 4))]),
            Err(GasError::DegeneratePlan(_))
        ));
        assert!(
            EditPlan::new("X", "Y", vec![sub(Mask::full(4, 4)), sub(Mask::full(4, 5))]).is_err()
        );
        assert!(EditPlan::new("", "Y", vec![sub(Mask::full(4, 4))]).is_err());
    }

    #[test]
    fn default_config_is_valid() {
        GasConfig::default().validate().unwrap();
        for bad in [
            GasConfig {
                alpha_values: vec![0.1, 0.5],
                ..GasConfig::default()
            },
            GasConfig {
                overlap_factor: 0.0,
                ..GasConfig::default()
            },
            GasConfig {
                eta: 0.0,
                ..GasConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn preserve_mask_unions_flagged_subtasks() {
        let mut s1 = sub(Mask::rect(4, 4, 0, 1, 0, 4));
        s1.preserve_form = true;
        let s2 = sub(Mask::rect(4, 4, 3, 4, 0, 4));
        let plan = EditPlan::new("X", "Y", vec![s1.clone(), s2.clone()]).unwrap();
        assert_eq!(plan.preserve_mask(), Some(s1.mask));
        let plan = EditPlan::new("X", "Y", vec![s2]).unwrap();
        assert_eq!(plan.preserve_mask(), None);
    }
}
