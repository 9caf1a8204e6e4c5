//! Plan assembly and the on-disk plan format.

use std::fs;
use std::path::Path;

use gas_core::{EditPlan, GasConfig, GasError, Mask, Subtask};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PrepError, Result};
use crate::grounding::GroundingBox;
use crate::parse::PlanDraft;

/// Builds the edit plan from a draft and one mask per subtask. Penalty
/// eligibility is fixed here from each mask's area ratio.
pub fn assemble_plan(draft: &PlanDraft, masks: &[Mask], gas: &GasConfig) -> Result<EditPlan> {
    if masks.len() != draft.subtask_count() {
        return Err(PrepError::MalformedPlan(format!(
            "{} masks for {} subtasks",
            masks.len(),
            draft.subtask_count()
        )));
    }
    let subtasks = draft
        .subtasks()
        .zip(masks)
        .map(|((src, tgt, keep), m)| {
            if m.area() == 0 {
                return Err(PrepError::Plan(GasError::DegeneratePlan(format!(
                    "mask for {src:?} is empty"
                ))));
            }
            let eligible = m.area_ratio() < gas.area_threshold;
            Ok(Subtask::new(src, tgt, m.clone(), keep, eligible))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EditPlan::new(
        draft.source_prompt(),
        draft.target_prompt(),
        subtasks,
    )?)
}

/// Row-major run lengths alternating unset/set, starting with unset
/// (the first run may be 0).
pub fn encode_rle(mask: &Mask) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &v in mask.grid().iter() {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[usize], (h, w): (usize, usize)) -> Result<Mask> {
    let total: usize = runs.iter().sum();
    if total != h * w {
        return Err(PrepError::MalformedPlan(format!(
            "mask runs cover {total} cells, expected {}",
            h * w
        )));
    }
    let mut cells = Vec::with_capacity(total);
    for (i, &n) in runs.iter().enumerate() {
        cells.extend(std::iter::repeat_n(i % 2 == 1, n));
    }
    let grid = Array2::from_shape_vec((h, w), cells).expect("length checked");
    Ok(Mask::new(grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFileSubtask {
    pub source_phrase: String,
    pub target_phrase: String,
    /// Detector box `[x0, y0, x1, y1]` in pixels; absent for external masks.
    pub box_px: Option<[f64; 4]>,
    pub mask_rle: Vec<usize>,
    pub preserve_form: bool,
    pub penalty_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub source_prompt: String,
    pub target_prompt: String,
    pub subtasks: Vec<PlanFileSubtask>,
    pub latent_dims: [usize; 2],
}

impl PlanFile {
    /// `boxes` is either empty or aligned with the plan's subtasks.
    pub fn from_plan(plan: &EditPlan, boxes: &[GroundingBox]) -> Result<Self> {
        if !boxes.is_empty() && boxes.len() != plan.subtasks().len() {
            return Err(PrepError::MalformedPlan(format!(
                "{} boxes for {} subtasks",
                boxes.len(),
                plan.subtasks().len()
            )));
        }
        let (h, w) = plan.mask_dims();
        Ok(Self {
            source_prompt: plan.source_prompt().to_string(),
            target_prompt: plan.target_prompt().to_string(),
            subtasks: plan
                .subtasks()
                .iter()
                .enumerate()
                .map(|(i, s)| PlanFileSubtask {
                    source_phrase: s.source_phrase.clone(),
                    target_phrase: s.target_phrase.clone(),
                    box_px: boxes.get(i).map(GroundingBox::coords),
                    mask_rle: encode_rle(&s.mask),
                    preserve_form: s.preserve_form,
                    penalty_eligible: s.penalty_eligible,
                })
                .collect(),
            latent_dims: [h, w],
        })
    }

    pub fn to_plan(&self) -> Result<EditPlan> {
        let dims = (self.latent_dims[0], self.latent_dims[1]);
        let subtasks = self
            .subtasks
            .iter()
            .map(|s| {
                Ok(Subtask::new(
                    &s.source_phrase,
                    &s.target_phrase,
                    decode_rle(&s.mask_rle, dims)?,
                    s.preserve_form,
                    s.penalty_eligible,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EditPlan::new(
            &self.source_prompt,
            &self.target_prompt,
            subtasks,
        )?)
    }

    /// Canonical form: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| PrepError::parse(format!("bad plan file: {e}"), text))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft(n: usize) -> PlanDraft {
        let mut s: Vec<String> = (0..n).map(|i| format!("src {i}")).collect();
        let mut t: Vec<String> = (0..n).map(|i| format!("tgt {i}")).collect();
        s.push("Source scene.".into());
        t.push("Target scene.".into());
        PlanDraft::new(s, t, vec![false; n + 1]).unwrap()
    }

    #[test]
    fn eligibility_follows_area_ratio() {
        // 10 and 40 cells of a 10x10 grid.
        let small = Mask::rect(10, 10, 0, 1, 0, 10);
        let large = Mask::rect(10, 10, 2, 6, 0, 10);
        let plan = assemble_plan(&draft(2), &[small, large], &GasConfig::default()).unwrap();
        let flags: Vec<bool> = plan.subtasks().iter().map(|s| s.penalty_eligible).collect();
        assert_eq!(flags, [true, false]);
    }

    #[test]
    fn union_areas() {
        let a = Mask::rect(8, 8, 0, 1, 0, 5);
        let b = Mask::rect(8, 8, 2, 3, 0, 7);
        let plan = assemble_plan(&draft(2), &[a.clone(), b], &GasConfig::default()).unwrap();
        assert_eq!(plan.union_mask().area(), 12);

        // 5 and 7 cells sharing 3.
        let c = Mask::rect(8, 8, 0, 1, 2, 7).union(&Mask::rect(8, 8, 1, 2, 0, 2));
        assert_eq!((c.area(), c.intersection(&a).area()), (7, 3));
        let plan = assemble_plan(&draft(2), &[a, c], &GasConfig::default()).unwrap();
        assert_eq!(plan.union_mask().area(), 9);
    }

    #[test]
    fn empty_mask_is_degenerate() {
        let err =
            assemble_plan(&draft(1), &[Mask::empty(4, 4)], &GasConfig::default()).unwrap_err();
        assert!(matches!(err, PrepError::Plan(GasError::DegeneratePlan(_))));
    }

    #[test]
    fn rle_layout() {
        let m = Mask::rect(2, 3, 0, 1, 1, 3);
        assert_eq!(encode_rle(&m), [1, 2, 3]);
        assert_eq!(encode_rle(&Mask::full(2, 2)), [0, 4]);
        assert_eq!(decode_rle(&[1, 2, 3], (2, 3)).unwrap(), m);
        assert!(decode_rle(&[1, 2], (2, 3)).is_err());
    }
}
