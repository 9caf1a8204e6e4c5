use gas_core::{EditPlan, Mask};
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingBackend, PerceptualBackend};
use crate::error::{EvalError, Result};
use crate::pixels::PixelImage;

/// Published values for the method and its strongest baseline; kept for
/// documentation, not reproduced here.
pub mod reference {
    pub const LPIPS: f64 = 0.3668;
    pub const CLIP: f64 = 30.49;
    pub const MASKED_CLIP: f64 = 25.07;
    pub const DDS_LPIPS: f64 = 0.4022;
}

const UNIT_TOL: f64 = 1e-6;

fn checked(v: Vec<f64>, dim: usize, what: &str) -> Result<Vec<f64>> {
    if v.len() != dim {
        return Err(EvalError::Backend(format!(
            "{what} embedding has length {}, expected {dim}",
            v.len()
        )));
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(EvalError::Backend(format!(
            "{what} embedding has norm {n}, expected 1"
        )));
    }
    Ok(v)
}

/// `100 * cos(embed_image(image), embed_text(text))`.
pub fn clip_score(image: &PixelImage, text: &str, embedder: &dyn EmbeddingBackend) -> Result<f64> {
    let dim = embedder.dimension();
    let a = checked(embedder.embed_image(image)?, dim, "image")?;
    let b = checked(embedder.embed_text(text)?, dim, "text")?;
    let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    Ok((100.0 * cos).clamp(-100.0, 100.0))
}

/// Pixel crop `(y0, y1, x0, x1)` (exclusive ends) covering the tight bounding
/// box of `mask`, scaled from mask to image resolution and rounded outward.
pub fn mask_crop_bounds(
    mask: &Mask,
    (img_h, img_w): (usize, usize),
) -> Result<(usize, usize, usize, usize)> {
    let (mh, mw) = mask.dims();
    let Some((y0, x0, y1, x1)) = mask.bounding_box() else {
        return Err(EvalError::InvalidPlan("subtask mask is empty".into()));
    };
    let lo = |i: usize, n: usize, m: usize| i * n / m;
    let hi = |i: usize, n: usize, m: usize| ((i + 1) * n).div_ceil(m).min(n);
    Ok((
        lo(y0, img_h, mh),
        hi(y1, img_h, mh),
        lo(x0, img_w, mw),
        hi(x1, img_w, mw),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub phrase: String,
    pub score: f64,
}

/// Per-subtask scores of each mask crop against its target phrase, in plan order.
pub fn subtask_clip_scores(
    image: &PixelImage,
    plan: &EditPlan,
    embedder: &dyn EmbeddingBackend,
) -> Result<Vec<SubtaskScore>> {
    plan.subtasks()
        .iter()
        .map(|s| {
            let (y0, y1, x0, x1) = mask_crop_bounds(&s.mask, image.dims())?;
            let crop = image.crop(y0, y1, x0, x1)?;
            Ok(SubtaskScore {
                phrase: s.target_phrase.clone(),
                score: clip_score(&crop, &s.target_phrase, embedder)?,
            })
        })
        .collect()
}

/// Mean over subtasks of the crop-vs-target-phrase CLIP score.
pub fn masked_clip_score(
    image: &PixelImage,
    plan: &EditPlan,
    embedder: &dyn EmbeddingBackend,
) -> Result<f64> {
    let scores = subtask_clip_scores(image, plan, embedder)?;
    Ok(mean(scores.iter().map(|s| s.score)))
}

pub fn lpips_score(a: &PixelImage, b: &PixelImage, backend: &dyn PerceptualBackend) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(EvalError::InvalidArgument(format!(
            "image sizes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let d = backend.distance(a, b)?;
    if !d.is_finite() || d < 0.0 {
        return Err(EvalError::Backend(format!(
            "perceptual distance {d} is not a valid distance"
        )));
    }
    Ok(d)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub clip_full: f64,
    pub clip_masked: f64,
    pub lpips: f64,
    pub per_subtask: Vec<SubtaskScore>,
}

/// Scores `edited` against the plan's target prompt and phrases, and its
/// perceptual distance from `source`.
pub fn evaluate(
    source: &PixelImage,
    edited: &PixelImage,
    plan: &EditPlan,
    embedder: &dyn EmbeddingBackend,
    perceptual: &dyn PerceptualBackend,
) -> Result<MetricReport> {
    let lpips = lpips_score(source, edited, perceptual)?;
    let per_subtask = subtask_clip_scores(edited, plan, embedder)?;
    Ok(MetricReport {
        clip_full: clip_score(edited, plan.target_prompt(), embedder)?,
        clip_masked: mean(per_subtask.iter().map(|s| s.score)),
        lpips,
        per_subtask,
    })
}

impl MetricReport {
    /// Aligned plain-text table: summary rows, then one row per subtask.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("clip_full".into(), format!("{:.4}", self.clip_full)),
            ("clip_masked".into(), format!("{:.4}", self.clip_masked)),
            ("lpips".into(), format!("{:.4}", self.lpips)),
        ];
        for (i, s) in self.per_subtask.iter().enumerate() {
            rows.push((
                format!("subtask {i}: {}", s.phrase),
                format!("{:.4}", s.score),
            ));
        }
        let kw = rows
            .iter()
            .map(|r| r.0.chars().count())
            .max()
            .unwrap_or(0)
            .max(6);
        let vw = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<kw$}  {:>vw$}\n", "metric", "value");
        out.push_str(&format!("{}  {}\n", "-".repeat(kw), "-".repeat(vw)));
        for (k, v) in rows {
            out.push_str(&format!("{k:<kw$}  {v:>vw$}\n"));
        }
        out
    }
}

/// Benchmark aggregate: masked CLIP is averaged over subtasks within each
/// image first, then over images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub images: usize,
    pub clip_full: f64,
    pub clip_masked: f64,
    pub lpips: f64,
}

pub fn aggregate(reports: &[MetricReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(EvalError::InvalidArgument("no reports to aggregate".into()));
    }
    Ok(AggregateReport {
        images: reports.len(),
        clip_full: mean(reports.iter().map(|r| r.clip_full)),
        clip_masked: mean(reports.iter().map(|r| r.clip_masked)),
        lpips: mean(reports.iter().map(|r| r.lpips)),
    })
}

#[cfg(test)]
mod tests {
    use gas_core::Subtask;

    use super::*;
    use crate::embed::{FixtureEmbedder, MeanAbsPerceptual};

    fn img(v: f64) -> PixelImage {
        PixelImage::filled(8, 8, v).unwrap()
    }

    #[test]
    fn clip_arithmetic() {
        let same = FixtureEmbedder::new(2)
            .with_text("t", &[0.0, 1.0])
            .unwrap()
            .with_default_image(&[0.0, 1.0])
            .unwrap();
        assert_eq!(clip_score(&img(0.0), "t", &same).unwrap(), 100.0);

        let orth = FixtureEmbedder::new(2)
            .with_text("t", &[1.0, 0.0])
            .unwrap()
            .with_default_image(&[0.0, 1.0])
            .unwrap();
        assert_eq!(clip_score(&img(0.0), "t", &orth).unwrap(), 0.0);

        let e = FixtureEmbedder::new(2)
            .with_text("t", &[1.0, 0.0])
            .unwrap()
            .with_default_image(&[0.6, 0.8])
            .unwrap();
        assert!((clip_score(&img(0.0), "t", &e).unwrap() - 60.0).abs() < 1e-12);
    }

    #[test]
    fn lpips_mock_values() {
        assert_eq!(
            lpips_score(&img(0.3), &img(0.3), &MeanAbsPerceptual).unwrap(),
            0.0
        );
        assert_eq!(
            lpips_score(&img(0.0), &img(0.5), &MeanAbsPerceptual).unwrap(),
            0.5
        );
        let small = PixelImage::filled(4, 8, 0.0).unwrap();
        assert!(matches!(
            lpips_score(&img(0.0), &small, &MeanAbsPerceptual),
            Err(EvalError::InvalidArgument(_))
        ));
    }

    #[test]
    fn crop_bounds_scale_outward() {
        let m = Mask::rect(8, 8, 2, 4, 2, 4);
        assert_eq!(mask_crop_bounds(&m, (64, 64)).unwrap(), (16, 32, 16, 32));
        let m = Mask::rect(3, 3, 1, 2, 0, 3);
        assert_eq!(mask_crop_bounds(&m, (10, 10)).unwrap(), (3, 7, 0, 10));
        assert!(mask_crop_bounds(&Mask::empty(3, 3), (10, 10)).is_err());
    }

    #[test]
    fn masked_score_is_mean_of_subtasks() {
        let plan = EditPlan::new(
            "S",
            "T",
            vec![
                Subtask::new("a", "x", Mask::rect(2, 2, 0, 1, 0, 2), false, false),
                Subtask::new("b", "y", Mask::rect(2, 2, 1, 2, 0, 2), false, false),
            ],
        )
        .unwrap();
        let e = FixtureEmbedder::new(2)
            .with_text("x", &[0.6, 0.8])
            .unwrap()
            .with_text("y", &[0.2, 0.96f64.sqrt()])
            .unwrap()
            .with_default_image(&[1.0, 0.0])
            .unwrap();
        let s = masked_clip_score(&img(0.2), &plan, &e).unwrap();
        assert!((s - 40.0).abs() < 1e-9);
    }

    #[test]
    fn table_has_one_row_per_subtask() {
        let r = MetricReport {
            clip_full: 30.0,
            clip_masked: 25.0,
            lpips: 0.1,
            per_subtask: vec![
                SubtaskScore {
                    phrase: "a cat".into(),
                    score: 20.0,
                },
                SubtaskScore {
                    phrase: "snow".into(),
                    score: 30.0,
                },
            ],
        };
        let t = r.to_table();
        assert_eq!(t.lines().count(), 7);
        assert!(t.contains("subtask 1: snow"));
    }

    #[test]
    fn aggregation_is_per_image_first() {
        let mk = |m: f64| MetricReport {
            clip_full: 0.0,
            clip_masked: m,
            lpips: 0.0,
            per_subtask: vec![],
        };
        let a = aggregate(&[mk(10.0), mk(30.0)]).unwrap();
        assert_eq!(a.clip_masked, 20.0);
        assert!(aggregate(&[]).is_err());
    }
}
