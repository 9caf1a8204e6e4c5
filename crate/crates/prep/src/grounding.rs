//! Phrase grounding: detector boxes per phrase, rasterized to latent masks.

use std::collections::BTreeMap;

use gas_core::Mask;
use serde::{Deserialize, Serialize};

use crate::clients::DetectorClient;
use crate::error::{PrepError, Result};
use crate::request::SourceImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub score: f64,
    pub phrase: String,
}

impl GroundingBox {
    /// Validates ordering, bounds (`width` x `height` pixels) and score.
    pub fn new(
        [x0, y0, x1, y1]: [f64; 4],
        score: f64,
        phrase: impl Into<String>,
        (height, width): (usize, usize),
    ) -> Result<Self> {
        let phrase = phrase.into();
        let fail = |reason: String| PrepError::GroundingFailure {
            phrase: phrase.clone(),
            reason,
        };
        if ![x0, y0, x1, y1, score].iter().all(|v| v.is_finite()) {
            return Err(fail("non-finite box or score".into()));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(fail(format!("degenerate box ({x0}, {y0}, {x1}, {y1})")));
        }
        if x0 < 0.0 || y0 < 0.0 || x1 > width as f64 || y1 > height as f64 {
            return Err(fail(format!(
                "box ({x0}, {y0}, {x1}, {y1}) outside {width}x{height} image"
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(fail(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            x0,
            y0,
            x1,
            y1,
            score,
            phrase,
        })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// Grounds every phrase occurrence. A phrase occurring `j` times receives its
/// `j` best detections in descending score order; the output is aligned with
/// `phrases`. Detector boxes are clipped to the image first.
pub fn ground_phrases(
    image: &SourceImage,
    phrases: &[String],
    detector: &dyn DetectorClient,
) -> Result<Vec<GroundingBox>> {
    if phrases.is_empty() {
        return Err(PrepError::InvalidRequest("no phrases to ground".into()));
    }
    let dims = image.dims();
    let (h, w) = (dims.0 as f64, dims.1 as f64);
    let threshold = detector.score_threshold();

    // Distinct phrases in first-appearance order, so failures name the
    // earliest ungroundable subtask.
    let mut needed: Vec<(&str, usize)> = Vec::new();
    for p in phrases {
        match needed.iter_mut().find(|(q, _)| *q == p.as_str()) {
            Some((_, n)) => *n += 1,
            None => needed.push((p.as_str(), 1)),
        }
    }

    let mut ranked: BTreeMap<&str, Vec<GroundingBox>> = BTreeMap::new();
    for &(phrase, count) in &needed {
        let det = detector.detect(image.png(), phrase)?;
        if det.boxes.len() != det.scores.len() {
            return Err(PrepError::Client {
                service: "detector",
                message: format!(
                    "{} boxes but {} scores for {phrase:?}",
                    det.boxes.len(),
                    det.scores.len()
                ),
                attempts: 1,
            });
        }
        let mut boxes: Vec<GroundingBox> = det
            .boxes
            .iter()
            .zip(&det.scores)
            .filter(|(_, &s)| s >= threshold)
            .filter_map(|(b, &s)| {
                let clipped = [b[0].max(0.0), b[1].max(0.0), b[2].min(w), b[3].min(h)];
                GroundingBox::new(clipped, s, phrase, dims).ok()
            })
            .collect();
        boxes.sort_by(|a, b| b.score.total_cmp(&a.score));
        if boxes.len() < count {
            let reason = if boxes.is_empty() {
                format!("no detection scored at least {threshold}")
            } else {
                format!("{} detection(s) for {count} occurrence(s)", boxes.len())
            };
            return Err(PrepError::GroundingFailure {
                phrase: phrase.to_string(),
                reason,
            });
        }
        boxes.truncate(count);
        ranked.insert(phrase, boxes);
    }

    let mut used: BTreeMap<&str, usize> = BTreeMap::new();
    Ok(phrases
        .iter()
        .map(|p| {
            let j = used.entry(p.as_str()).or_default();
            let b = ranked[p.as_str()][*j].clone();
            *j += 1;
            b
        })
        .collect())
}

/// Pixel index range `[lo, hi)` touched by the interval `[a, b)`.
fn pixel_span(a: f64, b: f64, n: usize) -> (usize, usize) {
    let lo = (a.floor().max(0.0) as usize).min(n);
    let hi = (b.ceil().max(0.0) as usize).min(n);
    (lo, hi)
}

/// Fills the box at pixel resolution and downsamples with the any-coverage
/// rule: latent cell `(r, c)` is set when some covered pixel `(y, x)` has
/// `y * H_lat / H_px == r` and `x * W_lat / W_px == c` (integer division).
pub fn rasterize_mask(
    b: &GroundingBox,
    (px_h, px_w): (usize, usize),
    (lat_h, lat_w): (usize, usize),
) -> Result<Mask> {
    let fail = |reason: String| PrepError::GroundingFailure {
        phrase: b.phrase.clone(),
        reason,
    };
    if lat_h == 0 || lat_w == 0 || lat_h > px_h || lat_w > px_w {
        return Err(fail(format!(
            "cannot map {px_h}x{px_w} pixels onto a {lat_h}x{lat_w} latent"
        )));
    }
    let (y_lo, y_hi) = pixel_span(b.y0, b.y1, px_h);
    let (x_lo, x_hi) = pixel_span(b.x0, b.x1, px_w);
    if y_lo >= y_hi || x_lo >= x_hi {
        return Err(fail("box covers no pixels".into()));
    }
    // Cell index is monotone in the pixel index, so the first and last
    // covered pixels bound the covered cells.
    let r0 = y_lo * lat_h / px_h;
    let r1 = (y_hi - 1) * lat_h / px_h + 1;
    let c0 = x_lo * lat_w / px_w;
    let c1 = (x_hi - 1) * lat_w / px_w + 1;
    let mask = Mask::rect(lat_h, lat_w, r0, r1, c0, c1);
    if mask.area() == 0 {
        return Err(fail("mask is empty at latent resolution".into()));
    }
    Ok(mask)
}
