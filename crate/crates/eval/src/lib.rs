//! Text-image alignment and perceptual metrics for edited images: CLIP score
//! of the whole image, masked CLIP score over each subtask's region, and
//! LPIPS, all behind pluggable backends.

pub mod embed;
mod error;
pub mod metrics;
mod pixels;

pub use embed::{
    image_fingerprint, normalize_text, EmbeddingBackend, FixtureEmbedder, HashEmbedder,
    MeanAbsPerceptual, PerceptualBackend,
};
pub use error::{EvalError, Result};
pub use metrics::{
    aggregate, clip_score, evaluate, lpips_score, mask_crop_bounds, masked_clip_score, reference,
    subtask_clip_scores, AggregateReport, MetricReport, SubtaskScore,
};
pub use pixels::PixelImage;
