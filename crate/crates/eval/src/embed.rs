//! Embedding and perceptual-distance backends, with deterministic mocks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{EvalError, Result};
use crate::pixels::PixelImage;

/// Joint image/text embedding. Both methods return unit-norm vectors of
/// length [`dimension`](Self::dimension).
pub trait EmbeddingBackend: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_image(&self, region: &PixelImage) -> Result<Vec<f64>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
}

/// Perceptual distance between two same-sized images.
pub trait PerceptualBackend: Send + Sync {
    fn distance(&self, a: &PixelImage, b: &PixelImage) -> Result<f64>;
}

pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content hash of an image at 8-bit precision, including its size.
pub fn image_fingerprint(img: &PixelImage) -> String {
    let (h, w) = img.dims();
    let mut hasher = Sha256::new();
    hasher.update((h as u64).to_le_bytes());
    hasher.update((w as u64).to_le_bytes());
    hasher.update(img.to_rgb8_bytes());
    hex::encode(hasher.finalize())
}

pub fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !n.is_finite() || n == 0.0 {
        return Err(EvalError::InvalidArgument(
            "cannot normalize a zero or non-finite vector".into(),
        ));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Deterministic pseudo-random unit vectors seeded from content hashes.
/// Text is whitespace-normalized first.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    fn vector(&self, domain: &str, payload: &[u8]) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(domain.as_bytes());
        h.update([0]);
        h.update(payload);
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let v: Vec<f64> = (0..self.dimension)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        unit(&v).expect("gaussian draw is nonzero")
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_image(&self, region: &PixelImage) -> Result<Vec<f64>> {
        Ok(self.vector("image", image_fingerprint(region).as_bytes()))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.vector("text", normalize_text(text).as_bytes()))
    }
}

/// Looks embeddings up in fixed tables. Texts are keyed after whitespace
/// normalization, images by [`image_fingerprint`]; unknown images fall back
/// to `default_image` when set. Vectors are normalized on insertion.
#[derive(Debug, Clone, Default)]
pub struct FixtureEmbedder {
    dimension: usize,
    texts: BTreeMap<String, Vec<f64>>,
    images: BTreeMap<String, Vec<f64>>,
    default_image: Option<Vec<f64>>,
}

impl FixtureEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            ..Self::default()
        }
    }

    fn check(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dimension {
            return Err(EvalError::InvalidArgument(format!(
                "fixture vector has length {}, expected {}",
                v.len(),
                self.dimension
            )));
        }
        unit(v)
    }

    pub fn with_text(mut self, text: &str, v: &[f64]) -> Result<Self> {
        let v = self.check(v)?;
        self.texts.insert(normalize_text(text), v);
        Ok(self)
    }

    pub fn with_image(mut self, img: &PixelImage, v: &[f64]) -> Result<Self> {
        let v = self.check(v)?;
        self.images.insert(image_fingerprint(img), v);
        Ok(self)
    }

    pub fn with_default_image(mut self, v: &[f64]) -> Result<Self> {
        self.default_image = Some(self.check(v)?);
        Ok(self)
    }
}

impl EmbeddingBackend for FixtureEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_image(&self, region: &PixelImage) -> Result<Vec<f64>> {
        let key = image_fingerprint(region);
        self.images
            .get(&key)
            .or(self.default_image.as_ref())
            .cloned()
            .ok_or_else(|| EvalError::Backend(format!("no fixture embedding for image {key}")))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        let key = normalize_text(text);
        self.texts
            .get(&key)
            .cloned()
            .ok_or_else(|| EvalError::Backend(format!("no fixture embedding for text {key:?}")))
    }
}

/// Stand-in for LPIPS: mean absolute pixel difference.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAbsPerceptual;

impl PerceptualBackend for MeanAbsPerceptual {
    fn distance(&self, a: &PixelImage, b: &PixelImage) -> Result<f64> {
        if a.dims() != b.dims() {
            return Err(EvalError::InvalidArgument("image sizes differ".into()));
        }
        let n = a.data().len() as f64;
        Ok(a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_unit_and_whitespace_invariant() {
        let e = HashEmbedder::new(16);
        let a = e.embed_text("a  red\tcar ").unwrap();
        let b = e.embed_text("a red car").unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_ne!(a, e.embed_text("a blue car").unwrap());
    }

    #[test]
    fn fixture_lookup() {
        let img = PixelImage::filled(2, 2, 0.5).unwrap();
        let e = FixtureEmbedder::new(2)
            .with_text("a cat", &[3.0, 4.0])
            .unwrap()
            .with_image(&img, &[1.0, 0.0])
            .unwrap();
        assert_eq!(e.embed_text(" a cat").unwrap(), [0.6, 0.8]);
        assert_eq!(e.embed_image(&img).unwrap(), [1.0, 0.0]);
        assert!(e
            .embed_image(&PixelImage::filled(2, 2, 0.1).unwrap())
            .is_err());
        assert!(FixtureEmbedder::new(2).with_text("x", &[1.0]).is_err());
    }
}
