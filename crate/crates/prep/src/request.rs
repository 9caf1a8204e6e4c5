use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use sha2::{Digest, Sha256};

use crate::error::{PrepError, Result};

/// RGB source image and where it came from. The PNG encoding sent to remote
/// services is computed once so hashes and payloads stay consistent.
#[derive(Debug, Clone)]
pub struct SourceImage {
    pixels: RgbImage,
    path: PathBuf,
    png: Vec<u8>,
}

impl SourceImage {
    pub fn new(pixels: RgbImage, path: impl Into<PathBuf>) -> Result<Self> {
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(PrepError::InvalidRequest("image has zero size".into()));
        }
        let mut png = Vec::new();
        pixels
            .write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
            .map_err(|e| PrepError::InvalidRequest(format!("cannot encode image: {e}")))?;
        Ok(Self {
            pixels,
            path: path.into(),
            png,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| {
            PrepError::InvalidRequest(format!("cannot read image {}: {e}", path.display()))
        })?;
        Self::new(img.to_rgb8(), path)
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn png(&self) -> &[u8] {
        &self.png
    }

    /// `(height, width)` in pixels.
    pub fn dims(&self) -> (usize, usize) {
        (self.pixels.height() as usize, self.pixels.width() as usize)
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.png))
    }
}

/// An image plus the free-form edit request for it.
#[derive(Debug, Clone)]
pub struct UserRequest {
    pub image: SourceImage,
    pub request_text: String,
}

impl UserRequest {
    pub fn new(image: SourceImage, request_text: impl Into<String>) -> Result<Self> {
        let request_text = request_text.into();
        if request_text.trim().is_empty() {
            return Err(PrepError::InvalidRequest("request text is empty".into()));
        }
        Ok(Self {
            image,
            request_text,
        })
    }
}
