use std::path::Path;

use image::RgbImage;
use ndarray::{s, Array3};

use crate::error::{EvalError, Result};

/// RGB image as `(height, width, 3)` floats in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    data: Array3<f64>,
}

impl PixelImage {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 || c != 3 {
            return Err(EvalError::InvalidArgument(format!(
                "image must be (H>0, W>0, 3), got ({h}, {w}, {c})"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::InvalidArgument(
                "image has non-finite pixels".into(),
            ));
        }
        Ok(Self { data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(Array3::from_elem((height, width, 3), value))
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let data = Array3::from_shape_fn((h as usize, w as usize, 3), |(y, x, c)| {
            f64::from(img.get_pixel(x as u32, y as u32)[c]) / 255.0
        });
        Self::new(data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| {
            EvalError::InvalidArgument(format!("cannot read image {}: {e}", path.display()))
        })?;
        Self::from_rgb8(&img.to_rgb8())
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        let (h, w, _) = self.data.dim();
        (h, w)
    }

    /// Rows `y0..y1`, columns `x0..x1`.
    pub fn crop(&self, y0: usize, y1: usize, x0: usize, x1: usize) -> Result<Self> {
        let (h, w) = self.dims();
        if y0 >= y1 || x0 >= x1 || y1 > h || x1 > w {
            return Err(EvalError::InvalidArgument(format!(
                "crop rows {y0}..{y1}, cols {x0}..{x1} outside {h}x{w} image"
            )));
        }
        Self::new(self.data.slice(s![y0..y1, x0..x1, ..]).to_owned())
    }

    /// 8-bit quantization, row-major RGB.
    pub fn to_rgb8_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_and_rgb_round_trip() {
        let img = RgbImage::from_fn(4, 3, |x, y| image::Rgb([x as u8 * 60, y as u8 * 100, 255]));
        let p = PixelImage::from_rgb8(&img).unwrap();
        assert_eq!(p.dims(), (3, 4));
        assert_eq!(p.to_rgb8_bytes(), img.as_raw().clone());
        let c = p.crop(1, 3, 2, 4).unwrap();
        assert_eq!(c.dims(), (2, 2));
        assert_eq!(c.data()[[0, 0, 0]], 120.0 / 255.0);
        assert!(p.crop(0, 4, 0, 1).is_err());
        assert!(p.crop(1, 1, 0, 1).is_err());
    }
}
