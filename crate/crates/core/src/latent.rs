//! Dense `(channels, height, width)` grids and binary spatial masks.

use ndarray::{Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{GasError, Result};

/// Shape of a latent grid as `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

impl std::fmt::Display for LatentShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

/// Real-valued latent array. Used for the optimized latent, injected noise
/// and every noise prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    data: Array3<f64>,
}

impl LatentGrid {
    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            data: Array3::zeros(shape.dim()),
        }
    }

    pub fn filled(shape: LatentShape, value: f64) -> Self {
        Self {
            data: Array3::from_elem(shape.dim(), value),
        }
    }

    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GasError::invalid("latent grid contains non-finite values"));
        }
        Ok(Self { data })
    }

    /// Builds a grid from a row-major (C-order) buffer.
    pub fn from_vec(shape: LatentShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(GasError::invalid(format!(
                "buffer of length {} does not match shape {shape}",
                values.len()
            )));
        }
        let data = Array3::from_shape_vec(shape.dim(), values)
            .map_err(|e| GasError::invalid(e.to_string()))?;
        Self::from_array(data)
    }

    pub fn from_fn(shape: LatentShape, f: impl FnMut((usize, usize, usize)) -> f64) -> Self {
        Self {
            data: Array3::from_shape_fn(shape.dim(), f),
        }
    }

    pub fn shape(&self) -> LatentShape {
        let (c, h, w) = self.data.dim();
        LatentShape::new(c, h, w)
    }

    pub fn array(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array3<f64> {
        self.data
    }

    /// Row-major copy of the values.
    pub fn to_vec(&self) -> Vec<f64> {
        self.data.iter().copied().collect()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[[c, y, x]]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &LatentGrid, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(GasError::invalid(format!(
                "{what}: shape {} does not match {}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `a * self + b * other`, elementwise.
    pub fn lin_comb(&self, a: f64, other: &LatentGrid, b: f64) -> LatentGrid {
        let mut out = self.data.clone();
        Zip::from(&mut out)
            .and(&other.data)
            .for_each(|o, &y| *o = a * *o + b * y);
        LatentGrid { data: out }
    }

    pub fn sub(&self, other: &LatentGrid) -> LatentGrid {
        LatentGrid {
            data: &self.data - &other.data,
        }
    }

    pub fn add(&self, other: &LatentGrid) -> LatentGrid {
        LatentGrid {
            data: &self.data + &other.data,
        }
    }

    pub fn scale(&self, k: f64) -> LatentGrid {
        LatentGrid {
            data: &self.data * k,
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &LatentGrid) {
        Zip::from(&mut self.data)
            .and(&other.data)
            .for_each(|o, &y| *o += k * y);
    }

    /// Multiplies every channel by a spatial `(H, W)` weight field.
    pub fn mul_spatial(&self, weights: &Array2<f64>) -> LatentGrid {
        let mut out = self.data.clone();
        for mut plane in out.outer_iter_mut() {
            plane *= weights;
        }
        LatentGrid { data: out }
    }

    /// Zeroes every cell outside `mask` in all channels.
    pub fn masked(&self, mask: &Mask) -> LatentGrid {
        let mut out = self.data.clone();
        for mut plane in out.outer_iter_mut() {
            Zip::from(&mut plane).and(mask.grid()).for_each(|v, &m| {
                if !m {
                    *v = 0.0;
                }
            });
        }
        LatentGrid { data: out }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// L2 norm restricted to cells inside (`inside = true`) or outside the mask.
    pub fn masked_norm(&self, mask: &Mask, inside: bool) -> f64 {
        let mut acc = 0.0;
        for plane in self.data.outer_iter() {
            Zip::from(&plane).and(mask.grid()).for_each(|&v, &m| {
                if m == inside {
                    acc += v * v;
                }
            });
        }
        acc.sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }

    /// Mean over all channels of the cells inside `mask`.
    pub fn masked_mean(&self, mask: &Mask) -> f64 {
        let mut acc = 0.0;
        for plane in self.data.outer_iter() {
            Zip::from(&plane).and(mask.grid()).for_each(|&v, &m| {
                if m {
                    acc += v;
                }
            });
        }
        acc / (mask.area() * self.shape().channels) as f64
    }

    pub fn max_abs_diff(&self, other: &LatentGrid) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Binary spatial mask at latent resolution. The area is cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    grid: Array2<bool>,
    area: usize,
}

impl Mask {
    pub fn new(grid: Array2<bool>) -> Self {
        let area = grid.iter().filter(|&&b| b).count();
        Self { grid, area }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::new(Array2::from_elem((height, width), false))
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::new(Array2::from_elem((height, width), true))
    }

    /// Axis-aligned rectangle covering rows `y0..y1` and columns `x0..x1`.
    pub fn rect(height: usize, width: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Self {
        Self::new(Array2::from_shape_fn((height, width), |(y, x)| {
            (y0..y1).contains(&y) && (x0..x1).contains(&x)
        }))
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut((usize, usize)) -> bool) -> Self {
        Self::new(Array2::from_shape_fn((height, width), f))
    }

    pub fn grid(&self) -> &Array2<bool> {
        &self.grid
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn height(&self) -> usize {
        self.grid.nrows()
    }

    pub fn width(&self) -> usize {
        self.grid.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dim()
    }

    /// Fraction of the grid covered by the mask.
    pub fn area_ratio(&self) -> f64 {
        self.area as f64 / self.grid.len() as f64
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        self.grid[[y, x]]
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask::new(
            Zip::from(&self.grid)
                .and(&other.grid)
                .map_collect(|&a, &b| a || b),
        )
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        Mask::new(
            Zip::from(&self.grid)
                .and(&other.grid)
                .map_collect(|&a, &b| a && b),
        )
    }

    /// 0/1 weights as reals.
    pub fn to_weights(&self) -> Array2<f64> {
        self.grid.mapv(|b| if b { 1.0 } else { 0.0 })
    }

    /// Inclusive bounding box `(y0, x0, y1, x1)` of the set cells.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for ((y, x), &m) in self.grid.indexed_iter() {
            if m {
                bbox = Some(match bbox {
                    None => (y, x, y, x),
                    Some((y0, x0, y1, x1)) => (y0.min(y), x0.min(x), y1.max(y), x1.max(x)),
                });
            }
        }
        bbox
    }
}
