use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance carried along with every 2-D slice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub subject_id: String,
    pub source: String,
    pub slice_index: usize,
}

/// 2-D grayscale slice, row-major (`y * width + x`).
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub meta: SliceMeta,
}

impl SliceImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::dim(format!(
                "slice {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(SliceImage {
            width,
            height,
            data,
            meta: SliceMeta::default(),
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        SliceImage::new(width, height, vec![value; width * height]).expect("positive extents")
    }

    pub fn with_meta(mut self, meta: SliceMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// 2-D binary label; every value is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
    pub meta: SliceMeta,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::dim(format!(
                "mask {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::input(format!(
                "mask value {} at index {pos} is not binary",
                data[pos]
            )));
        }
        Ok(Mask {
            width,
            height,
            data,
            meta: SliceMeta::default(),
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask::new(width, height, vec![0; width * height]).expect("positive extents")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| u8::from(f(x, y)))
            .collect();
        Mask::new(width, height, data).expect("binary by construction")
    }

    /// Binarise `values ≥ threshold`.
    pub fn threshold(width: usize, height: usize, values: &[f32], threshold: f64) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dim(format!(
                "threshold: {} values for {width}x{height}",
                values.len()
            )));
        }
        let data = values.iter().map(|&v| u8::from(f64::from(v) >= threshold)).collect();
        Mask::new(width, height, data)
    }

    pub fn with_meta(mut self, meta: SliceMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Pixelwise AND with `other` (same extents required).
    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| a | b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(u8, u8) -> u8) -> Result<Mask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::dim(format!(
                "mask extents {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            data,
            meta: self.meta.clone(),
        })
    }

    /// Keeps only pixels whose column satisfies `keep`.
    pub fn filter_columns(&self, keep: impl Fn(usize) -> bool) -> Mask {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| if keep(i % self.width) { v } else { 0 })
            .collect();
        Mask {
            width: self.width,
            height: self.height,
            data,
            meta: self.meta.clone(),
        }
    }

    /// Morphological erosion by one pixel (4-neighbourhood, outside = 0).
    pub fn erode(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        Mask::from_fn(w, h, |x, y| {
            self.get(x, y)
                && x > 0
                && y > 0
                && x + 1 < w
                && y + 1 < h
                && self.get(x - 1, y)
                && self.get(x + 1, y)
                && self.get(x, y - 1)
                && self.get(x, y + 1)
        })
        .with_meta(self.meta.clone())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| f32::from(v)).collect()
    }
}
