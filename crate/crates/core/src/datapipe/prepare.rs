//! The slice preparation chain: contrast normalisation → centre crop →
//! resize to the network input size, and its inverse for predicted masks.

use serde::{Deserialize, Serialize};

use super::image::{Mask, SliceImage};
use super::preprocess::{
    crop_center, crop_center_mask, crop_origin, resize, resize_mask, uncrop_mask, ContrastStage, Interp,
    PercentileGamma,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    /// Side of the centred crop window in source pixels.
    pub crop: usize,
    /// Side of the network input after resizing.
    pub size: usize,
    /// Expand each training slice into its six augmented variants.
    pub augment: bool,
    pub contrast: PercentileGamma,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            crop: 192,
            size: 224,
            augment: true,
            contrast: PercentileGamma::default(),
        }
    }
}

impl PrepConfig {
    /// Prepares an image slice (bilinear resize).
    pub fn prepare_slice(&self, slice: &SliceImage) -> Result<SliceImage> {
        let enhanced = self.contrast.apply(slice);
        let cropped = crop_center(&enhanced, self.crop)?;
        resize(&cropped, self.size, self.size, Interp::Bilinear)
    }

    /// Prepares a label with the same spatial transform (nearest resize).
    pub fn prepare_mask(&self, mask: &Mask) -> Result<Mask> {
        resize_mask(&crop_center_mask(mask, self.crop)?, self.size, self.size)
    }

    /// Maps a mask predicted on a prepared slice back onto the
    /// `width × height` acquisition grid.
    pub fn restore_mask(&self, mask: &Mask, width: usize, height: usize) -> Result<Mask> {
        uncrop_mask(&resize_mask(mask, self.crop, self.crop)?, width, height)
    }

    /// Maps a probability map from the prepared grid back onto the
    /// acquisition grid: bilinear resize to the crop window, zero outside.
    pub fn restore_probability(&self, prob: &SliceImage, width: usize, height: usize) -> Result<SliceImage> {
        let window = resize(prob, self.crop, self.crop, Interp::Bilinear)?;
        let (x0, y0) = crop_origin(width, height, self.crop)?;
        let mut data = vec![0.0; width * height];
        for y in 0..self.crop {
            let row = &window.data[y * self.crop..(y + 1) * self.crop];
            data[(y0 + y) * width + x0..(y0 + y) * width + x0 + self.crop].copy_from_slice(row);
        }
        Ok(SliceImage::new(width, height, data)?.with_meta(prob.meta.clone()))
    }
}
