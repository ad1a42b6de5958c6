use super::network::AttentionUNet;
use crate::datapipe::{Mask, SliceImage};
use crate::error::{Error, Result};
use crate::nnkit::Tensor;

/// Per-pixel meniscus probability, row-major, every value in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ProbabilityMap {
    /// Binary mask of pixels with probability ≥ `threshold`.
    pub fn binarize(&self, threshold: f64) -> Mask {
        Mask::threshold(self.width, self.height, &self.data, threshold).expect("consistent extents")
    }
}

/// Predicts a batch of preprocessed slices (all of the configured input size).
///
/// Each slice is processed independently, so the result does not depend on
/// how slices are grouped into batches.
pub fn predict_batch(net: &AttentionUNet<f32>, slices: &[SliceImage]) -> Result<Vec<(ProbabilityMap, Mask)>> {
    let s = net.config().input_size;
    if net.config().in_channels != 1 {
        return Err(Error::Config("slice prediction needs a single-channel network".into()));
    }
    if let Some(bad) = slices.iter().find(|sl| sl.width != s || sl.height != s) {
        return Err(Error::dim(format!(
            "slice is {}x{}, network expects {s}x{s}",
            bad.width, bad.height
        )));
    }
    let mut out = Vec::with_capacity(slices.len());
    for sl in slices {
        let input = Tensor::from_vec(&[1, 1, s, s], sl.data.clone())?;
        let prob = net.infer(&input)?.into_data();
        let map = ProbabilityMap {
            width: s,
            height: s,
            data: prob,
        };
        let mask = map.binarize(net.config().threshold).with_meta(sl.meta.clone());
        out.push((map, mask));
    }
    Ok(out)
}

pub fn predict(net: &AttentionUNet<f32>, slice: &SliceImage) -> Result<(ProbabilityMap, Mask)> {
    Ok(predict_batch(net, std::slice::from_ref(slice))?.remove(0))
}
