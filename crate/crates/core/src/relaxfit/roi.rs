use serde::{Deserialize, Serialize};

use crate::datapipe::Mask;
use crate::error::{Error, Result};

/// Mean, median and normal-approximation 95% CI of the included values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// ROI statistics of one parameter map. `summary` is `None` when no voxel
/// of the ROI has a converged value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiStats {
    pub n_pixels: usize,
    pub n_included: usize,
    pub area_mm2: f64,
    pub summary: Option<Summary>,
}

impl RoiStats {
    pub fn mean(&self) -> Option<f64> {
        self.summary.map(|s| s.mean)
    }

    pub fn excluded_fraction(&self) -> f64 {
        if self.n_pixels == 0 {
            0.0
        } else {
            (self.n_pixels - self.n_included) as f64 / self.n_pixels as f64
        }
    }
}

/// Mean, median, sample SD and mean ± 1.96·SD/√n of `values`.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / (n as f64).sqrt();
    Some(Summary {
        mean,
        median,
        sd,
        ci_low: mean - half,
        ci_high: mean + half,
    })
}

/// Statistics of a 2-D map over `mask`, using only voxels flagged in
/// `converged`. The area counts every ROI pixel.
pub fn roi_stats(values: &[f32], converged: &[bool], mask: &Mask, pixel_area_mm2: f64) -> Result<RoiStats> {
    let n = mask.width() * mask.height();
    if values.len() != n || converged.len() != n {
        return Err(Error::dim(format!(
            "map has {} values / {} flags for a {}x{} mask",
            values.len(),
            converged.len(),
            mask.width(),
            mask.height()
        )));
    }
    let included: Vec<f64> = mask
        .data()
        .iter()
        .zip(values.iter().zip(converged))
        .filter(|(&m, (v, &ok))| m != 0 && ok && v.is_finite())
        .map(|(_, (&v, _))| f64::from(v))
        .collect();
    let n_pixels = mask.count();
    Ok(RoiStats {
        n_pixels,
        n_included: included.len(),
        area_mm2: n_pixels as f64 * pixel_area_mm2,
        summary: summarize(&included),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map() {
        let mask = Mask::from_fn(10, 10, |_, _| true);
        let s = roi_stats(&[3.5; 100], &[true; 100], &mask, 0.5).unwrap();
        let sum = s.summary.unwrap();
        assert_eq!((sum.mean, sum.median, sum.ci_high - sum.ci_low), (3.5, 3.5, 0.0));
        assert_eq!(s.area_mm2, 50.0);
    }

    #[test]
    fn one_to_nine() {
        let v: Vec<f64> = (1..=9).map(f64::from).collect();
        let s = summarize(&v).unwrap();
        assert_eq!((s.mean, s.median), (5.0, 5.0));
        assert!((s.sd - 7.5f64.sqrt()).abs() < 1e-12);
        assert!((s.sd - 2.7386).abs() < 1e-4);
        assert!((s.ci_high - 5.0 - 1.96 * s.sd / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_roi_is_explicit() {
        let mask = Mask::empty(2, 2);
        let s = roi_stats(&[1.0; 4], &[true; 4], &mask, 1.0).unwrap();
        assert!(s.summary.is_none());
        assert_eq!(s.area_mm2, 0.0);
    }

    #[test]
    fn non_converged_excluded() {
        let mask = Mask::from_fn(2, 2, |_, _| true);
        let s = roi_stats(&[1.0, 2.0, f32::NAN, 100.0], &[true, true, false, false], &mask, 1.0).unwrap();
        assert_eq!(s.n_included, 2);
        assert_eq!(s.mean(), Some(1.5));
        assert_eq!(s.excluded_fraction(), 0.5);
    }
}
