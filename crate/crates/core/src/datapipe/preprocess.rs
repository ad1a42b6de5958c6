use serde::{Deserialize, Serialize};

use super::image::{Mask, SliceImage};
use super::volume::{MaskVolume, Volume};
use crate::error::{Error, Result};

/// Voxelwise `a − b`; signed values are kept as-is.
pub fn subtract_volumes(a: &Volume, b: &Volume) -> Result<Volume> {
    if !a.header.same_grid(&b.header) {
        return Err(Error::input(format!(
            "cannot subtract grids {:?}@{:?} and {:?}@{:?}",
            a.header.matrix, a.header.spacing_mm, b.header.matrix, b.header.spacing_mm
        )));
    }
    let mut header = a.header.clone();
    header.acquisition.sequence = format!(
        "{}-minus-{}",
        a.header.acquisition.sequence, b.header.acquisition.sequence
    );
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Volume::new(header, data)
}

/// A contrast-normalisation stage applied to every slice before cropping.
pub trait ContrastStage {
    fn apply(&self, slice: &SliceImage) -> SliceImage;
}

/// Robust percentile window rescaled to [0, 1] followed by a gamma curve.
///
/// Stands in for an edge-aware local-Laplacian filter; any other stage can be
/// plugged in through [`ContrastStage`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PercentileGamma {
    pub low_pct: f64,
    pub high_pct: f64,
    pub gamma: f64,
}

impl Default for PercentileGamma {
    fn default() -> Self {
        PercentileGamma {
            low_pct: 1.0,
            high_pct: 99.0,
            gamma: 0.8,
        }
    }
}

/// Linear-interpolated percentile of an ascending slice (`pct` in [0, 100]).
pub fn percentile(sorted: &[f32], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    f64::from(sorted[lo]) * (1.0 - frac) + f64::from(sorted[hi]) * frac
}

impl ContrastStage for PercentileGamma {
    fn apply(&self, slice: &SliceImage) -> SliceImage {
        let mut sorted = slice.data.clone();
        sorted.sort_by(f32::total_cmp);
        let lo = percentile(&sorted, self.low_pct);
        let hi = percentile(&sorted, self.high_pct);
        let span = hi - lo;
        let degenerate = !(span > 1e-12 * lo.abs().max(hi.abs()).max(1e-30));
        let data = slice
            .data
            .iter()
            .map(|&v| {
                if degenerate {
                    0.5
                } else {
                    let t = ((f64::from(v) - lo) / span).clamp(0.0, 1.0);
                    t.powf(self.gamma) as f32
                }
            })
            .collect();
        SliceImage { data, ..slice.clone() }
    }
}

pub fn enhance_contrast(slice: &SliceImage) -> SliceImage {
    PercentileGamma::default().apply(slice)
}

/// Top-left corner of a centred `size` window; odd margins leave the extra
/// pixel on the high-index side.
pub fn crop_origin(width: usize, height: usize, size: usize) -> Result<(usize, usize)> {
    if width < size || height < size {
        return Err(Error::input(format!("cannot crop {width}x{height} to {size}x{size}")));
    }
    Ok(((width - size) / 2, (height - size) / 2))
}

fn crop_raw<V: Copy>(w: usize, data: &[V], x0: usize, y0: usize, size: usize) -> Vec<V> {
    (y0..y0 + size)
        .flat_map(|y| data[y * w + x0..y * w + x0 + size].iter().copied())
        .collect()
}

pub fn crop_center(slice: &SliceImage, size: usize) -> Result<SliceImage> {
    let (x0, y0) = crop_origin(slice.width, slice.height, size)?;
    Ok(SliceImage::new(size, size, crop_raw(slice.width, &slice.data, x0, y0, size))?.with_meta(slice.meta.clone()))
}

pub fn crop_center_mask(mask: &Mask, size: usize) -> Result<Mask> {
    let (x0, y0) = crop_origin(mask.width(), mask.height(), size)?;
    Ok(Mask::new(size, size, crop_raw(mask.width(), mask.data(), x0, y0, size))?.with_meta(mask.meta.clone()))
}

/// Places a cropped mask back into a `width × height` canvas (inverse of
/// [`crop_center_mask`]); pixels outside the window are 0.
pub fn uncrop_mask(mask: &Mask, width: usize, height: usize) -> Result<Mask> {
    let (x0, y0) = crop_origin(width, height, mask.width())?;
    if mask.width() != mask.height() {
        return Err(Error::dim("uncrop expects a square mask"));
    }
    let s = mask.width();
    Ok(Mask::from_fn(width, height, |x, y| {
        x >= x0 && y >= y0 && x < x0 + s && y < y0 + s && mask.get(x - x0, y - y0)
    })
    .with_meta(mask.meta.clone()))
}

/// Source coordinate of destination pixel `dst` under the half-pixel-centre
/// convention, clamped to the valid range.
fn half_pixel(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    s.clamp(0.0, (src_len - 1) as f64)
}

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
    s.min(src_len - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Nearest,
}

fn resize_raw(w: usize, h: usize, data: &[f32], ow: usize, oh: usize, mode: Interp) -> Vec<f32> {
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let v = match mode {
                Interp::Nearest => data[nearest_index(y, h, oh) * w + nearest_index(x, w, ow)],
                Interp::Bilinear => {
                    let sy = half_pixel(y, h, oh);
                    let sx = half_pixel(x, w, ow);
                    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                    let p = |yy: usize, xx: usize| f64::from(data[yy * w + xx]);
                    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                    let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                    (top * (1.0 - fy) + bot * fy) as f32
                }
            };
            out.push(v);
        }
    }
    out
}

pub fn resize(slice: &SliceImage, width: usize, height: usize, mode: Interp) -> Result<SliceImage> {
    if width == 0 || height == 0 {
        return Err(Error::input("resize target must be positive"));
    }
    let data = resize_raw(slice.width, slice.height, &slice.data, width, height, mode);
    Ok(SliceImage::new(width, height, data)?.with_meta(slice.meta.clone()))
}

/// Nearest-neighbour mask resize; output stays binary.
pub fn resize_mask(mask: &Mask, width: usize, height: usize) -> Result<Mask> {
    if width == 0 || height == 0 {
        return Err(Error::input("resize target must be positive"));
    }
    let (w, h) = (mask.width(), mask.height());
    let data = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| mask.data()[nearest_index(y, h, height) * w + nearest_index(x, w, width)])
        .collect();
    Ok(Mask::new(width, height, data)?.with_meta(mask.meta.clone()))
}

pub fn hflip(slice: &SliceImage) -> SliceImage {
    let w = slice.width;
    let data = (0..slice.data.len())
        .map(|i| slice.data[(i / w) * w + (w - 1 - i % w)])
        .collect();
    SliceImage { data, ..slice.clone() }
}

pub fn hflip_mask(mask: &Mask) -> Mask {
    let w = mask.width();
    Mask::from_fn(w, mask.height(), |x, y| mask.get(w - 1 - x, y)).with_meta(mask.meta.clone())
}

/// Inverse-mapped source coordinate for a rotation by `degrees` about the
/// image centre (counter-clockwise on screen, y pointing down).
fn rotate_source(x: usize, y: usize, w: usize, h: usize, degrees: f64) -> (f64, f64) {
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let dx = x as f64 - cx;
    let dy = y as f64 - cy;
    (cx + c * dx - s * dy, cy + s * dx + c * dy)
}

/// Bilinear rotation with zero fill outside the source.
pub fn rotate(slice: &SliceImage, degrees: f64) -> SliceImage {
    let (w, h) = (slice.width, slice.height);
    let at = |xx: isize, yy: isize| -> f64 {
        if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
            0.0
        } else {
            f64::from(slice.data[yy as usize * w + xx as usize])
        }
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = rotate_source(x, y, w, h, degrees);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (xi, yi) = (x0 as isize, y0 as isize);
            let v = (at(xi, yi) * (1.0 - fx) + at(xi + 1, yi) * fx) * (1.0 - fy)
                + (at(xi, yi + 1) * (1.0 - fx) + at(xi + 1, yi + 1) * fx) * fy;
            data.push(v as f32);
        }
    }
    SliceImage { data, ..slice.clone() }
}

/// Nearest-neighbour rotation with zero fill; output stays binary.
pub fn rotate_mask(mask: &Mask, degrees: f64) -> Mask {
    let (w, h) = (mask.width(), mask.height());
    Mask::from_fn(w, h, |x, y| {
        let (sx, sy) = rotate_source(x, y, w, h, degrees);
        let (xi, yi) = (sx.round(), sy.round());
        xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h && mask.get(xi as usize, yi as usize)
    })
    .with_meta(mask.meta.clone())
}

/// Rotation angles (degrees) used by [`augment`] next to identity and flip.
pub const AUGMENT_ANGLES: [f64; 4] = [-10.0, -5.0, 5.0, 10.0];

/// Six variants of a slice/mask pair: identity, horizontal flip and rotations
/// by ±5° and ±10°, with the same transform applied to both members.
pub fn augment(slice: &SliceImage, mask: &Mask) -> Result<Vec<(SliceImage, Mask)>> {
    if (slice.width, slice.height) != (mask.width(), mask.height()) {
        return Err(Error::dim(format!(
            "augment: slice {}x{} vs mask {}x{}",
            slice.width,
            slice.height,
            mask.width(),
            mask.height()
        )));
    }
    let mut out = Vec::with_capacity(6);
    out.push((slice.clone(), mask.clone()));
    out.push((hflip(slice), hflip_mask(mask)));
    for a in AUGMENT_ANGLES {
        out.push((rotate(slice, a), rotate_mask(mask, a)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceSelection {
    /// Keep slices whose mask has at least one positive pixel.
    Training,
    /// Keep every slice.
    Inference,
}

pub fn select_meniscus_slices(
    volume: &Volume,
    masks: &MaskVolume,
    mode: SliceSelection,
) -> Result<Vec<(SliceImage, Mask)>> {
    if volume.header.matrix != masks.header.matrix {
        return Err(Error::input(format!(
            "image grid {:?} vs mask grid {:?}",
            volume.header.matrix, masks.header.matrix
        )));
    }
    Ok((0..volume.nz())
        .map(|z| (volume.slice(z), masks.slice(z)))
        .filter(|(_, m)| mode == SliceSelection::Inference || !m.is_empty())
        .collect())
}
