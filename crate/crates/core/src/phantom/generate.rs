use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{PhantomSpec, TissueRanges};
use crate::datapipe::{Acquisition, MaskVolume, Volume, VolumeHeader};
use crate::error::{Error, Result};

const PLACEMENT_ATTEMPTS: usize = 100;
/// Minimum crescent cross-section, in pixels, on every slice it occupies.
const MIN_SLICE_PIXELS: usize = 12;

/// Annulus-sector region extruded over a slice range, tapering towards its
/// ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crescent {
    pub cx: f64,
    pub cy: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    /// Direction of the arc's midpoint, radians.
    pub orientation: f64,
    /// Half the angular extent, radians.
    pub half_arc: f64,
    /// First and last occupied slice (inclusive).
    pub z_first: usize,
    pub z_last: usize,
}

impl Crescent {
    fn taper(&self, z: usize) -> Option<f64> {
        if z < self.z_first || z > self.z_last {
            return None;
        }
        let mid = 0.5 * (self.z_first + self.z_last) as f64;
        let half = (0.5 * (self.z_last - self.z_first) as f64).max(1.0);
        Some(1.0 - 0.3 * ((z as f64 - mid).abs() / half))
    }

    /// Whether the centre of pixel `(x, y)` on slice `z` lies inside.
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let Some(s) = self.taper(z) else {
            return false;
        };
        let (dx, dy) = (x as f64 + 0.5 - self.cx, y as f64 + 0.5 - self.cy);
        let r = dx.hypot(dy);
        if r < self.r_inner * s || r > self.r_outer * s {
            return false;
        }
        let mut d = dy.atan2(dx) - self.orientation;
        d = (d + PI).rem_euclid(2.0 * PI) - PI;
        d.abs() <= self.half_arc
    }
}

/// Smooth multiplicative field 1 + a·cos(…)·cos(…)·cos(…), bounded by 1 ± a.
#[derive(Debug, Clone, Copy)]
struct SmoothField {
    amplitude: f64,
    freq: [f64; 3],
    phase: [f64; 3],
}

impl SmoothField {
    fn sample(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        SmoothField {
            amplitude,
            freq: [
                rng.gen_range(0.4..1.0),
                rng.gen_range(0.4..1.0),
                rng.gen_range(0.2..0.5),
            ],
            phase: [
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.0..2.0 * PI),
            ],
        }
    }

    fn at(&self, u: [f64; 3]) -> f64 {
        let g: f64 = (0..3)
            .map(|i| (2.0 * PI * self.freq[i] * u[i] + self.phase[i]).cos())
            .product();
        1.0 + self.amplitude * g
    }
}

/// Ground-truth parameter maps on the phantom grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMaps {
    pub s0: Volume,
    pub t1: Volume,
    pub t1rho: Volume,
    pub t2star: Volume,
}

impl ParameterMaps {
    pub fn header(&self) -> &VolumeHeader {
        &self.s0.header
    }

    pub fn named(&self) -> [(&'static str, &Volume); 4] {
        [
            ("s0", &self.s0),
            ("t1", &self.t1),
            ("t1rho", &self.t1rho),
            ("t2star", &self.t2star),
        ]
    }
}

/// Phantom ground truth: medial/lateral meniscus masks and parameter maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub mask_mm: MaskVolume,
    pub mask_lm: MaskVolume,
    pub mask_union: MaskVolume,
    pub params: ParameterMaps,
    /// Medial (left image half) then lateral (right image half).
    pub crescents: [Crescent; 2],
}

fn header(spec: &PhantomSpec, tag: &str, subject: &str) -> VolumeHeader {
    VolumeHeader::new(spec.grid, spec.spacing_mm, Acquisition::new(tag, 0, None), subject)
}

/// Inside the elliptical "knee" that carries background tissue.
fn in_knee(spec: &PhantomSpec, x: usize, y: usize) -> bool {
    let [nx, ny, _] = spec.grid;
    let u = (x as f64 + 0.5 - 0.5 * nx as f64) / (0.47 * nx as f64);
    let v = (y as f64 + 0.5 - 0.5 * ny as f64) / (0.44 * ny as f64);
    u * u + v * v <= 1.0
}

fn place_crescent(spec: &PhantomSpec, rng: &mut ChaCha8Rng, lateral: bool) -> Option<Crescent> {
    let [nx, ny, nz] = spec.grid;
    let half = nx as f64 / 2.0;
    let r_outer = spec.outer_radius.at(rng.gen()) * nx as f64;
    let r_inner = r_outer * spec.thickness_ratio.at(rng.gen());
    let margin = 2.0;
    let (x_lo, x_hi) = (r_outer + margin, half - r_outer - margin);
    let (y_lo, y_hi) = (r_outer + margin, ny as f64 - r_outer - margin);
    if x_lo >= x_hi || y_lo >= y_hi {
        return None;
    }
    let quarter = (nz / 4).max(1);
    let c = Crescent {
        cx: rng.gen_range(x_lo..x_hi) + if lateral { half } else { 0.0 },
        cy: rng.gen_range(y_lo..y_hi),
        r_inner,
        r_outer,
        orientation: rng.gen_range(0.0..2.0 * PI),
        half_arc: spec.arc_degrees.at(rng.gen()).to_radians() / 2.0,
        z_first: rng.gen_range(1..=quarter.min(nz - 2)),
        z_last: rng.gen_range((nz - 1 - quarter).max(1)..=nz - 2),
    };
    (c.z_first <= c.z_last).then_some(c)
}

fn valid_crescent(spec: &PhantomSpec, c: &Crescent, lateral: bool) -> bool {
    let [nx, ny, _] = spec.grid;
    let half = nx / 2;
    (c.z_first..=c.z_last).all(|z| {
        let mut count = 0;
        for y in 0..ny {
            for x in 0..nx {
                if c.contains(x, y, z) {
                    if (x >= half) != lateral || !in_knee(spec, x, y) {
                        return false;
                    }
                    count += 1;
                }
            }
        }
        count >= MIN_SLICE_PIXELS
    })
}

fn draw(ranges: &TissueRanges, rng: &mut ChaCha8Rng) -> [f64; 4] {
    [
        ranges.s0.at(rng.gen()),
        ranges.t1.at(rng.gen()),
        ranges.t1rho.at(rng.gen()),
        ranges.t2star.at(rng.gen()),
    ]
}

/// Draws one phantom: two disjoint crescents (medial in the left image half,
/// lateral in the right) inside an elliptical background, with per-region
/// parameters drawn from the `PhantomSpec` ranges and modulated by smooth ±a fields.
/// Outside the ellipse the proton density is 0.
pub fn generate(spec: &PhantomSpec, seed: u64, subject_id: &str) -> Result<PhantomTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut crescents = Vec::with_capacity(2);
    for lateral in [false, true] {
        let found = (0..PLACEMENT_ATTEMPTS)
            .filter_map(|_| place_crescent(spec, &mut rng, lateral))
            .find(|c| valid_crescent(spec, c, lateral));
        match found {
            Some(c) => crescents.push(c),
            None => {
                return Err(Error::Generation(format!(
                    "could not place the {} crescent after {PLACEMENT_ATTEMPTS} attempts",
                    if lateral { "lateral" } else { "medial" }
                )))
            }
        }
    }
    let crescents = [crescents[0], crescents[1]];
    let base_mm = draw(&spec.meniscus, &mut rng);
    let base_lm = draw(&spec.meniscus, &mut rng);
    let base_bg = draw(&spec.background, &mut rng);
    let fields: [SmoothField; 4] = std::array::from_fn(|_| SmoothField::sample(&mut rng, spec.field_amplitude));

    let [nx, ny, nz] = spec.grid;
    let n = nx * ny * nz;
    let mut mm = vec![0u8; n];
    let mut lm = vec![0u8; n];
    let mut maps: [Vec<f32>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = (z * ny + y) * nx + x;
                let u = [x as f64 / nx as f64, y as f64 / ny as f64, z as f64 / nz as f64];
                let (base, knee) = if crescents[0].contains(x, y, z) {
                    mm[v] = 1;
                    (base_mm, true)
                } else if crescents[1].contains(x, y, z) {
                    lm[v] = 1;
                    (base_lm, true)
                } else {
                    (base_bg, in_knee(spec, x, y))
                };
                for k in 0..4 {
                    let value = base[k] * fields[k].at(u);
                    maps[k][v] = if k == 0 && !knee { 0.0 } else { value as f32 };
                }
            }
        }
    }
    let union: Vec<u8> = mm.iter().zip(&lm).map(|(a, b)| a | b).collect();
    let [s0, t1, t1rho, t2star] = maps;
    let vol = |tag: &str, data: Vec<f32>| Volume::new(header(spec, tag, subject_id), data);
    let mvol = |tag: &str, data: Vec<u8>| MaskVolume::new(header(spec, tag, subject_id), data);
    Ok(PhantomTruth {
        mask_mm: mvol("mask_mm", mm)?,
        mask_lm: mvol("mask_lm", lm)?,
        mask_union: mvol("mask_union", union)?,
        params: ParameterMaps {
            s0: vol("s0", s0)?,
            t1: vol("t1", t1)?,
            t1rho: vol("t1rho", t1rho)?,
            t2star: vol("t2star", t2star)?,
        },
        crescents,
    })
}
