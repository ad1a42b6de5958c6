use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` from which a parameter is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    /// Linear interpolation, `t ∈ [0, 1]`.
    pub fn at(&self, t: f64) -> f64 {
        self.lo + t * (self.hi - self.lo)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(Error::Config(format!(
                "{name} range [{}, {}] must be positive and non-degenerate",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Relaxation and proton-density ranges of one tissue class (times in ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueRanges {
    pub t1: Range,
    pub t1rho: Range,
    pub t2star: Range,
    pub s0: Range,
}

impl TissueRanges {
    fn validate(&self, tissue: &str) -> Result<()> {
        self.t1.validate(&format!("{tissue}.t1"))?;
        self.t1rho.validate(&format!("{tissue}.t1rho"))?;
        self.t2star.validate(&format!("{tissue}.t2star"))?;
        self.s0.validate(&format!("{tissue}.s0"))
    }
}

/// Synthetic knee phantom description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// `[nx, ny, nz]`.
    pub grid: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub meniscus: TissueRanges,
    pub background: TissueRanges,
    /// Standard deviation of the additive Gaussian noise, in signal units.
    pub noise_sigma: f64,
    /// Amplitude of the smooth multiplicative parameter field (±).
    pub field_amplitude: f64,
    /// Maximum deviation of the simulated B1 scale from 1.
    pub b1_amplitude: f64,
    /// Outer crescent radius as a fraction of the grid width.
    pub outer_radius: Range,
    /// Inner/outer radius ratio.
    pub thickness_ratio: Range,
    /// Angular extent of each crescent in degrees.
    pub arc_degrees: Range,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            grid: [128, 128, 12],
            spacing_mm: [1.0, 1.0, 3.0],
            meniscus: TissueRanges {
                t1: Range::new(900.0, 1000.0),
                t1rho: Range::new(25.0, 30.0),
                t2star: Range::new(8.0, 11.0),
                s0: Range::new(900.0, 1100.0),
            },
            background: TissueRanges {
                t1: Range::new(1100.0, 1400.0),
                t1rho: Range::new(40.0, 80.0),
                t2star: Range::new(20.0, 40.0),
                s0: Range::new(450.0, 650.0),
            },
            noise_sigma: 10.0,
            field_amplitude: 0.05,
            b1_amplitude: 0.15,
            outer_radius: Range::new(0.11, 0.16),
            thickness_ratio: Range::new(0.45, 0.6),
            arc_degrees: Range::new(150.0, 210.0),
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let [nx, ny, nz] = self.grid;
        if nx < 16 || ny < 16 || nz < 3 {
            return Err(Error::Config(format!("grid {:?} is too small (≥ 16×16×3)", self.grid)));
        }
        if self.spacing_mm.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("spacing {:?} must be positive", self.spacing_mm)));
        }
        self.meniscus.validate("meniscus")?;
        self.background.validate("background")?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {} must be ≥ 0", self.noise_sigma)));
        }
        if !(0.0..0.5).contains(&self.field_amplitude) {
            return Err(Error::Config("field amplitude must lie in [0, 0.5)".into()));
        }
        if !(0.0..0.6).contains(&self.b1_amplitude) {
            return Err(Error::Config("B1 amplitude must lie in [0, 0.6)".into()));
        }
        self.outer_radius.validate("outer_radius")?;
        self.thickness_ratio.validate("thickness_ratio")?;
        self.arc_degrees.validate("arc_degrees")?;
        if self.outer_radius.hi >= 0.25 || self.thickness_ratio.hi >= 1.0 || self.arc_degrees.hi > 360.0 {
            return Err(Error::Config("crescent geometry ranges exceed their limits".into()));
        }
        Ok(())
    }
}
