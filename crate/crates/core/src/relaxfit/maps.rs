//! Per-voxel relaxation maps over whole acquisition sets.

use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::FitResult;
use super::models::{afi_flip_angle, b1_scale, fit_t1rho, fit_t2star, fit_vfa_t1};
use super::sequence::SequenceParams;
use crate::datapipe::{load_volume, save_volume, Acquisition, MaskVolume, Volume, VolumeHeader};
use crate::error::{Error, Result};

/// Every volume of one subject's examination, all on one spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSet {
    /// One volume per echo time.
    pub t2star: Vec<Volume>,
    /// AFI pair (TR1, TR2).
    pub afi: [Volume; 2],
    /// One volume per VFA flip angle.
    pub vfa: Vec<Volume>,
    /// One volume per N_AFP value.
    pub t1rho: Vec<Volume>,
}

impl AcquisitionSet {
    pub fn volumes(&self) -> impl Iterator<Item = &Volume> {
        self.t2star
            .iter()
            .chain(self.afi.iter())
            .chain(self.vfa.iter())
            .chain(self.t1rho.iter())
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.afi[0].header
    }

    fn check(&self, seq: &SequenceParams) -> Result<()> {
        let counts = [
            ("echo", self.t2star.len(), seq.t2star_tes.len()),
            ("VFA", self.vfa.len(), seq.vfa_fas.len()),
            ("AFP", self.t1rho.len(), seq.t1rho_nafp.len()),
        ];
        for (what, got, want) in counts {
            if got != want {
                return Err(Error::input(format!("{got} {what} volumes, sequence defines {want}")));
            }
        }
        let h = self.header();
        if let Some(v) = self.volumes().find(|v| !v.header.same_grid(h)) {
            return Err(Error::input(format!(
                "volume {}#{} has grid {:?}/{:?}, expected {:?}/{:?}",
                v.header.acquisition.sequence,
                v.header.acquisition.index,
                v.header.matrix,
                v.header.spacing_mm,
                h.matrix,
                h.spacing_mm
            )));
        }
        Ok(())
    }
}

/// Bit flags in [`RelaxMaps::status`].
pub mod status {
    pub const FITTED: u8 = 1;
    pub const T2STAR: u8 = 2;
    pub const T1RHO: u8 = 4;
    pub const B1: u8 = 8;
    pub const T1: u8 = 16;
}

/// Names the parameter maps held by [`RelaxMaps`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    T1,
    T1rho,
    T2star,
    S0,
    B1,
}

impl MapKind {
    pub const ALL: [MapKind; 5] = [MapKind::T1, MapKind::T1rho, MapKind::T2star, MapKind::S0, MapKind::B1];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::T1 => "t1",
            MapKind::T1rho => "t1rho",
            MapKind::T2star => "t2star",
            MapKind::S0 => "s0",
            MapKind::B1 => "b1",
        }
    }

    fn flag(self) -> u8 {
        match self {
            MapKind::T1 => status::T1,
            MapKind::T1rho => status::T1RHO,
            MapKind::T2star | MapKind::S0 => status::T2STAR,
            MapKind::B1 => status::B1,
        }
    }
}

/// Fit diagnostics of one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelDiagnostics {
    pub voxel: usize,
    pub status: u8,
    pub t2star_iterations: usize,
    pub t2star_rss: f64,
    pub t1rho_iterations: usize,
    pub t1rho_rss: f64,
    pub t1_iterations: usize,
    pub t1_rss: f64,
}

/// Parameter maps on the acquisition grid. Voxels that were skipped or
/// whose fit failed hold NaN and have the corresponding status bit clear.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxMaps {
    pub header: VolumeHeader,
    pub t1: Vec<f32>,
    pub t1rho: Vec<f32>,
    pub t2star: Vec<f32>,
    pub s0: Vec<f32>,
    pub b1: Vec<f32>,
    pub status: Vec<u8>,
    pub diagnostics: Vec<VoxelDiagnostics>,
}

struct VoxelOut {
    t1: f32,
    t1rho: f32,
    t2star: f32,
    s0: f32,
    b1: f32,
    diag: VoxelDiagnostics,
}

fn value(r: &FitResult, i: usize) -> f32 {
    if r.converged {
        r.params[i] as f32
    } else {
        f32::NAN
    }
}

fn fit_voxel(acq: &AcquisitionSet, seq: &SequenceParams, v: usize) -> Result<VoxelOut> {
    let sample = |vols: &[Volume]| -> Vec<f64> { vols.iter().map(|x| f64::from(x.data[v])).collect() };
    let t2 = fit_t2star(&sample(&acq.t2star), seq)?;
    let tr = fit_t1rho(&sample(&acq.t1rho), seq)?;
    let afi = afi_flip_angle(
        f64::from(acq.afi[0].data[v]),
        f64::from(acq.afi[1].data[v]),
        seq.afi_n(),
    )
    .ok()
    .map(|a| b1_scale(a, seq.afi_fa_nominal));
    let t1 = match afi {
        Some(b1) => fit_vfa_t1(&sample(&acq.vfa), &seq.vfa_fas, seq.vfa_tr, b1)?,
        None => FitResult::flagged(2, "no B1 estimate"),
    };
    let mut st = status::FITTED;
    for (ok, flag) in [
        (t2.converged, status::T2STAR),
        (tr.converged, status::T1RHO),
        (afi.is_some(), status::B1),
        (t1.converged, status::T1),
    ] {
        if ok {
            st |= flag;
        }
    }
    Ok(VoxelOut {
        t1: value(&t1, 1),
        t1rho: value(&tr, 1),
        t2star: value(&t2, 1),
        s0: value(&t2, 0),
        b1: afi.map_or(f32::NAN, |b| b as f32),
        diag: VoxelDiagnostics {
            voxel: v,
            status: st,
            t2star_iterations: t2.iterations,
            t2star_rss: t2.rss,
            t1rho_iterations: tr.iterations,
            t1rho_rss: tr.rss,
            t1_iterations: t1.iterations,
            t1_rss: t1.rss,
        },
    })
}

/// Fits every voxel inside `mask` (all voxels when `None`): AFI → B1 scale,
/// VFA → T1 (B1-corrected), AFP series → T1ρ, echo series → T2* and S0.
///
/// Voxels are independent, so `parallel` only changes speed, never results.
pub fn fit_volume(
    acq: &AcquisitionSet,
    seq: &SequenceParams,
    mask: Option<&MaskVolume>,
    parallel: bool,
) -> Result<RelaxMaps> {
    seq.validate()?;
    acq.check(seq)?;
    let header = acq.header().clone();
    let n = header.voxel_count();
    if let Some(m) = mask {
        if !m.header.same_grid(&header) {
            return Err(Error::input(format!(
                "mask grid {:?} differs from acquisition grid {:?}",
                m.header.matrix, header.matrix
            )));
        }
    }
    let voxels: Vec<usize> = (0..n).filter(|&v| mask.is_none_or(|m| m.data[v] != 0)).collect();
    let run = |&v: &usize| fit_voxel(acq, seq, v);
    let fitted: Result<Vec<VoxelOut>> = if parallel {
        #[cfg(feature = "parallel")]
        {
            voxels.par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            voxels.iter().map(run).collect()
        }
    } else {
        voxels.iter().map(run).collect()
    };
    let mut maps = RelaxMaps {
        header: VolumeHeader {
            acquisition: Acquisition::new("relax_maps", 0, None),
            ..header
        },
        t1: vec![f32::NAN; n],
        t1rho: vec![f32::NAN; n],
        t2star: vec![f32::NAN; n],
        s0: vec![f32::NAN; n],
        b1: vec![f32::NAN; n],
        status: vec![0; n],
        diagnostics: Vec::with_capacity(voxels.len()),
    };
    for out in fitted? {
        let v = out.diag.voxel;
        maps.t1[v] = out.t1;
        maps.t1rho[v] = out.t1rho;
        maps.t2star[v] = out.t2star;
        maps.s0[v] = out.s0;
        maps.b1[v] = out.b1;
        maps.status[v] = out.diag.status;
        maps.diagnostics.push(out.diag);
    }
    Ok(maps)
}

impl RelaxMaps {
    pub fn map(&self, kind: MapKind) -> &[f32] {
        match kind {
            MapKind::T1 => &self.t1,
            MapKind::T1rho => &self.t1rho,
            MapKind::T2star => &self.t2star,
            MapKind::S0 => &self.s0,
            MapKind::B1 => &self.b1,
        }
    }

    /// Whether voxel `v` holds a converged value of `kind`.
    pub fn converged(&self, kind: MapKind, v: usize) -> bool {
        self.status[v] & kind.flag() != 0
    }

    fn slice_range(&self, z: usize) -> std::ops::Range<usize> {
        let n = self.header.matrix[0] * self.header.matrix[1];
        z * n..(z + 1) * n
    }

    /// Values and convergence flags of `kind` on slice `z`.
    pub fn slice(&self, kind: MapKind, z: usize) -> (&[f32], Vec<bool>) {
        let r = self.slice_range(z);
        let ok = r.clone().map(|v| self.converged(kind, v)).collect();
        (&self.map(kind)[r], ok)
    }

    /// Fraction of fitted voxels whose `kind` fit did not converge.
    pub fn exclusion_fraction(&self, kind: MapKind) -> f64 {
        let fitted = self.status.iter().filter(|&&s| s & status::FITTED != 0).count();
        if fitted == 0 {
            return 0.0;
        }
        let failed = self
            .status
            .iter()
            .filter(|&&s| s & status::FITTED != 0 && s & kind.flag() == 0)
            .count();
        failed as f64 / fitted as f64
    }

    /// Writes one `.mvol` per map plus `status.mvol` and `fit_diagnostics.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let vol = |name: &str, data: Vec<f32>| -> Result<()> {
            let header = VolumeHeader {
                acquisition: Acquisition::new(name, 0, None),
                ..self.header.clone()
            };
            save_volume(&Volume::new(header, data)?, &dir.join(format!("{name}.mvol")))
        };
        for kind in MapKind::ALL {
            vol(kind.name(), self.map(kind).to_vec())?;
        }
        vol("status", self.status.iter().map(|&s| f32::from(s)).collect())?;
        let path = dir.join("fit_diagnostics.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        for d in &self.diagnostics {
            w.serialize(d)
                .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Reads maps written by [`Self::save`] (diagnostics are not reloaded).
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| load_volume(&dir.join(format!("{name}.mvol")));
        let status_vol = read("status")?;
        let mut header = status_vol.header.clone();
        header.acquisition = Acquisition::new("relax_maps", 0, None);
        let mut maps = RelaxMaps {
            header,
            t1: Vec::new(),
            t1rho: Vec::new(),
            t2star: Vec::new(),
            s0: Vec::new(),
            b1: Vec::new(),
            status: status_vol.data.iter().map(|&v| v as u8).collect(),
            diagnostics: Vec::new(),
        };
        for kind in MapKind::ALL {
            let v = read(kind.name())?;
            if !v.header.same_grid(&maps.header) {
                return Err(Error::input(format!(
                    "{} map grid differs from status map",
                    kind.name()
                )));
            }
            let slot = match kind {
                MapKind::T1 => &mut maps.t1,
                MapKind::T1rho => &mut maps.t1rho,
                MapKind::T2star => &mut maps.t2star,
                MapKind::S0 => &mut maps.s0,
                MapKind::B1 => &mut maps.b1,
            };
            *slot = v.data;
        }
        Ok(maps)
    }
}
