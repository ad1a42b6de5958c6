//! On-disk phantom cohorts.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.csv
//! <subject>/acq/{t2star_k,afi_k,vfa_k,t1rho_k}.mvol   raw acquisitions
//! <subject>/subtraction.mvol                           NAFP 0 − NAFP 2
//! <subject>/truth/{mask_mm,mask_lm,mask_union}.mvol    labels (u8)
//! <subject>/truth/{s0,t1,t1rho,t2star,b1}.mvol         true parameters
//! <subject>/prep/slice_ZZZ.mvol, mask_ZZZ.mvol         prepared 2-D pairs
//! ```

use std::path::{Path, PathBuf};

use super::generate::{generate, PhantomTruth};
use super::simulate::simulate_acquisition;
use super::spec::PhantomSpec;
use crate::datapipe::{
    load_mask_volume, load_volume, save_mask_volume, save_volume, split_subjects, subtract_volumes, write_manifest,
    Acquisition, HealthStatus, ManifestRow, MaskVolume, PrepConfig, SplitName, Subject, Volume, VolumeHeader,
};
use crate::error::{Error, Result};
use crate::relaxfit::{AcquisitionSet, SequenceParams};

pub fn subject_id(i: usize) -> String {
    format!("sub{i:03}")
}

/// Alternating health status, healthy first.
pub fn subject_status(i: usize) -> HealthStatus {
    if i.is_multiple_of(2) {
        HealthStatus::Healthy
    } else {
        HealthStatus::Patient
    }
}

/// Per-subject seed derived from the cohort seed.
pub fn subject_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Index of N_AFP = `n` in the sequence's AFP list.
fn nafp_index(seq: &SequenceParams, n: u32) -> Result<usize> {
    seq.t1rho_nafp
        .iter()
        .position(|&v| v == n)
        .ok_or_else(|| Error::Config(format!("the AFP series lacks N_AFP = {n}")))
}

/// The segmentation input: first AFP volume minus the N_AFP = 2 volume.
pub fn subtraction_image(acq: &AcquisitionSet, seq: &SequenceParams) -> Result<Volume> {
    subtract_volumes(&acq.t1rho[nafp_index(seq, 0)?], &acq.t1rho[nafp_index(seq, 2)?])
}

fn acq_name(v: &Volume) -> String {
    format!("{}_{}", v.header.acquisition.sequence, v.header.acquisition.index)
}

pub fn acquisition_paths(dir: &Path, seq: &SequenceParams) -> Vec<PathBuf> {
    let acq = dir.join("acq");
    let mut out = Vec::new();
    for k in 0..seq.t2star_tes.len() {
        out.push(acq.join(format!("t2star_{k}.mvol")));
    }
    for k in 0..2 {
        out.push(acq.join(format!("afi_{k}.mvol")));
    }
    for k in 0..seq.vfa_fas.len() {
        out.push(acq.join(format!("vfa_{k}.mvol")));
    }
    for k in 0..seq.t1rho_nafp.len() {
        out.push(acq.join(format!("t1rho_{k}.mvol")));
    }
    out
}

/// Reads the acquisitions written by [`make_dataset`] for one subject.
pub fn load_acquisitions(subject_dir: &Path, seq: &SequenceParams) -> Result<AcquisitionSet> {
    let mut vols = acquisition_paths(subject_dir, seq)
        .iter()
        .map(|p| load_volume(p))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut take = |n: usize| vols.by_ref().take(n).collect::<Vec<_>>();
    let t2star = take(seq.t2star_tes.len());
    let afi = take(2);
    let vfa = take(seq.vfa_fas.len());
    let t1rho = take(seq.t1rho_nafp.len());
    let [a0, a1]: [Volume; 2] = afi.try_into().expect("two AFI volumes");
    Ok(AcquisitionSet {
        t2star,
        afi: [a0, a1],
        vfa,
        t1rho,
    })
}

/// One subject's ground truth as stored on disk.
pub struct StoredTruth {
    pub mask_mm: MaskVolume,
    pub mask_lm: MaskVolume,
    pub mask_union: MaskVolume,
}

pub fn load_truth_masks(subject_dir: &Path) -> Result<StoredTruth> {
    let t = subject_dir.join("truth");
    Ok(StoredTruth {
        mask_mm: load_mask_volume(&t.join("mask_mm.mvol"))?,
        mask_lm: load_mask_volume(&t.join("mask_lm.mvol"))?,
        mask_union: load_mask_volume(&t.join("mask_union.mvol"))?,
    })
}

/// Prepared 2-D slice/mask pairs of a subject, in slice order.
pub fn prepare_subject(
    subtraction: &Volume,
    union: &MaskVolume,
    prep: &PrepConfig,
) -> Result<Vec<(usize, Volume, MaskVolume)>> {
    let s = prep.size;
    let scale = prep.crop as f64 / s as f64;
    let h = &subtraction.header;
    let header = |tag: &str, z: usize| VolumeHeader {
        matrix: [s, s, 1],
        spacing_mm: [h.spacing_mm[0] * scale, h.spacing_mm[1] * scale, h.spacing_mm[2]],
        acquisition: Acquisition::new(tag, z, None),
        ..h.clone()
    };
    (0..subtraction.nz())
        .map(|z| {
            let img = prep.prepare_slice(&subtraction.slice(z))?;
            let mask = prep.prepare_mask(&union.slice(z))?;
            Ok((
                z,
                Volume::new(header("prep_slice", z), img.data)?,
                MaskVolume::new(header("prep_mask", z), mask.data().to_vec())?,
            ))
        })
        .collect()
}

/// Everything generated for one subject, in memory.
pub struct SubjectData {
    pub id: String,
    pub status: HealthStatus,
    pub truth: PhantomTruth,
    pub acquisitions: AcquisitionSet,
    pub b1: Volume,
    pub subtraction: Volume,
}

/// Generates and simulates subject `i` of a cohort.
pub fn make_subject(i: usize, spec: &PhantomSpec, seq: &SequenceParams, seed: u64) -> Result<SubjectData> {
    let id = subject_id(i);
    let s = subject_seed(seed, i);
    let truth = generate(spec, s, &id)?;
    let sim = simulate_acquisition(&truth.params, seq, spec.noise_sigma, spec.b1_amplitude, s ^ 0x5EED)?;
    let subtraction = subtraction_image(&sim.acquisitions, seq)?;
    Ok(SubjectData {
        id,
        status: subject_status(i),
        truth,
        acquisitions: sim.acquisitions,
        b1: sim.b1,
        subtraction,
    })
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Writes a seeded phantom cohort of `n` subjects split `(train, val, test)`
/// and returns the manifest rows (also written to `manifest.csv`).
pub fn make_dataset(
    out: &Path,
    n: usize,
    counts: (usize, usize, usize),
    spec: &PhantomSpec,
    seq: &SequenceParams,
    prep: &PrepConfig,
    seed: u64,
) -> Result<Vec<ManifestRow>> {
    if n < 3 {
        return Err(Error::input(format!("a cohort needs at least 3 subjects, got {n}")));
    }
    let subjects: Vec<Subject> = (0..n)
        .map(|i| Subject {
            id: subject_id(i),
            status: subject_status(i),
        })
        .collect();
    let split = split_subjects(&subjects, counts, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rows = Vec::new();
    for i in 0..n {
        let data = make_subject(i, spec, seq, seed)?;
        let dir = out.join(&data.id);
        let split_name = split.split_of(&data.id).unwrap_or(SplitName::Train);
        let mut row = |kind: &str, slice: Option<usize>, path: &Path| {
            rows.push(ManifestRow {
                subject_id: data.id.clone(),
                status: data.status,
                split: split_name,
                kind: kind.to_owned(),
                slice,
                path: rel(out, path),
            })
        };
        for (v, p) in data.acquisitions.volumes().zip(acquisition_paths(&dir, seq)) {
            save_volume(v, &p)?;
            row(&acq_name(v), None, &p);
        }
        let p = dir.join("subtraction.mvol");
        save_volume(&data.subtraction, &p)?;
        row("subtraction", None, &p);
        let t = dir.join("truth");
        for (name, m) in [
            ("mask_mm", &data.truth.mask_mm),
            ("mask_lm", &data.truth.mask_lm),
            ("mask_union", &data.truth.mask_union),
        ] {
            let p = t.join(format!("{name}.mvol"));
            save_mask_volume(m, &p)?;
            row(name, None, &p);
        }
        for (name, v) in data.truth.params.named().into_iter().chain([("b1", &data.b1)]) {
            let p = t.join(format!("{name}.mvol"));
            save_volume(v, &p)?;
            row(&format!("truth_{name}"), None, &p);
        }
        for (z, img, mask) in prepare_subject(&data.subtraction, &data.truth.mask_union, prep)? {
            let ps = dir.join("prep").join(format!("slice_{z:03}.mvol"));
            let pm = dir.join("prep").join(format!("mask_{z:03}.mvol"));
            save_volume(&img, &ps)?;
            save_mask_volume(&mask, &pm)?;
            row("slice", Some(z), &ps);
            row("slice_mask", Some(z), &pm);
        }
    }
    write_manifest(&out.join("manifest.csv"), &rows)?;
    Ok(rows)
}
