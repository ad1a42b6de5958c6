use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthStatus {
    Healthy,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub status: HealthStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn split_of(&self, subject: &str) -> Option<SplitName> {
        let has = |v: &Vec<String>| v.iter().any(|s| s == subject);
        if has(&self.train) {
            Some(SplitName::Train)
        } else if has(&self.validation) {
            Some(SplitName::Validation)
        } else if has(&self.test) {
            Some(SplitName::Test)
        } else {
            None
        }
    }

    pub fn is_disjoint(&self) -> bool {
        let a: BTreeSet<_> = self.train.iter().collect();
        let b: BTreeSet<_> = self.validation.iter().collect();
        let c: BTreeSet<_> = self.test.iter().collect();
        a.len() == self.train.len()
            && b.len() == self.validation.len()
            && c.len() == self.test.len()
            && a.is_disjoint(&b)
            && a.is_disjoint(&c)
            && b.is_disjoint(&c)
    }
}

/// Largest-remainder apportionment of `total` over strata sized `sizes`.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let all: usize = sizes.iter().sum();
    if all == 0 {
        return vec![0; sizes.len()];
    }
    let mut quota: Vec<usize> = sizes.iter().map(|&s| total * s / all).collect();
    let mut rest: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(i, &s)| (total * s % all, i)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = quota.iter().sum();
    for &(_, i) in rest.iter().take(total - assigned) {
        quota[i] += 1;
    }
    quota
}

/// Stratified, seeded subject-level split into `(train, validation, test)`
/// counts. Validation and test take their share from every health-status
/// stratum in proportion to its size; training receives the remainder.
pub fn split_subjects(subjects: &[Subject], counts: (usize, usize, usize), seed: u64) -> Result<DatasetSplit> {
    let (n_train, n_val, n_test) = counts;
    if n_train + n_val + n_test != subjects.len() {
        return Err(Error::Split(format!(
            "counts {n_train}/{n_val}/{n_test} do not sum to {} subjects",
            subjects.len()
        )));
    }
    let ids: BTreeSet<_> = subjects.iter().map(|s| &s.id).collect();
    if ids.len() != subjects.len() {
        return Err(Error::Split("duplicate subject ids".into()));
    }
    let mut strata: BTreeMap<HealthStatus, Vec<String>> = BTreeMap::new();
    for s in subjects {
        strata.entry(s.status).or_default().push(s.id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ids in strata.values_mut() {
        ids.sort();
        ids.shuffle(&mut rng);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let held_out = apportion(n_val + n_test, &sizes);
    let val_q = apportion(n_val, &held_out);
    let test_q: Vec<usize> = held_out.iter().zip(&val_q).map(|(h, v)| h - v).collect();
    let mut split = DatasetSplit::default();
    for (((status, ids), vq), tq) in strata.iter().zip(val_q).zip(test_q) {
        if vq + tq > ids.len() {
            return Err(Error::Split(format!(
                "stratum {status:?} has {} subjects, needs {}",
                ids.len(),
                vq + tq
            )));
        }
        split.validation.extend_from_slice(&ids[..vq]);
        split.test.extend_from_slice(&ids[vq..vq + tq]);
        split.train.extend_from_slice(&ids[vq + tq..]);
    }
    for v in [&mut split.train, &mut split.validation, &mut split.test] {
        v.sort();
    }
    Ok(split)
}

/// One row of the dataset manifest CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject_id: String,
    pub status: HealthStatus,
    pub split: SplitName,
    /// Role of the file, e.g. `subtraction`, `mask_union`, `t2star_3`.
    pub kind: String,
    pub slice: Option<usize>,
    pub path: String,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                offset: e.position().map_or(0, |p| p.byte()),
                msg: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}
