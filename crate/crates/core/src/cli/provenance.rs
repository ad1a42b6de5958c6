//! Per-run provenance records: resolved configuration echo plus content
//! hashes of every input file.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<FileRecord> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileRecord {
        path: path.to_string_lossy().replace('\\', "/"),
        bytes,
        sha256: h.finalize().iter().map(|b| format!("{b:02x}")).collect(),
    })
}

/// Input files read by a command, in first-read order without duplicates.
#[derive(Debug, Default)]
pub struct InputLog(Vec<PathBuf>);

impl InputLog {
    pub fn add(&mut self, p: impl Into<PathBuf>) {
        let p = p.into();
        if !self.0.contains(&p) {
            self.0.push(p);
        }
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.0
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Deepest directory containing every path of `paths`.
fn common_ancestor(paths: &[PathBuf]) -> Option<PathBuf> {
    let mut iter = paths.iter().filter_map(|p| p.parent());
    let mut common: PathBuf = iter.next()?.to_path_buf();
    for p in iter {
        while !p.starts_with(&common) {
            if !common.pop() {
                return None;
            }
        }
    }
    Some(common)
}

/// Writes `<command>.config.json` and `<command>.provenance.json` into
/// `dir`. Input paths are recorded relative to their deepest common
/// directory, so records do not depend on where a run was placed.
pub fn write_run_record(dir: &Path, command: &str, cfg: &RunConfig, inputs: &InputLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = cfg.to_json();
    let base = common_ancestor(inputs.paths());
    let mut records = Vec::new();
    for p in inputs.paths() {
        let mut r = hash_file(p)?;
        if let Some(b) = &base {
            if let Ok(rel) = p.strip_prefix(b) {
                r.path = rel.to_string_lossy().replace('\\', "/");
            }
        }
        records.push(r);
    }
    let prov = Provenance {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(config.as_bytes()),
        inputs: records,
    };
    write(&dir.join(format!("{command}.config.json")), &config)?;
    write(
        &dir.join(format!("{command}.provenance.json")),
        &serde_json::to_string_pretty(&prov).expect("provenance serializes"),
    )
}
