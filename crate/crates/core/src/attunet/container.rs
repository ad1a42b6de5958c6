//! Neutral weight container: a JSON manifest followed by a little-endian
//! float32 payload.
//!
//! Byte layout:
//!
//! ```text
//! 0..8     magic  b"MWCNT\0\0\x01"
//! 8..16    manifest length L (u64, little endian)
//! 16..16+L manifest (UTF-8 JSON)
//! ..       zero padding to the next multiple of 8
//! ..       payload; tensor offsets are relative to its first byte
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MWCNT\0\0\x01";
const HEADER_LEN: usize = 16;

/// Axis order of 4-D convolution kernels stored in a container.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelLayout {
    /// `(out, in, kh, kw)`, the engine's native order.
    #[default]
    OutInKhKw,
    /// `(kh, kw, in, out)`, as exported from channels-last frameworks.
    KhKwInOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    pub offset: u64,
    pub length: u64,
}

fn default_dtype() -> String {
    "f32le".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub layout: KernelLayout,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    /// Hex SHA-256 of the payload; verified on read when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightContainer {
    manifest: Manifest,
    payload: Vec<u8>,
}

impl Default for WeightContainer {
    fn default() -> Self {
        WeightContainer::new(KernelLayout::OutInKhKw)
    }
}

fn pad8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

/// Byte offset of a 1-based (line, column) position inside `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    line_start + column.saturating_sub(1)
}

impl WeightContainer {
    pub fn new(layout: KernelLayout) -> Self {
        WeightContainer {
            manifest: Manifest {
                layout,
                tensors: Vec::new(),
                metadata: BTreeMap::new(),
                checksum: None,
            },
            payload: Vec::new(),
        }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn layout(&self) -> KernelLayout {
        self.manifest.layout
    }

    pub fn metadata(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.manifest.metadata
    }

    pub fn set_metadata(&mut self, key: &str, value: serde_json::Value) {
        self.manifest.metadata.insert(key.to_owned(), value);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.manifest.tensors.iter().map(|t| t.name.as_str())
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], values: &[f32]) -> Result<()> {
        if self.manifest.tensors.iter().any(|t| t.name == name) {
            return Err(Error::input(format!("duplicate tensor name {name}")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::dim(format!(
                "tensor {name}: shape {shape:?} vs {} values",
                values.len()
            )));
        }
        let offset = self.payload.len() as u64;
        self.payload.extend(values.iter().flat_map(|v| v.to_le_bytes()));
        self.manifest.tensors.push(TensorEntry {
            name: name.to_owned(),
            shape: shape.to_vec(),
            dtype: default_dtype(),
            offset,
            length: (values.len() * 4) as u64,
        });
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.manifest.tensors.iter().find(|t| t.name == name)
    }

    /// Shape and values of a stored tensor.
    pub fn get(&self, name: &str) -> Option<(Vec<usize>, Vec<f32>)> {
        let e = self.entry(name)?;
        let bytes = &self.payload[e.offset as usize..(e.offset + e.length) as usize];
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Some((e.shape.clone(), values))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = self.manifest.clone();
        manifest.checksum = Some(hex(&Sha256::digest(&self.payload)));
        let json = serde_json::to_vec(&manifest).map_err(|e| Error::Json {
            context: "weight container manifest".into(),
            source: e,
        })?;
        let start = pad8(HEADER_LEN + json.len());
        let mut out = Vec::with_capacity(start + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.resize(start, 0);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parse = |offset: usize, msg: String| Error::Parse {
            offset: offset as u64,
            msg,
        };
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(parse(0, "missing weight-container magic".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let end = HEADER_LEN
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| parse(8, format!("manifest length {len} exceeds file size {}", bytes.len())))?;
        let text = std::str::from_utf8(&bytes[HEADER_LEN..end])
            .map_err(|e| parse(HEADER_LEN + e.valid_up_to(), "manifest is not UTF-8".into()))?;
        let mut manifest: Manifest = serde_json::from_str(text).map_err(|e| {
            parse(
                HEADER_LEN + byte_offset(text, e.line(), e.column()),
                format!("manifest: {e}"),
            )
        })?;
        let start = pad8(end);
        if start > bytes.len() {
            return Err(parse(end, "file ends inside manifest padding".into()));
        }
        let payload = &bytes[start..];
        let mut seen = BTreeSet::new();
        for t in &manifest.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(parse(start, format!("duplicate tensor name {}", t.name)));
            }
            if t.dtype != "f32le" {
                return Err(parse(
                    start,
                    format!("tensor {}: unsupported dtype {}", t.name, t.dtype),
                ));
            }
            let want = t.shape.iter().product::<usize>() as u64 * 4;
            if t.length != want {
                return Err(parse(
                    start + t.offset as usize,
                    format!(
                        "tensor {}: length {} bytes, shape {:?} needs {want}",
                        t.name, t.length, t.shape
                    ),
                ));
            }
            if t.offset.checked_add(t.length).is_none_or(|e| e > payload.len() as u64) {
                return Err(parse(
                    start + payload.len(),
                    format!(
                        "tensor {} extends to payload byte {}, payload has {}",
                        t.name,
                        t.offset.saturating_add(t.length),
                        payload.len()
                    ),
                ));
            }
        }
        if let Some(sum) = manifest.checksum.take() {
            let actual = hex(&Sha256::digest(payload));
            if actual != sum {
                return Err(parse(
                    start,
                    format!("payload checksum {actual} does not match manifest {sum}"),
                ));
            }
        }
        Ok(WeightContainer {
            manifest,
            payload: payload.to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        WeightContainer::from_bytes(&bytes)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reorders a `(kh, kw, in, out)` kernel to `(out, in, kh, kw)`.
pub fn khkwio_to_oikhkw(shape: &[usize], values: &[f32]) -> (Vec<usize>, Vec<f32>) {
    let [kh, kw, ci, co] = [shape[0], shape[1], shape[2], shape[3]];
    let mut out = vec![0.0; values.len()];
    for y in 0..kh {
        for x in 0..kw {
            for i in 0..ci {
                for o in 0..co {
                    out[((o * ci + i) * kh + y) * kw + x] = values[((y * kw + x) * ci + i) * co + o];
                }
            }
        }
    }
    (vec![co, ci, kh, kw], out)
}

/// Reorders an `(out, in, kh, kw)` kernel to `(kh, kw, in, out)`; inverse of
/// [`khkwio_to_oikhkw`].
pub fn oikhkw_to_khkwio(shape: &[usize], values: &[f32]) -> (Vec<usize>, Vec<f32>) {
    let [co, ci, kh, kw] = [shape[0], shape[1], shape[2], shape[3]];
    let mut out = vec![0.0; values.len()];
    for o in 0..co {
        for i in 0..ci {
            for y in 0..kh {
                for x in 0..kw {
                    out[((y * kw + x) * ci + i) * co + o] = values[((o * ci + i) * kh + y) * kw + x];
                }
            }
        }
    }
    (vec![kh, kw, ci, co], out)
}
