use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{Mask, SliceImage, SliceMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "u8")]
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32Le => 4,
            DType::U8 => 1,
        }
    }
}

/// Which acquisition a volume holds, e.g. `("t1rho", 2, Some(4.0))` for the
/// third spin-lock point with N_AFP = 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub sequence: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Acquisition {
    pub fn new(sequence: &str, index: usize, value: Option<f64>) -> Self {
        Acquisition {
            sequence: sequence.to_owned(),
            index,
            value,
        }
    }
}

/// Sidecar header of a `.mvol` file.
///
/// `matrix` is `[nx, ny, nz]`; the payload is slice-major: voxel `(x, y, z)`
/// lives at `(z * ny + y) * nx + x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub matrix: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub dtype: DType,
    pub acquisition: Acquisition,
    pub subject_id: String,
}

impl VolumeHeader {
    pub fn new(matrix: [usize; 3], spacing_mm: [f64; 3], acquisition: Acquisition, subject_id: &str) -> Self {
        VolumeHeader {
            matrix,
            spacing_mm,
            dtype: DType::F32Le,
            acquisition,
            subject_id: subject_id.to_owned(),
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.matrix.iter().product()
    }

    pub fn field_of_view_mm(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.matrix[i] as f64 * self.spacing_mm[i])
    }

    pub fn pixel_area_mm2(&self) -> f64 {
        self.spacing_mm[0] * self.spacing_mm[1]
    }

    pub fn payload_bytes(&self) -> usize {
        self.voxel_count() * self.dtype.size()
    }

    fn validate(&self) -> Result<()> {
        if self.matrix.contains(&0) {
            return Err(Error::input(format!("matrix {:?} has a zero extent", self.matrix)));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::input(format!("spacing {:?} must be positive", self.spacing_mm)));
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &VolumeHeader) -> bool {
        self.matrix == other.matrix && self.spacing_mm == other.spacing_mm
    }
}

/// Float voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub header: VolumeHeader,
    pub data: Vec<f32>,
}

/// Binary label grid (`dtype = "u8"`).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub header: VolumeHeader,
    pub data: Vec<u8>,
}

fn check_len(header: &VolumeHeader, len: usize) -> Result<()> {
    header.validate()?;
    if len != header.voxel_count() {
        return Err(Error::dim(format!(
            "matrix {:?} needs {} voxels, got {len}",
            header.matrix,
            header.voxel_count()
        )));
    }
    Ok(())
}

impl Volume {
    pub fn new(mut header: VolumeHeader, data: Vec<f32>) -> Result<Self> {
        header.dtype = DType::F32Le;
        check_len(&header, data.len())?;
        Ok(Volume { header, data })
    }

    pub fn nx(&self) -> usize {
        self.header.matrix[0]
    }

    pub fn ny(&self) -> usize {
        self.header.matrix[1]
    }

    pub fn nz(&self) -> usize {
        self.header.matrix[2]
    }

    pub fn slice_len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn slice(&self, z: usize) -> SliceImage {
        let n = self.slice_len();
        SliceImage::new(self.nx(), self.ny(), self.data[z * n..(z + 1) * n].to_vec())
            .expect("volume extents are positive")
            .with_meta(SliceMeta {
                subject_id: self.header.subject_id.clone(),
                source: self.header.acquisition.sequence.clone(),
                slice_index: z,
            })
    }

    /// Stacks equally sized slices into a volume.
    pub fn from_slices(header: VolumeHeader, slices: &[SliceImage]) -> Result<Self> {
        let mut data = Vec::with_capacity(header.voxel_count());
        for s in slices {
            if (s.width, s.height) != (header.matrix[0], header.matrix[1]) {
                return Err(Error::dim(format!(
                    "slice {}x{} does not fit matrix {:?}",
                    s.width, s.height, header.matrix
                )));
            }
            data.extend_from_slice(&s.data);
        }
        Volume::new(header, data)
    }
}

impl MaskVolume {
    pub fn new(mut header: VolumeHeader, data: Vec<u8>) -> Result<Self> {
        header.dtype = DType::U8;
        check_len(&header, data.len())?;
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::input(format!("mask voxel {pos} is not binary")));
        }
        Ok(MaskVolume { header, data })
    }

    pub fn slice(&self, z: usize) -> Mask {
        let [nx, ny, _] = self.header.matrix;
        let n = nx * ny;
        Mask::new(nx, ny, self.data[z * n..(z + 1) * n].to_vec())
            .expect("binary by construction")
            .with_meta(SliceMeta {
                subject_id: self.header.subject_id.clone(),
                source: self.header.acquisition.sequence.clone(),
                slice_index: z,
            })
    }

    pub fn from_slices(header: VolumeHeader, slices: &[Mask]) -> Result<Self> {
        let mut data = Vec::with_capacity(header.voxel_count());
        for s in slices {
            if (s.width(), s.height()) != (header.matrix[0], header.matrix[1]) {
                return Err(Error::dim(format!(
                    "mask {}x{} does not fit matrix {:?}",
                    s.width(),
                    s.height(),
                    header.matrix
                )));
            }
            data.extend_from_slice(s.data());
        }
        MaskVolume::new(header, data)
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

/// Path of the JSON sidecar belonging to a `.mvol` payload.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_pair(path: &Path, header: &VolumeHeader, payload: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut json = serde_json::to_string_pretty(header).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    json.push('\n');
    let side = sidecar_path(path);
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}

fn read_pair(path: &Path, dtype: DType) -> Result<(VolumeHeader, Vec<u8>)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: 0,
        msg: format!("{}: {e}", side.display()),
    })?;
    header.validate()?;
    if header.dtype != dtype {
        return Err(Error::input(format!(
            "{}: dtype {:?}, expected {dtype:?}",
            side.display(),
            header.dtype
        )));
    }
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    if payload.len() != header.payload_bytes() {
        return Err(Error::Parse {
            offset: payload.len().min(header.payload_bytes()) as u64,
            msg: format!(
                "{}: payload is {} bytes, header {:?} {:?} expects {}",
                path.display(),
                payload.len(),
                header.matrix,
                header.dtype,
                header.payload_bytes()
            ),
        });
    }
    Ok((header, payload))
}

pub fn save_volume(vol: &Volume, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = vol.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(path, &vol.header, &bytes)
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let (header, payload) = read_pair(path, DType::F32Le)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume::new(header, data)
}

pub fn save_mask_volume(vol: &MaskVolume, path: &Path) -> Result<()> {
    write_pair(path, &vol.header, &vol.data)
}

pub fn load_mask_volume(path: &Path) -> Result<MaskVolume> {
    let (header, payload) = read_pair(path, DType::U8)?;
    MaskVolume::new(header, payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(matrix: [usize; 3]) -> VolumeHeader {
        VolumeHeader::new(
            matrix,
            [0.5, 0.5, 3.0],
            Acquisition::new("t2star", 0, Some(0.032)),
            "s01",
        )
    }

    #[test]
    fn round_trip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..60).map(|i| (i as f32).sin() * 1e3 - 0.1).collect();
        let vol = Volume::new(header([5, 4, 3]), data).unwrap();
        let path = dir.path().join("a.mvol");
        save_volume(&vol, &path).unwrap();
        let back = load_volume(&path).unwrap();
        assert_eq!(back, vol);
        assert!(back.data.iter().zip(&vol.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn clinical_scale_payload_size() {
        assert_eq!(header([256, 256, 36]).payload_bytes(), 9_437_184);
    }

    #[test]
    fn size_mismatch_reports_counts() {
        let dir = tempfile::tempdir().unwrap();
        let vol = Volume::new(header([2, 2, 2]), vec![1.0; 8]).unwrap();
        let path = dir.path().join("b.mvol");
        save_volume(&vol, &path).unwrap();
        fs::write(&path, vec![0u8; 30]).unwrap();
        let err = load_volume(&path).unwrap_err().to_string();
        assert!(err.contains("30 bytes") && err.contains("expects 32"), "{err}");
    }

    #[test]
    fn missing_spacing_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.mvol");
        fs::write(&path, vec![0u8; 4]).unwrap();
        fs::write(
            sidecar_path(&path),
            r#"{"matrix":[1,1,1],"dtype":"f32le","acquisition":{"sequence":"x","index":0},"subject_id":"s"}"#,
        )
        .unwrap();
        let err = load_volume(&path).unwrap_err().to_string();
        assert!(err.contains("spacing_mm"), "{err}");
    }

    #[test]
    fn mask_volume_round_trip_and_dtype_check() {
        let dir = tempfile::tempdir().unwrap();
        let m = MaskVolume::new(header([3, 2, 1]), vec![0, 1, 1, 0, 0, 1]).unwrap();
        let path = dir.path().join("m.mvol");
        save_mask_volume(&m, &path).unwrap();
        assert_eq!(load_mask_volume(&path).unwrap(), m);
        assert!(load_volume(&path).is_err());
    }

    #[test]
    fn slices_carry_metadata() {
        let vol = Volume::new(header([2, 2, 2]), (0..8).map(|v| v as f32).collect()).unwrap();
        let s = vol.slice(1);
        assert_eq!(s.data, vec![4., 5., 6., 7.]);
        assert_eq!(s.meta.slice_index, 1);
        assert_eq!(s.meta.subject_id, "s01");
        let back = Volume::from_slices(vol.header.clone(), &[vol.slice(0), s]).unwrap();
        assert_eq!(back, vol);
    }
}
