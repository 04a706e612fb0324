//! `GDT3` binary tensors and the pyramid manifest.
//!
//! Layout (little-endian): magic `b"GDT3"`, `u32` version (1), `u32` ndim,
//! `ndim × u64` dims, then the `f32` elements in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureLevel, FeaturePyramid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GDT3";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: Vec<f32>) -> Result<Self> {
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::Dimension {
                expected,
                actual: data.len(),
                context: "tensor data",
            });
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let ndim = cur.u32()? as usize;
        let dims = (0..ndim).map(|_| cur.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let count = element_count(&dims).map_err(|e| e.to_string())?;
        let payload = cur.take(count.checked_mul(4).ok_or("tensor too large")?)?;
        if cur.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Tensor {
            path: path.to_path_buf(),
            reason,
        })
    }
}

fn element_count(dims: &[u64]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .ok_or_else(|| Error::InvalidInput(format!("tensor dims {dims:?} overflow")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

impl From<&FeatureLevel> for Tensor {
    fn from(level: &FeatureLevel) -> Self {
        let [c, h, w] = level.shape();
        Tensor {
            dims: vec![c as u64, h as u64, w as u64],
            data: level.data().to_vec(),
        }
    }
}

impl FeatureLevel {
    pub fn from_tensor(tensor: Tensor, stride: u32) -> Result<Self> {
        if tensor.dims.len() != 3 {
            return Err(Error::Dimension {
                expected: 3,
                actual: tensor.dims.len(),
                context: "feature level tensor rank",
            });
        }
        let d = |i: usize| tensor.dims[i] as usize;
        FeatureLevel::new(d(0), d(1), d(2), stride, tensor.data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PyramidManifest {
    pub cameras: Vec<CameraLevels>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraLevels {
    pub id: String,
    pub levels: Vec<LevelEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    /// Tensor path, relative to the manifest's directory.
    pub path: String,
    pub stride: u32,
}

/// Writes one `GDT3` file per camera and level plus `manifest.json` into `dir`.
///
/// Returns the manifest path.
pub fn save_pyramid(pyr: &FeaturePyramid, camera_ids: &[String], dir: &Path) -> Result<PathBuf> {
    if camera_ids.len() != pyr.camera_count() {
        return Err(Error::Dimension {
            expected: pyr.camera_count(),
            actual: camera_ids.len(),
            context: "camera ids for pyramid",
        });
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cameras = Vec::with_capacity(pyr.camera_count());
    for (n, id) in camera_ids.iter().enumerate() {
        let mut levels = Vec::new();
        for (l, level) in pyr.levels(n).iter().enumerate() {
            let name = format!("cam{n}_l{l}.gdt3");
            Tensor::from(level).write(&dir.join(&name))?;
            levels.push(LevelEntry {
                path: name,
                stride: level.stride(),
            });
        }
        cameras.push(CameraLevels {
            id: id.clone(),
            levels,
        });
    }
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&PyramidManifest { cameras })?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Loads a pyramid from its manifest; returns the pyramid and the camera ids.
pub fn load_pyramid(manifest_path: &Path) -> Result<(FeaturePyramid, Vec<String>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: PyramidManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut ids = Vec::new();
    let mut cameras = Vec::new();
    for cam in manifest.cameras {
        let levels = cam
            .levels
            .iter()
            .map(|entry| FeatureLevel::from_tensor(Tensor::read(&base.join(&entry.path))?, entry.stride))
            .collect::<Result<Vec<_>>>()?;
        ids.push(cam.id);
        cameras.push(levels);
    }
    Ok((FeaturePyramid::new(cameras)?, ids))
}
