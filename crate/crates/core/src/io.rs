//! JSON file formats: calibration, annotations and predictions.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::camgeo::{Box3D, CameraExtrinsics, CameraIntrinsics, CameraModel, CameraRig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Ego-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationJson {
    pub cameras: Vec<CameraJson>,
}

impl CalibrationJson {
    pub fn from_rig(rig: &CameraRig) -> Self {
        let cameras = rig
            .cameras()
            .iter()
            .map(|c| {
                let k = c.intrinsics;
                let r = c.extrinsics.rotation;
                let t = c.extrinsics.translation;
                CameraJson {
                    id: c.id.clone(),
                    fx: k.fx,
                    fy: k.fy,
                    cx: k.cx,
                    cy: k.cy,
                    width: k.width,
                    height: k.height,
                    rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
                    translation: [t.x, t.y, t.z],
                }
            })
            .collect();
        Self { cameras }
    }

    pub fn to_rig(&self) -> Result<CameraRig> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| {
                let intrinsics = CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?;
                let extrinsics = CameraExtrinsics::new(
                    Matrix3::from_row_slice(&c.rotation),
                    Vector3::from(c.translation),
                )?;
                Ok(CameraModel::new(c.id.clone(), intrinsics, extrinsics))
            })
            .collect::<Result<Vec<_>>>()?;
        CameraRig::new(cameras)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectJson {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub class: usize,
    pub attribute: usize,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameJson {
    pub calib: CalibrationJson,
    pub objects: Vec<ObjectJson>,
    /// Per-camera `[width, height]` of the images when they differ from the
    /// calibration, e.g. after a depth-invariant resize.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sizes: Option<Vec<[u32; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationJson {
    pub frames: Vec<FrameJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionJson {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub score: f64,
    pub class: usize,
    pub attribute: usize,
    /// Index of the annotation frame the prediction belongs to.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub frame: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionsJson {
    pub predictions: Vec<PredictionJson>,
}

fn box_from_parts(center: [f64; 3], size: [f64; 3], yaw: f64, velocity: [f64; 2], class: usize, attribute: usize) -> Result<Box3D> {
    let b = Box3D {
        center: Vector3::from(center),
        size: Vector3::from(size),
        yaw,
        velocity: Vector2::from(velocity),
        class_id: class,
        attribute_id: attribute,
    };
    b.validate()?;
    Ok(b)
}

impl ObjectJson {
    pub fn from_box(b: &Box3D, depth: f64) -> Self {
        Self {
            center: b.center.into(),
            size: b.size.into(),
            yaw: b.yaw,
            velocity: b.velocity.into(),
            class: b.class_id,
            attribute: b.attribute_id,
            depth,
        }
    }

    pub fn to_box(&self) -> Result<Box3D> {
        box_from_parts(self.center, self.size, self.yaw, self.velocity, self.class, self.attribute)
    }
}

impl PredictionJson {
    pub fn from_box(b: &Box3D, score: f64) -> Self {
        Self {
            center: b.center.into(),
            size: b.size.into(),
            yaw: b.yaw,
            velocity: b.velocity.into(),
            score,
            class: b.class_id,
            attribute: b.attribute_id,
            frame: 0,
        }
    }

    pub fn to_box(&self) -> Result<Box3D> {
        if !(self.score.is_finite()) {
            return Err(Error::InvalidInput("prediction score must be finite".into()));
        }
        box_from_parts(self.center, self.size, self.yaw, self.velocity, self.class, self.attribute)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}
