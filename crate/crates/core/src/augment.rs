//! Multi-scale training transforms: depth-invariant, vanilla and
//! disentangled resizing, plus the pixel-size depth decomposition.
//!
//! A frame keeps its original calibration, images and depths and records
//! cumulative scale factors on top of them. Composing two transforms thus
//! multiplies the factors, and depths and image sizes are recomputed from the
//! originals: `di(di(f, r1), r2)` and `di(f, r1·r2)` agree exactly.

use rand::Rng;

use crate::camgeo::{pixel_size, scaled_dim, Box3D, CameraIntrinsics, CameraRig};
use crate::error::{Error, Result};
use crate::featcore::{bilinear_sample, FeatureLevel, FeaturePyramid};
use crate::io::{CalibrationJson, FrameJson, ObjectJson};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleMode {
    Vanilla,
    DepthInvariant,
    Disentangled,
}

impl ScaleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScaleMode::Vanilla => "vanilla",
            ScaleMode::DepthInvariant => "di",
            ScaleMode::Disentangled => "disentangled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleTransform {
    pub r: f64,
    pub mode: ScaleMode,
}

impl ScaleTransform {
    pub fn new(r: f64, mode: ScaleMode) -> Result<Self> {
        check_scale(r)?;
        Ok(Self { r, mode })
    }

    pub fn apply(&self, frame: &AnnotatedFrame) -> Result<AnnotatedFrame> {
        match self.mode {
            ScaleMode::Vanilla => vanilla_transform(frame, self.r),
            ScaleMode::DepthInvariant => di_transform(frame, self.r),
            ScaleMode::Disentangled => disentangled_transform(frame, self.r),
        }
    }
}

/// Affine map from a network's depth output to pixel-level depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthScaler {
    pub sigma: f64,
    pub mu: f64,
}

impl Default for DepthScaler {
    fn default() -> Self {
        Self { sigma: 1.0, mu: 0.0 }
    }
}

/// `d = (σ·z + μ) / p` with `p = sqrt(1/fx² + 1/fy²)`.
pub fn pixel_depth_decode(z: f64, scaler: &DepthScaler, intr: &CameraIntrinsics) -> Result<f64> {
    if !(scaler.sigma.is_finite() && scaler.mu.is_finite()) {
        return Err(Error::InvalidInput("depth scaler must be finite".into()));
    }
    Ok((scaler.sigma * z + scaler.mu) / pixel_size(intr)?)
}

/// Inverse of [`pixel_depth_decode`].
pub fn pixel_depth_encode(d: f64, scaler: &DepthScaler, intr: &CameraIntrinsics) -> Result<f64> {
    if !(scaler.sigma != 0.0 && scaler.sigma.is_finite() && scaler.mu.is_finite()) {
        return Err(Error::InvalidInput("depth scaler must be finite with non-zero gain".into()));
    }
    Ok((d * pixel_size(intr)? - scaler.mu) / scaler.sigma)
}

fn check_scale(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("scale factor {r} must be positive and finite")))
    }
}

/// Uniform draw from `[min, max]`.
pub fn sample_scale(min: f64, max: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(min > 0.0 && min <= max && max.is_finite()) {
        return Err(Error::Config(format!("invalid scale range [{min}, {max}]")));
    }
    if min == max {
        return Ok(min);
    }
    Ok(rng.gen_range(min..=max))
}

/// A ground-truth box with its depth slot.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedObject {
    pub bbox: Box3D,
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedFrame {
    base_rig: CameraRig,
    base_sizes: Vec<[u32; 2]>,
    base_features: Option<FeaturePyramid>,
    base_objects: Vec<AnnotatedObject>,
    image_scale: f64,
    depth_scale: f64,
    intrinsics_scale: f64,
    rig: CameraRig,
    features: Option<FeaturePyramid>,
    regression_mask: bool,
    mode: Option<ScaleMode>,
}

impl AnnotatedFrame {
    pub fn new(rig: CameraRig, objects: Vec<AnnotatedObject>, features: Option<FeaturePyramid>) -> Result<Self> {
        let sizes = rig
            .cameras()
            .iter()
            .map(|c| [c.intrinsics.width, c.intrinsics.height])
            .collect();
        Self::with_image_sizes(rig, sizes, objects, features)
    }

    pub fn with_image_sizes(
        rig: CameraRig,
        image_sizes: Vec<[u32; 2]>,
        objects: Vec<AnnotatedObject>,
        features: Option<FeaturePyramid>,
    ) -> Result<Self> {
        if image_sizes.len() != rig.len() {
            return Err(Error::Dimension {
                expected: rig.len(),
                actual: image_sizes.len(),
                context: "image sizes per camera",
            });
        }
        if image_sizes.iter().any(|[w, h]| *w == 0 || *h == 0) {
            return Err(Error::InvalidInput("image sizes must be non-zero".into()));
        }
        if let Some(f) = &features {
            if f.camera_count() != rig.len() {
                return Err(Error::Dimension {
                    expected: rig.len(),
                    actual: f.camera_count(),
                    context: "feature maps per camera",
                });
            }
        }
        for o in &objects {
            o.bbox.validate()?;
            if !o.depth.is_finite() {
                return Err(Error::InvalidInput("object depth must be finite".into()));
            }
        }
        Ok(Self {
            rig: rig.clone(),
            base_rig: rig,
            base_sizes: image_sizes,
            features: features.clone(),
            base_features: features,
            base_objects: objects,
            image_scale: 1.0,
            depth_scale: 1.0,
            intrinsics_scale: 1.0,
            regression_mask: true,
            mode: None,
        })
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn features(&self) -> Option<&FeaturePyramid> {
        self.features.as_ref()
    }

    /// Current `[width, height]` per camera.
    pub fn image_sizes(&self) -> Result<Vec<[u32; 2]>> {
        self.base_sizes
            .iter()
            .map(|[w, h]| Ok([scaled_dim(*w, self.image_scale)?, scaled_dim(*h, self.image_scale)?]))
            .collect()
    }

    pub fn objects(&self) -> Vec<AnnotatedObject> {
        self.base_objects
            .iter()
            .map(|o| AnnotatedObject {
                bbox: o.bbox.clone(),
                depth: o.depth / self.depth_scale,
            })
            .collect()
    }

    pub fn regression_mask(&self) -> bool {
        self.regression_mask
    }

    pub fn mode(&self) -> Option<ScaleMode> {
        self.mode
    }

    pub fn image_scale(&self) -> f64 {
        self.image_scale
    }

    pub fn from_json(frame: &FrameJson) -> Result<Self> {
        let rig = frame.calib.to_rig()?;
        let objects = frame
            .objects
            .iter()
            .map(|o| {
                Ok(AnnotatedObject {
                    bbox: o.to_box()?,
                    depth: o.depth,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match &frame.image_sizes {
            Some(sizes) => Self::with_image_sizes(rig, sizes.clone(), objects, None),
            None => Self::new(rig, objects, None),
        }
    }

    pub fn to_json(&self) -> Result<FrameJson> {
        let calib = CalibrationJson::from_rig(&self.rig);
        let sizes = self.image_sizes()?;
        let calib_sizes: Vec<[u32; 2]> = calib.cameras.iter().map(|c| [c.width, c.height]).collect();
        Ok(FrameJson {
            calib,
            objects: self
                .objects()
                .iter()
                .map(|o| ObjectJson::from_box(&o.bbox, o.depth))
                .collect(),
            image_sizes: (sizes != calib_sizes).then_some(sizes),
        })
    }
}

/// Bilinear resize to `(round(r·H), round(r·W))`.
///
/// Target pixel `(x, y)` reads the source at `(x / r, y / r)`, the same
/// pixel-center convention the sampler uses; positions past the last pixel
/// are clamped to it.
pub fn resize_level(level: &FeatureLevel, r: f64) -> Result<FeatureLevel> {
    check_scale(r)?;
    let h = scaled_dim(level.height() as u32, r)? as usize;
    let w = scaled_dim(level.width() as u32, r)? as usize;
    let max_x = (level.width() - 1) as f64;
    let max_y = (level.height() - 1) as f64;
    let mut out = FeatureLevel::zeros(level.channels(), h, w, level.stride())?;
    for y in 0..h {
        let sy = (y as f64 / r).min(max_y);
        for x in 0..w {
            let sx = (x as f64 / r).min(max_x);
            let (f, _) = bilinear_sample(level, [sx, sy]);
            for (c, v) in f.iter().enumerate() {
                out.set(c, y, x, *v as f32);
            }
        }
    }
    Ok(out)
}

fn rescaled(frame: &AnnotatedFrame, image_scale: f64) -> Result<AnnotatedFrame> {
    let mut out = frame.clone();
    out.image_scale = image_scale;
    out.image_sizes()?;
    out.features = match &frame.base_features {
        None => None,
        Some(base) if image_scale == 1.0 => Some(base.clone()),
        Some(base) => Some(FeaturePyramid::new(
            base.cameras()
                .iter()
                .map(|levels| levels.iter().map(|l| resize_level(l, image_scale)).collect())
                .collect::<Result<Vec<_>>>()?,
        )?),
    };
    Ok(out)
}

/// Resizes images and feature maps; calibration and boxes are untouched.
pub fn resize_frame(frame: &AnnotatedFrame, r: f64) -> Result<AnnotatedFrame> {
    check_scale(r)?;
    rescaled(frame, frame.image_scale * r)
}

/// Resize plus depth shift: every object's depth is divided by `r`.
pub fn di_transform(frame: &AnnotatedFrame, r: f64) -> Result<AnnotatedFrame> {
    let mut out = resize_frame(frame, r)?;
    out.depth_scale = frame.depth_scale * r;
    out.mode = Some(ScaleMode::DepthInvariant);
    Ok(out)
}

/// Resize plus intrinsics scaling; boxes and depths are untouched.
pub fn vanilla_transform(frame: &AnnotatedFrame, r: f64) -> Result<AnnotatedFrame> {
    let mut out = resize_frame(frame, r)?;
    out.intrinsics_scale = frame.intrinsics_scale * r;
    let s = out.intrinsics_scale;
    out.rig = if s == 1.0 {
        frame.base_rig.clone()
    } else {
        frame.base_rig.map_intrinsics(|k| k.scaled(s))?
    };
    out.mode = Some(ScaleMode::Vanilla);
    Ok(out)
}

/// Vanilla transform; box regression is disabled unless `r == 1`.
pub fn disentangled_transform(frame: &AnnotatedFrame, r: f64) -> Result<AnnotatedFrame> {
    let mut out = vanilla_transform(frame, r)?;
    out.regression_mask = r == 1.0;
    out.mode = Some(ScaleMode::Disentangled);
    Ok(out)
}
