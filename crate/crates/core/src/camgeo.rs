//! Pinhole multi-camera geometry.
//!
//! Ego frame: x forward, y left, z up. Camera frame: x right, y down,
//! z along the optical axis. Extrinsics map ego points into the camera frame.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be non-zero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidInput(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics for an image resized by `r` on both axes.
    ///
    /// Focal lengths and principal point scale by `r`; the image size is
    /// rounded half-to-even.
    pub fn scaled(&self, r: f64) -> Result<Self> {
        let width = scaled_dim(self.width, r)?;
        let height = scaled_dim(self.height, r)?;
        Ok(Self {
            fx: self.fx * r,
            fy: self.fy * r,
            cx: self.cx * r,
            cy: self.cy * r,
            width,
            height,
        })
    }
}

/// `round_half_even(r * dim)`, rejecting results below one pixel.
pub fn scaled_dim(dim: u32, r: f64) -> Result<u32> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!("scale factor {r} must be positive")));
    }
    let v = (dim as f64 * r).round_ties_even();
    if v < 1.0 {
        return Err(Error::InvalidInput(format!(
            "resizing {dim} px by {r} leaves less than one pixel"
        )));
    }
    if v > u32::MAX as f64 {
        return Err(Error::InvalidInput(format!("resized dimension {v} overflows")));
    }
    Ok(v as u32)
}

/// Rigid transform from the ego frame into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ext = Self {
            rotation,
            translation,
        };
        ext.validate()?;
        Ok(ext)
    }

    pub fn validate(&self) -> Result<()> {
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if !(dev <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {dev:e})"
            )));
        }
        let det = self.rotation.determinant();
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidInput(format!("rotation determinant {det} != 1")));
        }
        if !self.translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidInput("translation must be finite".into()));
        }
        Ok(())
    }

    /// Camera looking along ego heading `yaw` (radians, counter-clockwise
    /// from +x) with its optical center at `position` in the ego frame.
    pub fn looking_along(yaw: f64, position: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        #[rustfmt::skip]
        let rotation = Matrix3::new(
            s, -c, 0.0,
            0.0, 0.0, -1.0,
            c, s, 0.0,
        );
        let translation = -(rotation * position);
        Self {
            rotation,
            translation,
        }
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_ego(&self, pc: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (pc - self.translation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub id: String,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
}

/// Result of projecting an ego-frame point into one camera.
///
/// `pixel` is only meaningful when `depth > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

impl Projection {
    pub fn in_front(&self) -> bool {
        self.depth > 0.0
    }
}

impl CameraModel {
    pub fn new(
        id: impl Into<String>,
        intrinsics: CameraIntrinsics,
        extrinsics: CameraExtrinsics,
    ) -> Self {
        Self {
            id: id.into(),
            intrinsics,
            extrinsics,
        }
    }

    pub fn project(&self, p: &Vector3<f64>) -> Projection {
        project_point(p, self)
    }

    /// Inverse of [`project_point`] at a known camera-axis depth.
    pub fn back_project(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let pc = Vector3::new(
            (pixel.x - k.cx) / k.fx * depth,
            (pixel.y - k.cy) / k.fy * depth,
            depth,
        );
        self.extrinsics.to_ego(&pc)
    }

    /// Derivative of the pixel coordinates w.r.t. the ego-frame point.
    ///
    /// Row 0 is `du/dp`, row 1 is `dv/dp`. Valid for positive depth only.
    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> [[f64; 3]; 2] {
        let k = &self.intrinsics;
        let r = &self.extrinsics.rotation;
        let pc = self.extrinsics.to_camera(p);
        let inv_z = 1.0 / pc.z;
        let mut jac = [[0.0; 3]; 2];
        for a in 0..3 {
            jac[0][a] = k.fx * (r[(0, a)] * inv_z - pc.x * r[(2, a)] * inv_z * inv_z);
            jac[1][a] = k.fy * (r[(1, a)] * inv_z - pc.y * r[(2, a)] * inv_z * inv_z);
        }
        jac
    }
}

/// Projects an ego-frame point into a camera.
///
/// Returns the pinhole pixel and the camera-axis depth; a non-positive depth
/// marks a point behind the camera.
pub fn project_point(p: &Vector3<f64>, cam: &CameraModel) -> Projection {
    let pc = cam.extrinsics.to_camera(p);
    let k = &cam.intrinsics;
    Projection {
        pixel: Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy),
        depth: pc.z,
    }
}

/// True iff the point lies in front of the camera and inside `[0, W) × [0, H)`.
pub fn is_visible(p: &Vector3<f64>, cam: &CameraModel) -> bool {
    let proj = project_point(p, cam);
    proj.in_front() && pixel_in_image(&proj.pixel, &cam.intrinsics)
}

fn pixel_in_image(px: &Vector2<f64>, k: &CameraIntrinsics) -> bool {
    px.x >= 0.0 && px.x < k.width as f64 && px.y >= 0.0 && px.y < k.height as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    cameras: Vec<CameraModel>,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraModel>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidInput("a rig needs at least one camera".into()));
        }
        for (i, cam) in cameras.iter().enumerate() {
            cam.intrinsics.validate()?;
            cam.extrinsics.validate()?;
            if cameras[..i].iter().any(|c| c.id == cam.id) {
                return Err(Error::InvalidInput(format!("duplicate camera id {:?}", cam.id)));
            }
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Copy of the rig with every camera's intrinsics replaced by `f(intrinsics)`.
    pub fn map_intrinsics(
        &self,
        mut f: impl FnMut(&CameraIntrinsics) -> Result<CameraIntrinsics>,
    ) -> Result<Self> {
        let cameras = self
            .cameras
            .iter()
            .map(|c| {
                Ok(CameraModel {
                    intrinsics: f(&c.intrinsics)?,
                    ..c.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cameras })
    }
}

/// Indices of all cameras in which `p` is visible, ascending.
pub fn visible_cameras(p: &Vector3<f64>, rig: &CameraRig) -> Vec<usize> {
    rig.cameras
        .iter()
        .enumerate()
        .filter(|(_, cam)| is_visible(p, cam))
        .map(|(i, _)| i)
        .collect()
}

/// Normalizes an angle to `(-π, π]`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Oriented 3D box in the ego frame.
///
/// `size` is `(w, l, h)`: `w` spans the local x axis, `l` the local y axis
/// and `h` the vertical axis. `yaw` rotates the box about +z.
#[derive(Clone, Debug, PartialEq)]
pub struct Box3D {
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub yaw: f64,
    pub velocity: Vector2<f64>,
    pub class_id: usize,
    pub attribute_id: usize,
}

impl Box3D {
    pub fn new(center: Vector3<f64>, size: Vector3<f64>, yaw: f64) -> Result<Self> {
        let b = Self {
            center,
            size,
            yaw: normalize_yaw(yaw),
            velocity: Vector2::zeros(),
            class_id: 0,
            attribute_id: 0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_class(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn with_attribute(mut self, attribute_id: usize) -> Self {
        self.attribute_id = attribute_id;
        self
    }

    pub fn with_velocity(mut self, velocity: Vector2<f64>) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.size.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "box sizes must be positive, got {:?}",
                self.size.as_slice()
            )));
        }
        if !(self.center.iter().all(|c| c.is_finite()) && self.yaw.is_finite()) {
            return Err(Error::InvalidInput("box pose must be finite".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        box_corners(self)
    }
}

/// The 8 corners of the yaw-rotated cuboid.
///
/// Corner `i` and corner `7 - i` are opposite each other.
pub fn box_corners(b: &Box3D) -> [Vector3<f64>; 8] {
    let (s, c) = b.yaw.sin_cos();
    let half = b.size * 0.5;
    let mut out = [Vector3::zeros(); 8];
    for (i, corner) in out.iter_mut().enumerate() {
        let sx = if i & 4 != 0 { 1.0 } else { -1.0 };
        let sy = if i & 2 != 0 { 1.0 } else { -1.0 };
        let sz = if i & 1 != 0 { 1.0 } else { -1.0 };
        let (lx, ly, lz) = (sx * half.x, sy * half.y, sz * half.z);
        *corner = b.center + Vector3::new(c * lx - s * ly, s * lx + c * ly, lz);
    }
    out
}

/// Overlap label of an object with respect to a camera rig.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    Overlapping,
    NonOverlapping,
    Invisible,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Overlapping => "overlapping",
            Region::NonOverlapping => "non_overlapping",
            Region::Invisible => "invisible",
        }
    }
}

/// Classifies a box by how many cameras see its centroid and corners.
///
/// The box is `Overlapping` when its centroid or any corner is visible in
/// two or more cameras, or when the centroid and corners together fall into
/// two or more distinct cameras. It is `NonOverlapping` when exactly one
/// camera sees any of those points, and `Invisible` when none does.
pub fn classify_region(b: &Box3D, rig: &CameraRig) -> Region {
    let mut seen = vec![false; rig.len()];
    let corners = box_corners(b);
    for p in std::iter::once(&b.center).chain(corners.iter()) {
        for i in visible_cameras(p, rig) {
            seen[i] = true;
        }
    }
    match seen.iter().filter(|s| **s).count() {
        0 => Region::Invisible,
        1 => Region::NonOverlapping,
        _ => Region::Overlapping,
    }
}

pub fn pixel_size_from_focal(fx: f64, fy: f64) -> Result<f64> {
    if !(fx > 0.0 && fy > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pixel size needs positive focal lengths (fx={fx}, fy={fy})"
        )));
    }
    Ok((1.0 / (fx * fx) + 1.0 / (fy * fy)).sqrt())
}

/// `sqrt(1/fx² + 1/fy²)`.
pub fn pixel_size(intr: &CameraIntrinsics) -> Result<f64> {
    pixel_size_from_focal(intr.fx, intr.fy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn axis_camera() -> CameraModel {
        CameraModel::new(
            "front",
            CameraIntrinsics::new(1000.0, 1000.0, 800.0, 450.0, 1600, 900).unwrap(),
            CameraExtrinsics::new(Matrix3::identity(), Vector3::zeros()).unwrap(),
        )
    }

    #[test]
    fn projects_on_axis_and_offset_points() {
        let cam = axis_camera();
        let p = project_point(&Vector3::new(0.0, 0.0, 10.0), &cam);
        assert_eq!(p.pixel, Vector2::new(800.0, 450.0));
        assert_eq!(p.depth, 10.0);

        let p = project_point(&Vector3::new(1.0, 0.0, 10.0), &cam);
        assert_eq!(p.pixel, Vector2::new(900.0, 450.0));

        let p = project_point(&Vector3::new(0.0, 0.0, -5.0), &cam);
        assert_eq!(p.depth, -5.0);
        assert!(!p.in_front());
    }

    #[test]
    fn visibility_uses_half_open_bounds() {
        let cam = axis_camera();
        assert!(is_visible(&Vector3::new(0.0, 0.0, 10.0), &cam));
        assert!(!is_visible(&Vector3::new(0.0, 0.0, -10.0), &cam));
        // u = 1000 * x / 10 + 800 = 1605
        assert!(!is_visible(&Vector3::new(8.05, 0.0, 10.0), &cam));
        // u = 0 exactly is inside, u = width exactly is not
        assert!(is_visible(&Vector3::new(-8.0, 0.0, 10.0), &cam));
        assert!(!is_visible(&Vector3::new(8.0, 0.0, 10.0), &cam));
    }

    #[test]
    fn rejects_bad_intrinsics_and_extrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 0.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 10).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraExtrinsics::new(reflect, Vector3::zeros()).is_err());
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraExtrinsics::new(skew, Vector3::zeros()).is_err());
    }

    #[test]
    fn rig_rejects_duplicate_ids() {
        let cam = axis_camera();
        assert!(CameraRig::new(vec![cam.clone(), cam]).is_err());
        assert!(CameraRig::new(vec![]).is_err());
    }

    #[test]
    fn looking_along_is_a_rotation() {
        for deg in [-180.0f64, -110.0, -55.0, 0.0, 55.0, 110.0, 180.0] {
            let ext = CameraExtrinsics::looking_along(deg.to_radians(), Vector3::new(1.0, 2.0, 1.5));
            ext.validate().unwrap();
            let fwd = Vector3::new(deg.to_radians().cos(), deg.to_radians().sin(), 0.0);
            let pc = ext.to_camera(&(Vector3::new(1.0, 2.0, 1.5) + fwd * 7.0));
            assert_relative_eq!(pc, Vector3::new(0.0, 0.0, 7.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_cube_corners() {
        let b = Box3D::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), 0.0).unwrap();
        for c in box_corners(&b) {
            for v in c.iter() {
                assert_eq!(v.abs(), 0.5);
            }
        }
        let r = Box3D::new(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), PI / 2.0).unwrap();
        for c in box_corners(&r) {
            for v in c.iter() {
                assert_relative_eq!(v.abs(), 0.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rotated_box_extents() {
        let b = Box3D::new(Vector3::zeros(), Vector3::new(2.0, 4.0, 1.0), PI / 2.0).unwrap();
        let corners = box_corners(&b);
        let max_x = corners.iter().map(|c| c.x.abs()).fold(0.0, f64::max);
        let max_y = corners.iter().map(|c| c.y.abs()).fold(0.0, f64::max);
        assert_relative_eq!(max_x, 2.0, epsilon = 1e-12);
        assert_relative_eq!(max_y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn yaw_normalization_range() {
        assert_eq!(normalize_yaw(PI), PI);
        assert_relative_eq!(normalize_yaw(-PI), PI);
        assert_relative_eq!(normalize_yaw(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(normalize_yaw(0.25 + 4.0 * PI), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn pixel_size_values() {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 800.0, 450.0, 1600, 900).unwrap();
        assert_relative_eq!(pixel_size(&k).unwrap(), 1.414_213_562_373_095e-3, max_relative = 1e-15);
        let k2 = k.scaled(2.0).unwrap();
        assert_relative_eq!(pixel_size(&k2).unwrap(), pixel_size(&k).unwrap() / 2.0, max_relative = 1e-12);
        assert_relative_eq!(pixel_size_from_focal(1.0, 1e12).unwrap(), 1.0, max_relative = 1e-12);
        assert!(pixel_size_from_focal(0.0, 1.0).is_err());
        assert!(pixel_size_from_focal(1.0, -3.0).is_err());
    }

    #[test]
    fn classify_single_camera_cases() {
        let rig = CameraRig::new(vec![axis_camera()]).unwrap();
        let inside = Box3D::new(Vector3::new(0.0, 0.0, 20.0), Vector3::new(1.0, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(classify_region(&inside, &rig), Region::NonOverlapping);
        let behind = Box3D::new(Vector3::new(0.0, 0.0, -20.0), Vector3::new(1.0, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(classify_region(&behind, &rig), Region::Invisible);
    }

    #[test]
    fn classify_duplicate_cameras_as_overlapping() {
        let mut second = axis_camera();
        second.id = "copy".into();
        let rig = CameraRig::new(vec![axis_camera(), second]).unwrap();
        let b = Box3D::new(Vector3::new(0.0, 0.0, 20.0), Vector3::new(1.0, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(visible_cameras(&b.center, &rig), vec![0, 1]);
        assert_eq!(classify_region(&b, &rig), Region::Overlapping);
    }
}
