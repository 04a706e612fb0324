//! Seeded synthetic worlds: camera rigs, analytic feature fields, object
//! layouts and perturbed predictions.
//!
//! Every generator takes an explicit seed; `(seed, config)` fully determines
//! the output.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::camgeo::{
    box_corners, project_point, visible_cameras, Box3D, CameraExtrinsics, CameraIntrinsics, CameraModel,
    CameraRig,
};
use crate::dgfa::SceneBounds;
use crate::error::{Error, Result};
use crate::featcore::{FeatureLevel, FeaturePyramid, DEFAULT_STRIDES};
use crate::metrics::ScoredBox;
use crate::seeded_rng;

pub const NUSCENES_IMAGE_WIDTH: u32 = 1600;
pub const NUSCENES_IMAGE_HEIGHT: u32 = 900;
/// Mounting height of every synthetic camera, meters.
pub const CAMERA_HEIGHT: f64 = 1.5;
/// Horizontal distance of every synthetic camera from the ego origin, meters.
pub const CAMERA_RADIUS: f64 = 1.0;

/// Mixes a unit index into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, unit: u64) -> u64 {
    let mut z = seed ^ unit.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One camera of a custom rig.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraSpec {
    pub id: String,
    pub yaw_deg: f64,
    pub hfov_deg: f64,
    pub position: Vector3<f64>,
    pub width: u32,
    pub height: u32,
}

impl CameraSpec {
    /// Camera mounted on the rig circle, facing outward along `yaw_deg`.
    pub fn on_circle(id: &str, yaw_deg: f64, hfov_deg: f64) -> Self {
        let yaw = yaw_deg.to_radians();
        Self {
            id: id.to_string(),
            yaw_deg,
            hfov_deg,
            position: Vector3::new(CAMERA_RADIUS * yaw.cos(), CAMERA_RADIUS * yaw.sin(), CAMERA_HEIGHT),
            width: NUSCENES_IMAGE_WIDTH,
            height: NUSCENES_IMAGE_HEIGHT,
        }
    }

    pub fn build(&self) -> Result<CameraModel> {
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(Error::Config(format!(
                "camera {:?}: horizontal FOV {} must be in (0, 180) degrees",
                self.id, self.hfov_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("camera {:?}: empty image", self.id)));
        }
        let fx = self.width as f64 / 2.0 / (self.hfov_deg.to_radians() / 2.0).tan();
        let intrinsics = CameraIntrinsics::new(
            fx,
            fx,
            self.width as f64 / 2.0,
            self.height as f64 / 2.0,
            self.width,
            self.height,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let extrinsics = CameraExtrinsics::looking_along(self.yaw_deg.to_radians(), self.position);
        Ok(CameraModel::new(self.id.clone(), intrinsics, extrinsics))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RigStyle {
    /// Six outward cameras at yaws 0, ±55°, ±110° and 180°.
    NuScenesLike,
    /// The front camera alone.
    Single,
    Custom(Vec<CameraSpec>),
}

/// Camera layout of the six-camera style, in rig order.
pub fn nuscenes_like_specs() -> Vec<CameraSpec> {
    vec![
        CameraSpec::on_circle("CAM_FRONT", 0.0, 70.0),
        CameraSpec::on_circle("CAM_FRONT_LEFT", 55.0, 70.0),
        CameraSpec::on_circle("CAM_BACK_LEFT", 110.0, 70.0),
        CameraSpec::on_circle("CAM_BACK", 180.0, 90.0),
        CameraSpec::on_circle("CAM_BACK_RIGHT", -110.0, 70.0),
        CameraSpec::on_circle("CAM_FRONT_RIGHT", -55.0, 70.0),
    ]
}

pub fn gen_rig(style: &RigStyle) -> Result<CameraRig> {
    let specs = match style {
        RigStyle::NuScenesLike => nuscenes_like_specs(),
        RigStyle::Single => nuscenes_like_specs().into_iter().take(1).collect(),
        RigStyle::Custom(specs) => specs.clone(),
    };
    if specs.is_empty() {
        return Err(Error::Config("a custom rig needs at least one camera".into()));
    }
    let cameras = specs.iter().map(CameraSpec::build).collect::<Result<Vec<_>>>()?;
    CameraRig::new(cameras).map_err(|e| Error::Config(e.to_string()))
}

/// Per-channel closed-form feature fields over full-resolution image
/// coordinates `(u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticField {
    Constant { values: Vec<f64> },
    /// `a + b·u + c·v`
    Linear { coeffs: Vec<[f64; 3]> },
    /// `a + b·u + c·v + d·u·v`
    Bilinear { coeffs: Vec<[f64; 4]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Constant,
    Linear,
    Bilinear,
}

impl AnalyticField {
    pub fn channels(&self) -> usize {
        match self {
            AnalyticField::Constant { values } => values.len(),
            AnalyticField::Linear { coeffs } => coeffs.len(),
            AnalyticField::Bilinear { coeffs } => coeffs.len(),
        }
    }

    pub fn eval(&self, channel: usize, u: f64, v: f64) -> f64 {
        match self {
            AnalyticField::Constant { values } => values[channel],
            AnalyticField::Linear { coeffs } => {
                let [a, b, c] = coeffs[channel];
                a + b * u + c * v
            }
            AnalyticField::Bilinear { coeffs } => {
                let [a, b, c, d] = coeffs[channel];
                a + b * u + c * v + d * u * v
            }
        }
    }

    /// Random coefficients scaled so the field stays within about ±4 over a
    /// `width × height` image, which keeps 32-bit storage error near 1e-7.
    pub fn seeded(kind: FieldKind, channels: usize, width: u32, height: u32, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("a field needs at least one channel".into()));
        }
        let mut rng = seeded_rng(seed);
        let (w, h) = (width as f64, height as f64);
        let mut unit = || rng.gen_range(-1.0..1.0);
        Ok(match kind {
            FieldKind::Constant => AnalyticField::Constant {
                values: (0..channels).map(|_| unit()).collect(),
            },
            FieldKind::Linear => AnalyticField::Linear {
                coeffs: (0..channels).map(|_| [unit(), unit() / w, unit() / h]).collect(),
            },
            FieldKind::Bilinear => AnalyticField::Bilinear {
                coeffs: (0..channels)
                    .map(|_| [unit(), unit() / w, unit() / h, unit() / (w * h)])
                    .collect(),
            },
        })
    }
}

/// Level size covering pixel centers `0..dim` at the given stride.
pub fn level_dim(dim: u32, stride: u32) -> usize {
    dim.div_ceil(stride) as usize
}

fn shared_image_size(rig: &CameraRig) -> Result<(u32, u32)> {
    let k = rig.cameras()[0].intrinsics;
    if rig
        .cameras()
        .iter()
        .any(|c| c.intrinsics.width != k.width || c.intrinsics.height != k.height)
    {
        return Err(Error::Config("rendering a pyramid needs equal image sizes".into()));
    }
    Ok((k.width, k.height))
}

/// Renders the field into every camera: level pixel `(x, y)` holds the
/// field at image coordinates `(x·stride, y·stride)`.
pub fn render_pyramid(field: &AnalyticField, rig: &CameraRig, strides: &[u32]) -> Result<FeaturePyramid> {
    let (width, height) = shared_image_size(rig)?;
    let level = |stride: u32| {
        FeatureLevel::from_fn(
            field.channels(),
            level_dim(height, stride),
            level_dim(width, stride),
            stride,
            |c, y, x| field.eval(c, (x as u32 * stride) as f64, (y as u32 * stride) as f64) as f32,
        )
    };
    let cameras = (0..rig.len())
        .map(|_| strides.iter().map(|&s| level(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    FeaturePyramid::new(cameras)
}

/// Uniform `[-1, 1)` noise features; each `(camera, level)` uses its own
/// derived seed.
pub fn render_noise_pyramid(rig: &CameraRig, strides: &[u32], channels: usize, seed: u64) -> Result<FeaturePyramid> {
    let (width, height) = shared_image_size(rig)?;
    let cameras = (0..rig.len())
        .map(|n| {
            strides
                .iter()
                .enumerate()
                .map(|(l, &stride)| {
                    let mut rng = seeded_rng(derive_seed(seed, (n * 64 + l) as u64));
                    FeatureLevel::from_fn(
                        channels,
                        level_dim(height, stride),
                        level_dim(width, stride),
                        stride,
                        |_, _, _| rng.gen_range(-1.0f32..1.0),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FeaturePyramid::new(cameras)
}

pub const MIN_OBJECT_SIZE: f64 = 0.5;
pub const MAX_OBJECT_SIZE: f64 = 5.0;
pub const NUM_CLASSES: usize = 10;
pub const NUM_ATTRIBUTES: usize = 8;

/// Default placement region for synthetic objects.
pub fn default_object_bounds() -> SceneBounds {
    SceneBounds {
        min: Vector3::new(-40.0, -40.0, 0.0),
        max: Vector3::new(40.0, 40.0, 2.0),
    }
}

fn yaw_sample(rng: &mut impl Rng) -> f64 {
    // (-π, π]
    PI - rng.gen_range(0.0..2.0 * PI)
}

/// Uniformly placed boxes with sizes in `[0.5, 5]` m and yaw in `(-π, π]`.
pub fn gen_objects(seed: u64, count: usize, bounds: &SceneBounds) -> Vec<Box3D> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let center = Vector3::from_fn(|a, _| rng.gen_range(bounds.min[a]..bounds.max[a]));
            let size = Vector3::from_fn(|_, _| rng.gen_range(MIN_OBJECT_SIZE..=MAX_OBJECT_SIZE));
            let yaw = yaw_sample(&mut rng);
            let velocity = Vector2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            Box3D {
                center,
                size,
                yaw,
                velocity,
                class_id: rng.gen_range(0..NUM_CLASSES),
                attribute_id: rng.gen_range(0..NUM_ATTRIBUTES),
            }
        })
        .collect()
}

/// Depth of an object along the optical axis of the first camera that sees
/// its center, or its horizontal range when no camera does.
pub fn object_depth(b: &Box3D, rig: &CameraRig) -> f64 {
    match visible_cameras(&b.center, rig).first() {
        Some(&n) => project_point(&b.center, &rig.cameras()[n]).depth,
        None => b.center.xy().norm(),
    }
}

/// Noise model for turning ground truth into predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of per-axis center noise, meters.
    pub center_sigma: f64,
    /// Standard deviation of yaw noise, radians.
    pub yaw_sigma: f64,
    /// Standard deviation of per-axis velocity noise, m/s.
    pub velocity_sigma: f64,
    /// Probability that a ground-truth object gets no prediction.
    pub drop_rate: f64,
    /// Expected false positives per ground-truth object.
    pub false_positive_rate: f64,
    /// Scores are uniform in `[score_min, score_max]`.
    pub score_min: f64,
    pub score_max: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            center_sigma: 0.0,
            yaw_sigma: 0.0,
            velocity_sigma: 0.0,
            drop_rate: 0.0,
            false_positive_rate: 0.0,
            score_min: 0.05,
            score_max: 1.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.center_sigma, self.yaw_sigma, self.velocity_sigma];
        if !sigmas.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(Error::Config("noise magnitudes must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) || !(self.false_positive_rate >= 0.0) {
            return Err(Error::Config("drop rate must be in [0, 1], FP rate non-negative".into()));
        }
        if !(self.score_min <= self.score_max && self.score_min >= 0.0 && self.score_max <= 1.0) {
            return Err(Error::Config("score range must lie within [0, 1]".into()));
        }
        Ok(())
    }
}

/// Seeded predictions derived from ground truth.
///
/// Kept objects get Gaussian center, yaw and velocity noise and a uniform
/// score. False positives are placed uniformly within the ground truth's
/// bounding region expanded by 5 m.
pub fn perturb_predictions(gts: &[Box3D], noise: &NoiseSpec, seed: u64) -> Result<Vec<ScoredBox>> {
    noise.validate()?;
    let mut rng = seeded_rng(seed);
    let normal = |sigma: f64| Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()));
    let center_n = normal(noise.center_sigma)?;
    let yaw_n = normal(noise.yaw_sigma)?;
    let vel_n = normal(noise.velocity_sigma)?;
    let score = |rng: &mut crate::SeededRng| {
        if noise.score_min == noise.score_max {
            noise.score_min
        } else {
            rng.gen_range(noise.score_min..=noise.score_max)
        }
    };

    let mut out = Vec::with_capacity(gts.len());
    for gt in gts {
        // Draw every variate even for dropped objects so that the noise of
        // one object does not depend on the drop decisions of earlier ones.
        let dropped = rng.gen_bool(noise.drop_rate);
        let dc = Vector3::from_fn(|_, _| center_n.sample(&mut rng));
        let dyaw = yaw_n.sample(&mut rng);
        let dv = Vector2::new(vel_n.sample(&mut rng), vel_n.sample(&mut rng));
        let s = score(&mut rng);
        if dropped {
            continue;
        }
        let bbox = Box3D {
            center: gt.center + dc,
            yaw: crate::camgeo::normalize_yaw(gt.yaw + dyaw),
            velocity: gt.velocity + dv,
            ..gt.clone()
        };
        out.push(ScoredBox { bbox, score: s });
    }

    if noise.false_positive_rate > 0.0 && !gts.is_empty() {
        let mut lo = gts[0].center;
        let mut hi = gts[0].center;
        for gt in gts {
            lo = lo.inf(&gt.center);
            hi = hi.sup(&gt.center);
        }
        lo -= Vector3::repeat(5.0);
        hi += Vector3::repeat(5.0);
        let expected = noise.false_positive_rate * gts.len() as f64;
        let count = expected.floor() as usize + usize::from(rng.gen_bool(expected.fract()));
        for _ in 0..count {
            let center = Vector3::from_fn(|a, _| rng.gen_range(lo[a]..=hi[a]));
            let size = Vector3::from_fn(|_, _| rng.gen_range(MIN_OBJECT_SIZE..=MAX_OBJECT_SIZE));
            let bbox = Box3D {
                center,
                size,
                yaw: yaw_sample(&mut rng),
                velocity: Vector2::zeros(),
                class_id: rng.gen_range(0..NUM_CLASSES),
                attribute_id: rng.gen_range(0..NUM_ATTRIBUTES),
            };
            let s = score(&mut rng);
            out.push(ScoredBox { bbox, score: s });
        }
    }
    Ok(out)
}

/// Options for [`generate_scene`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub style: RigStyle,
    pub seed: u64,
    pub object_count: usize,
    pub field: FieldKind,
    pub channels: usize,
    pub strides: Vec<u32>,
    pub object_bounds: SceneBounds,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            style: RigStyle::NuScenesLike,
            seed: 0,
            object_count: 50,
            field: FieldKind::Bilinear,
            channels: 32,
            strides: DEFAULT_STRIDES.to_vec(),
            object_bounds: default_object_bounds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub rig: CameraRig,
    pub objects: Vec<Box3D>,
    pub field: AnalyticField,
    pub pyramid: FeaturePyramid,
    pub seed: u64,
}

pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene> {
    let rig = gen_rig(&config.style)?;
    let k = rig.cameras()[0].intrinsics;
    let field = AnalyticField::seeded(config.field, config.channels, k.width, k.height, derive_seed(config.seed, 1))?;
    let pyramid = render_pyramid(&field, &rig, &config.strides)?;
    let objects = gen_objects(derive_seed(config.seed, 2), config.object_count, &config.object_bounds);
    Ok(SyntheticScene {
        rig,
        objects,
        field,
        pyramid,
        seed: config.seed,
    })
}

/// Point on the ray at `azimuth_deg` from the ego origin, at camera height.
pub fn ray_point(azimuth_deg: f64, range: f64) -> Vector3<f64> {
    let a = azimuth_deg.to_radians();
    Vector3::new(range * a.cos(), range * a.sin(), CAMERA_HEIGHT)
}

/// Corners of a box followed by its center; the points the region split inspects.
pub fn probe_points(b: &Box3D) -> Vec<Vector3<f64>> {
    let mut pts = box_corners(b).to_vec();
    pts.push(b.center);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::{classify_region, is_visible, Region};
    use crate::featcore::bilinear_sample;

    #[test]
    fn rig_styles() {
        assert_eq!(gen_rig(&RigStyle::Single).unwrap().len(), 1);
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        assert_eq!(rig.len(), 6);
        assert!(visible_cameras(&Vector3::zeros(), &rig).is_empty());
    }

    #[test]
    fn adjacent_cameras_share_seams() {
        // Oracle: brute-force visibility of each camera at the middle of the
        // angular interval where adjacent frusta overlap.
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let specs = nuscenes_like_specs();
        for i in 0..specs.len() {
            let j = (i + 1) % specs.len();
            let (a, b) = (specs[i].yaw_deg, specs[j].yaw_deg);
            let b = if b < a { b + 360.0 } else { b };
            let mid = ((a + specs[i].hfov_deg / 2.0) + (b - specs[j].hfov_deg / 2.0)) / 2.0;
            let p = ray_point(mid, 25.0);
            let seen: Vec<usize> = (0..rig.len()).filter(|&n| is_visible(&p, &rig.cameras()[n])).collect();
            let mut expected = vec![i, j];
            expected.sort();
            assert_eq!(seen, expected, "seam between {} and {}", specs[i].id, specs[j].id);
        }
    }

    #[test]
    fn exclusive_regions_exist() {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        for spec in nuscenes_like_specs() {
            assert_eq!(visible_cameras(&ray_point(spec.yaw_deg, 20.0), &rig).len(), 1);
        }
    }

    #[test]
    fn identical_cameras_double_count() {
        let mut second = CameraSpec::on_circle("twin", 0.0, 70.0);
        second.position = CameraSpec::on_circle("a", 0.0, 70.0).position;
        let rig = gen_rig(&RigStyle::Custom(vec![CameraSpec::on_circle("a", 0.0, 70.0), second])).unwrap();
        for range in [5.0, 12.0, 40.0] {
            for az in [-20.0, 0.0, 15.0] {
                assert_eq!(visible_cameras(&ray_point(az, range), &rig).len(), 2);
            }
        }
    }

    #[test]
    fn custom_rig_errors() {
        assert!(matches!(gen_rig(&RigStyle::Custom(vec![])), Err(Error::Config(_))));
        let bad = CameraSpec {
            hfov_deg: 200.0,
            ..CameraSpec::on_circle("x", 0.0, 70.0)
        };
        assert!(matches!(gen_rig(&RigStyle::Custom(vec![bad])), Err(Error::Config(_))));
        let dup = vec![CameraSpec::on_circle("x", 0.0, 70.0), CameraSpec::on_circle("x", 90.0, 70.0)];
        assert!(matches!(gen_rig(&RigStyle::Custom(dup)), Err(Error::Config(_))));
    }

    #[test]
    fn constant_and_linear_rendering() {
        let rig = gen_rig(&RigStyle::Single).unwrap();
        let constant = AnalyticField::Constant { values: vec![0.25, -3.0] };
        let pyr = render_pyramid(&constant, &rig, &DEFAULT_STRIDES).unwrap();
        for level in pyr.levels(0) {
            for c in 0..2 {
                assert!(level.data()[c * level.height() * level.width()..][..level.height() * level.width()]
                    .iter()
                    .all(|v| *v == constant.eval(c, 0.0, 0.0) as f32));
            }
        }
        let linear = AnalyticField::Linear { coeffs: vec![[0.5, 0.001, 0.0]] };
        let pyr = render_pyramid(&linear, &rig, &DEFAULT_STRIDES).unwrap();
        for level in pyr.levels(0) {
            let s = level.stride() as f64;
            for x in [0, 3, level.width() - 1] {
                assert_eq!(level.get(0, 2, x), (0.5 + 0.001 * x as f64 * s) as f32);
            }
        }
    }

    #[test]
    fn rendered_bilinear_field_samples_to_closed_form() {
        let rig = gen_rig(&RigStyle::Single).unwrap();
        let field = AnalyticField::seeded(FieldKind::Bilinear, 3, 1600, 900, 9).unwrap();
        let pyr = render_pyramid(&field, &rig, &DEFAULT_STRIDES).unwrap();
        let mut rng = seeded_rng(10);
        for level in pyr.levels(0) {
            let s = level.stride() as f64;
            for _ in 0..200 {
                let x = rng.gen_range(0.0..(level.width() - 1) as f64);
                let y = rng.gen_range(0.0..(level.height() - 1) as f64);
                let (f, inside) = bilinear_sample(level, [x, y]);
                assert!(inside);
                for (c, v) in f.iter().enumerate() {
                    assert!((v - field.eval(c, x * s, y * s)).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn level_dims_cover_the_image() {
        assert_eq!(level_dim(1600, 8), 200);
        assert_eq!(level_dim(900, 8), 113);
        assert_eq!(level_dim(900, 64), 15);
        assert_eq!(level_dim(1, 64), 1);
    }

    #[test]
    fn objects_are_reproducible_and_in_range() {
        let bounds = default_object_bounds();
        assert!(gen_objects(1, 0, &bounds).is_empty());
        let a = gen_objects(3, 200, &bounds);
        assert_eq!(a, gen_objects(3, 200, &bounds));
        assert_ne!(a, gen_objects(4, 200, &bounds));
        for b in &a {
            assert!(bounds.contains(&b.center));
            assert!(b.size.iter().all(|s| (MIN_OBJECT_SIZE..=MAX_OBJECT_SIZE).contains(s)));
            assert!(b.yaw > -PI && b.yaw <= PI);
            b.validate().unwrap();
        }
    }

    #[test]
    fn region_fraction_matches_exhaustive_projection() {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let objects = gen_objects(7, 100, &default_object_bounds());
        let mut overlapping = 0;
        for b in &objects {
            let mut cams = std::collections::BTreeSet::new();
            for p in probe_points(b) {
                for (n, cam) in rig.cameras().iter().enumerate() {
                    let pr = project_point(&p, cam);
                    let k = cam.intrinsics;
                    if pr.depth > 0.0
                        && (0.0..k.width as f64).contains(&pr.pixel.x)
                        && (0.0..k.height as f64).contains(&pr.pixel.y)
                    {
                        cams.insert(n);
                    }
                }
            }
            let oracle = match cams.len() {
                0 => Region::Invisible,
                1 => Region::NonOverlapping,
                _ => Region::Overlapping,
            };
            assert_eq!(classify_region(b, &rig), oracle);
            overlapping += usize::from(oracle == Region::Overlapping);
        }
        assert!(overlapping > 0 && overlapping < 100);
    }

    #[test]
    fn zero_noise_predictions_equal_ground_truth() {
        let gts = gen_objects(5, 50, &default_object_bounds());
        let preds = perturb_predictions(&gts, &NoiseSpec::default(), 1).unwrap();
        assert_eq!(preds.len(), gts.len());
        for (p, g) in preds.iter().zip(&gts) {
            assert_eq!(&p.bbox, g);
        }
        assert_eq!(preds, perturb_predictions(&gts, &NoiseSpec::default(), 1).unwrap());
    }

    #[test]
    fn drop_rate_is_respected_on_average() {
        let gts = gen_objects(5, 10_000, &default_object_bounds());
        let noise = NoiseSpec {
            drop_rate: 0.5,
            ..NoiseSpec::default()
        };
        let kept = perturb_predictions(&gts, &noise, 2).unwrap().len() as f64 / 10_000.0;
        assert!((kept - 0.5).abs() < 0.02, "{kept}");
    }

    #[test]
    fn false_positives_are_added() {
        let gts = gen_objects(5, 100, &default_object_bounds());
        let noise = NoiseSpec {
            false_positive_rate: 0.3,
            ..NoiseSpec::default()
        };
        assert_eq!(perturb_predictions(&gts, &noise, 2).unwrap().len(), 130);
        let bad = NoiseSpec {
            center_sigma: -1.0,
            ..NoiseSpec::default()
        };
        assert!(perturb_predictions(&gts, &bad, 2).is_err());
    }
}
