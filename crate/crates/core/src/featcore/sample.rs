use nalgebra::Vector3;

use super::{FeatureLevel, FeaturePyramid, SampleResult};
use crate::camgeo::{project_point, CameraRig};

/// Bilinear support of a continuous position.
#[derive(Clone, Copy, Debug)]
struct Cell {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    tx: f64,
    ty: f64,
}

fn axis_cell(t: f64, len: usize) -> Option<(usize, usize, f64)> {
    let max = (len - 1) as f64;
    if !(t >= 0.0 && t <= max) {
        return None;
    }
    if len == 1 {
        return Some((0, 0, 0.0));
    }
    let i0 = (t.floor() as usize).min(len - 2);
    Some((i0, i0 + 1, t - i0 as f64))
}

fn locate(level: &FeatureLevel, u: f64, v: f64) -> Option<Cell> {
    let (x0, x1, tx) = axis_cell(u, level.width)?;
    let (y0, y1, ty) = axis_cell(v, level.height)?;
    Some(Cell { x0, y0, x1, y1, tx, ty })
}

#[inline]
fn blend(level: &FeatureLevel, c: usize, cell: &Cell) -> f64 {
    let f00 = level.get(c, cell.y0, cell.x0) as f64;
    let f01 = level.get(c, cell.y0, cell.x1) as f64;
    let f10 = level.get(c, cell.y1, cell.x0) as f64;
    let f11 = level.get(c, cell.y1, cell.x1) as f64;
    let top = (1.0 - cell.tx) * f00 + cell.tx * f01;
    let bottom = (1.0 - cell.tx) * f10 + cell.tx * f11;
    (1.0 - cell.ty) * top + cell.ty * bottom
}

#[inline]
fn blend_grad(level: &FeatureLevel, c: usize, cell: &Cell) -> (f64, f64) {
    let f00 = level.get(c, cell.y0, cell.x0) as f64;
    let f01 = level.get(c, cell.y0, cell.x1) as f64;
    let f10 = level.get(c, cell.y1, cell.x0) as f64;
    let f11 = level.get(c, cell.y1, cell.x1) as f64;
    let du = (1.0 - cell.ty) * (f01 - f00) + cell.ty * (f11 - f10);
    let dv = (1.0 - cell.tx) * (f10 - f00) + cell.tx * (f11 - f01);
    (du, dv)
}

/// Bilinearly samples all channels at `pos = (u, v)` in the level's grid.
///
/// Returns a zero feature and `false` when `pos` falls outside
/// `[0, W-1] × [0, H-1]`.
pub fn bilinear_sample(level: &FeatureLevel, pos: [f64; 2]) -> (Vec<f64>, bool) {
    match locate(level, pos[0], pos[1]) {
        Some(cell) => ((0..level.channels).map(|c| blend(level, c, &cell)).collect(), true),
        None => (vec![0.0; level.channels], false),
    }
}

/// Partial derivatives of a bilinear sample w.r.t. `u` and `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearGrad {
    pub d_du: Vec<f64>,
    pub d_dv: Vec<f64>,
    /// False on integer grid lines (bilinear kinks) and on or outside the
    /// grid border. The returned values are then the one-sided derivative
    /// of the cell at `floor(pos)`, or zero outside the grid.
    pub differentiable: bool,
}

pub fn bilinear_grad(level: &FeatureLevel, pos: [f64; 2]) -> BilinearGrad {
    let [u, v] = pos;
    let Some(cell) = locate(level, u, v) else {
        return BilinearGrad {
            d_du: vec![0.0; level.channels],
            d_dv: vec![0.0; level.channels],
            differentiable: false,
        };
    };
    let (d_du, d_dv) = (0..level.channels).map(|c| blend_grad(level, c, &cell)).unzip();
    BilinearGrad {
        d_du,
        d_dv,
        differentiable: off_kink(u, level.width) && off_kink(v, level.height),
    }
}

fn off_kink(t: f64, len: usize) -> bool {
    t > 0.0 && t < (len - 1) as f64 && t.fract() != 0.0
}

fn scale_for(scales: &[[f64; 2]], camera: usize) -> [f64; 2] {
    if scales.is_empty() {
        [1.0, 1.0]
    } else {
        scales[camera]
    }
}

/// Level-grid position of an image pixel on a given level.
#[inline]
fn level_position(pixel_u: f64, pixel_v: f64, scale: [f64; 2], stride: u32) -> (f64, f64) {
    let s = stride as f64;
    (pixel_u * scale[0] / s, pixel_v * scale[1] / s)
}

fn check_counts(pyr: &FeaturePyramid, rig: &CameraRig, scales: &[[f64; 2]]) {
    assert_eq!(
        pyr.camera_count(),
        rig.len(),
        "pyramid and rig camera counts differ"
    );
    assert!(
        scales.is_empty() || scales.len() == rig.len(),
        "need one image scale per camera"
    );
}

/// Projects `p` into every camera and averages the bilinear samples of all
/// in-bounds `(camera, level)` pairs.
///
/// `scales` holds the per-camera image resize factors `(r_x, r_y)`; an empty
/// slice means unscaled images. Cameras are visited in rig order and levels
/// in pyramid order, so the reduction order is fixed.
///
/// # Panics
///
/// Panics when the pyramid and rig disagree on the camera count.
pub fn sample_multiview(
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    p: &Vector3<f64>,
    scales: &[[f64; 2]],
) -> SampleResult {
    check_counts(pyr, rig, scales);
    let channels = pyr.channels();
    let mut acc = vec![0.0f64; channels];
    let mut count = 0usize;
    for (n, cam) in rig.cameras().iter().enumerate() {
        let proj = project_point(p, cam);
        if !proj.in_front() {
            continue;
        }
        let scale = scale_for(scales, n);
        for level in pyr.levels(n) {
            let (u, v) = level_position(proj.pixel.x, proj.pixel.y, scale, level.stride);
            if let Some(cell) = locate(level, u, v) {
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += blend(level, c, &cell);
                }
                count += 1;
            }
        }
    }
    finish(acc, count)
}

fn finish(mut acc: Vec<f64>, count: usize) -> SampleResult {
    if count == 0 {
        acc.iter_mut().for_each(|a| *a = 0.0);
        return SampleResult {
            feature: acc,
            visible_count: 0,
            valid: false,
        };
    }
    let norm = count as f64;
    acc.iter_mut().for_each(|a| *a /= norm);
    SampleResult {
        feature: acc,
        visible_count: count,
        valid: true,
    }
}

/// Multi-view sample together with its derivative w.r.t. the 3D point.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiviewJacobian {
    pub sample: SampleResult,
    /// `jacobian[c]` is the gradient of channel `c` w.r.t. the ego-frame point.
    pub jacobian: Vec<[f64; 3]>,
    /// False if any contributing sample sits on a bilinear kink or grid border.
    pub differentiable: bool,
}

/// [`sample_multiview`] plus the analytic Jacobian through projection and
/// bilinear interpolation.
///
/// The visibility mask is piecewise constant, so the normalization factor
/// does not contribute to the derivative.
pub fn sample_multiview_with_jacobian(
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    p: &Vector3<f64>,
    scales: &[[f64; 2]],
) -> MultiviewJacobian {
    check_counts(pyr, rig, scales);
    let channels = pyr.channels();
    let mut acc = vec![0.0f64; channels];
    let mut jac = vec![[0.0f64; 3]; channels];
    let mut count = 0usize;
    let mut differentiable = true;
    for (n, cam) in rig.cameras().iter().enumerate() {
        let proj = project_point(p, cam);
        if !proj.in_front() {
            continue;
        }
        let scale = scale_for(scales, n);
        let pj = cam.projection_jacobian(p);
        for level in pyr.levels(n) {
            let (u, v) = level_position(proj.pixel.x, proj.pixel.y, scale, level.stride);
            let Some(cell) = locate(level, u, v) else {
                continue;
            };
            differentiable &= off_kink(u, level.width) && off_kink(v, level.height);
            let su = scale[0] / level.stride as f64;
            let sv = scale[1] / level.stride as f64;
            for c in 0..channels {
                acc[c] += blend(level, c, &cell);
                let (du, dv) = blend_grad(level, c, &cell);
                for a in 0..3 {
                    jac[c][a] += du * su * pj[0][a] + dv * sv * pj[1][a];
                }
            }
            count += 1;
        }
    }
    if count > 0 {
        let norm = count as f64;
        for row in &mut jac {
            row.iter_mut().for_each(|g| *g /= norm);
        }
    }
    MultiviewJacobian {
        sample: finish(acc, count),
        jacobian: jac,
        differentiable,
    }
}

/// Identifies one bilinear support cell touched by a multi-view sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FootprintEntry {
    pub camera: usize,
    pub level: usize,
    pub x0: usize,
    pub y0: usize,
}

/// The set of `(camera, level, cell)` entries a multi-view sample reads.
///
/// Two points with equal footprints lie in the same smooth piece of the
/// sampling function.
pub fn sample_footprint(
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    p: &Vector3<f64>,
    scales: &[[f64; 2]],
) -> Vec<FootprintEntry> {
    check_counts(pyr, rig, scales);
    let mut out = Vec::new();
    for (n, cam) in rig.cameras().iter().enumerate() {
        let proj = project_point(p, cam);
        if !proj.in_front() {
            continue;
        }
        let scale = scale_for(scales, n);
        for (l, level) in pyr.levels(n).iter().enumerate() {
            let (u, v) = level_position(proj.pixel.x, proj.pixel.y, scale, level.stride);
            // Keyed on the integer part rather than the support cell so that
            // the last grid line is distinguished from the cell before it.
            if locate(level, u, v).is_some() {
                out.push(FootprintEntry {
                    camera: n,
                    level: l,
                    x0: u.floor() as usize,
                    y0: v.floor() as usize,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_by_two() -> FeatureLevel {
        FeatureLevel::new(1, 2, 2, 8, vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn samples_cell_mean_and_grid_points() {
        let lvl = two_by_two();
        assert_eq!(bilinear_sample(&lvl, [0.5, 0.5]), (vec![1.5], true));
        assert_eq!(bilinear_sample(&lvl, [1.0, 0.0]).0, vec![1.0]);
        assert_eq!(bilinear_sample(&lvl, [0.0, 1.0]).0, vec![2.0]);
        assert_eq!(bilinear_sample(&lvl, [1.0, 1.0]).0, vec![3.0]);
    }

    #[test]
    fn outside_is_zero_and_flagged() {
        let lvl = two_by_two();
        assert_eq!(bilinear_sample(&lvl, [1.0001, 0.5]), (vec![0.0], false));
        assert_eq!(bilinear_sample(&lvl, [-1e-9, 0.5]), (vec![0.0], false));
        assert!(!bilinear_sample(&lvl, [f64::NAN, 0.5]).1);
    }

    #[test]
    fn constant_map_is_constant_with_zero_gradient() {
        let lvl = FeatureLevel::from_fn(3, 5, 7, 8, |_, _, _| 2.5).unwrap();
        let (f, inside) = bilinear_sample(&lvl, [3.3, 1.7]);
        assert!(inside);
        assert_eq!(f, vec![2.5; 3]);
        let g = bilinear_grad(&lvl, [3.3, 1.7]);
        assert!(g.differentiable);
        assert_eq!(g.d_du, vec![0.0; 3]);
        assert_eq!(g.d_dv, vec![0.0; 3]);
    }

    #[test]
    fn gradient_of_linear_map_is_slope() {
        let lvl = FeatureLevel::from_fn(1, 4, 6, 8, |_, _, x| 0.75 * x as f32).unwrap();
        let g = bilinear_grad(&lvl, [2.4, 1.3]);
        assert_eq!(g.d_du, vec![0.75]);
        assert_eq!(g.d_dv, vec![0.0]);
    }

    #[test]
    fn two_by_two_gradient_matches_finite_difference() {
        // Oracle: central differences with h = 1e-5 on the forward sampler.
        let lvl = two_by_two();
        let h = 1e-5;
        let f = |u: f64, v: f64| bilinear_sample(&lvl, [u, v]).0[0];
        let fd_u = (f(0.5 + h, 0.5) - f(0.5 - h, 0.5)) / (2.0 * h);
        let fd_v = (f(0.5, 0.5 + h) - f(0.5, 0.5 - h)) / (2.0 * h);
        assert_relative_eq!(fd_u, 1.0, epsilon = 1e-9);
        assert_relative_eq!(fd_v, 2.0, epsilon = 1e-9);
        let g = bilinear_grad(&lvl, [0.5, 0.5]);
        assert_eq!((g.d_du[0], g.d_dv[0]), (1.0, 2.0));
    }

    #[test]
    fn kinks_are_flagged() {
        let lvl = FeatureLevel::from_fn(1, 4, 4, 8, |_, y, x| (x * y) as f32).unwrap();
        assert!(!bilinear_grad(&lvl, [1.0, 1.5]).differentiable);
        assert!(!bilinear_grad(&lvl, [1.5, 2.0]).differentiable);
        assert!(!bilinear_grad(&lvl, [0.0, 1.5]).differentiable);
        assert!(!bilinear_grad(&lvl, [3.0, 1.5]).differentiable);
        assert!(!bilinear_grad(&lvl, [3.5, 1.5]).differentiable);
        assert!(bilinear_grad(&lvl, [1.5, 1.5]).differentiable);
    }

    #[test]
    fn single_pixel_level() {
        let lvl = FeatureLevel::new(2, 1, 1, 64, vec![4.0, -1.0]).unwrap();
        assert_eq!(bilinear_sample(&lvl, [0.0, 0.0]), (vec![4.0, -1.0], true));
        assert!(!bilinear_sample(&lvl, [0.1, 0.0]).1);
    }
}
