//! Finite-difference verification of the analytic gradients of one graph
//! aggregation step.
//!
//! The scalar loss is `L = Σ_c (q + Σ_j w_j x_j)_c`, the sum of the
//! propagated query. Four paths are checked:
//!
//! * `Offset`: dL/dΔ_j with the reference point and weights held fixed,
//! * `Weight`: dL/dw_j with nodes held fixed,
//! * `Sampling`: d x_{j,c} / d node_j, the multi-view bilinear sampler,
//! * `Query`: dL/dq through the reference, offset and weight networks.

use nalgebra::Vector3;
use rand::Rng;
use serde::Serialize;

use super::graph::{sigmoid, SceneBounds};
use super::mlp::Mlp;
use crate::camgeo::{visible_cameras, CameraRig};
use crate::error::{Error, Result};
use crate::featcore::{
    sample_footprint, sample_multiview, sample_multiview_with_jacobian, FeaturePyramid, FootprintEntry,
    DEFAULT_STRIDES,
};
use crate::synth::{
    derive_seed, gen_rig, render_noise_pyramid, render_pyramid, AnalyticField, FieldKind, RigStyle,
};
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradPath {
    Offset,
    Weight,
    Sampling,
    Query,
}

impl GradPath {
    pub const ALL: [GradPath; 4] = [GradPath::Offset, GradPath::Weight, GradPath::Sampling, GradPath::Query];

    pub fn as_str(&self) -> &'static str {
        match self {
            GradPath::Offset => "offset",
            GradPath::Weight => "weight",
            GradPath::Sampling => "sampling",
            GradPath::Query => "query",
        }
    }
}

/// Feature field the check samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradField {
    /// Seeded uniform noise; exercises every bilinear cell independently.
    Noise,
    Analytic(FieldKind),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub seed: u64,
    /// Central-difference step.
    pub eps: f64,
    /// Pass threshold on `|analytic - fd| / (1 + |analytic|)`.
    pub tol: f64,
    /// Number of accepted (kink-free) sample points.
    pub points: usize,
    pub field: GradField,
    pub channels: usize,
    pub neighbors: usize,
    pub offset_scale: f64,
    /// Retries allowed per point before it is skipped.
    pub max_jitters: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            eps: 1e-4,
            tol: 1e-6,
            points: 1000,
            field: GradField::Noise,
            channels: 8,
            neighbors: 16,
            offset_scale: super::graph::DEFAULT_OFFSET_SCALE,
            max_jitters: 32,
        }
    }
}

impl GradCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if self.channels == 0 || self.neighbors == 0 {
            return Err(Error::Config("channels and neighbors must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathReport {
    pub path: GradPath,
    /// Number of gradient entries compared.
    pub entries: usize,
    pub max_abs_deviation: f64,
    /// Max of `|analytic - fd| / (1 + |analytic|)`.
    pub max_rel_deviation: f64,
    pub max_abs_gradient: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub eps: f64,
    pub tol: f64,
    pub points: usize,
    /// Points that had to be moved off a bilinear or ReLU kink.
    pub jittered: usize,
    /// Points abandoned after `max_jitters` attempts.
    pub skipped: usize,
    pub paths: Vec<PathReport>,
    pub passed: bool,
}

/// One aggregation step with random networks.
#[derive(Clone, Debug)]
struct Case {
    q: Vec<f64>,
    ref_net: Mlp,
    offset_net: Mlp,
    weight_net: Mlp,
    bounds: SceneBounds,
    k: usize,
    offset_scale: f64,
}

/// Forward quantities of a case at a given query.
struct Forward {
    raw_ref: Vec<f64>,
    raw_offsets: Vec<f64>,
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    loss: f64,
    /// Everything that must stay fixed for the loss to be smooth.
    pattern: (Vec<bool>, Vec<Vec<FootprintEntry>>),
}

struct Scene<'a> {
    pyr: &'a FeaturePyramid,
    rig: &'a CameraRig,
}

impl Scene<'_> {
    fn sample(&self, p: &Vector3<f64>) -> Vec<f64> {
        sample_multiview(self.pyr, self.rig, p, &[]).feature
    }

    fn footprint(&self, p: &Vector3<f64>) -> Vec<FootprintEntry> {
        sample_footprint(self.pyr, self.rig, p, &[])
    }

    fn loss(&self, q: &[f64], nodes: &[Vector3<f64>], weights: &[f64]) -> f64 {
        let mut total: f64 = q.iter().sum();
        for (node, w) in nodes.iter().zip(weights) {
            total += w * self.sample(node).iter().sum::<f64>();
        }
        total
    }
}

impl Case {
    fn forward(&self, scene: &Scene, q: &[f64]) -> Forward {
        let ref_trace = self.ref_net.forward_trace(q);
        let off_trace = self.offset_net.forward_trace(q);
        let w_trace = self.weight_net.forward_trace(q);
        let ext = self.bounds.extent();
        let raw_ref = ref_trace.output.clone();
        let reference = Vector3::from_fn(|a, _| self.bounds.min[a] + sigmoid(raw_ref[a]) * ext[a]);
        let nodes: Vec<Vector3<f64>> = off_trace
            .output
            .chunks_exact(3)
            .map(|d| reference + Vector3::new(d[0].tanh(), d[1].tanh(), d[2].tanh()) * self.offset_scale)
            .collect();
        let weights: Vec<f64> = w_trace.output.iter().map(|v| sigmoid(*v)).collect();
        let loss = scene.loss(q, &nodes, &weights);
        let mut relu = ref_trace.relu_pattern(&self.ref_net);
        relu.extend(off_trace.relu_pattern(&self.offset_net));
        relu.extend(w_trace.relu_pattern(&self.weight_net));
        let footprints = nodes.iter().map(|n| scene.footprint(n)).collect();
        Forward {
            raw_ref,
            raw_offsets: off_trace.output,
            nodes,
            weights,
            loss,
            pattern: (relu, footprints),
        }
    }

    /// Analytic dL/dq by reverse-mode chain rule.
    fn query_gradient(&self, scene: &Scene, fwd: &Forward) -> Vec<f64> {
        let ref_trace = self.ref_net.forward_trace(&self.q);
        let off_trace = self.offset_net.forward_trace(&self.q);
        let w_trace = self.weight_net.forward_trace(&self.q);
        let ext = self.bounds.extent();

        let mut g_raw_w = vec![0.0; self.k];
        let mut g_raw_off = vec![0.0; 3 * self.k];
        let mut g_ref = Vector3::<f64>::zeros();
        for j in 0..self.k {
            let mj = sample_multiview_with_jacobian(scene.pyr, scene.rig, &fwd.nodes[j], &[]);
            let s: f64 = mj.sample.feature.iter().sum();
            let w = fwd.weights[j];
            g_raw_w[j] = s * w * (1.0 - w);
            let mut g_node = Vector3::<f64>::zeros();
            for row in &mj.jacobian {
                for a in 0..3 {
                    g_node[a] += w * row[a];
                }
            }
            g_ref += g_node;
            for a in 0..3 {
                let t = fwd.raw_offsets[3 * j + a].tanh();
                g_raw_off[3 * j + a] = g_node[a] * self.offset_scale * (1.0 - t * t);
            }
        }
        let g_raw_ref: Vec<f64> = (0..3)
            .map(|a| {
                let s = sigmoid(fwd.raw_ref[a]);
                g_ref[a] * ext[a] * s * (1.0 - s)
            })
            .collect();

        let from_ref = self.ref_net.backward(&ref_trace, &g_raw_ref);
        let from_off = self.offset_net.backward(&off_trace, &g_raw_off);
        let from_w = self.weight_net.backward(&w_trace, &g_raw_w);
        (0..self.q.len())
            .map(|i| 1.0 + from_ref[i] + from_off[i] + from_w[i])
            .collect()
    }
}

#[derive(Default)]
struct Tally {
    entries: usize,
    max_abs: f64,
    max_rel: f64,
    max_grad: f64,
}

impl Tally {
    fn add(&mut self, analytic: f64, fd: f64) {
        let dev = (analytic - fd).abs();
        self.entries += 1;
        self.max_abs = self.max_abs.max(dev);
        self.max_rel = self.max_rel.max(dev / (1.0 + analytic.abs()));
        self.max_grad = self.max_grad.max(analytic.abs());
    }
}

/// Gradient pairs of one point, collected before the kink verdict.
type Pairs = Vec<(GradPath, f64, f64)>;

fn check_point(case: &Case, scene: &Scene, eps: f64) -> Option<Pairs> {
    let base = case.forward(scene, &case.q);
    // Sampled positions must be visible somewhere, else every gradient is
    // trivially zero.
    if base.nodes.iter().all(|n| visible_cameras(n, scene.rig).is_empty()) {
        return None;
    }
    let mut pairs = Vec::new();

    // Offset and sampling paths: move one node along one axis.
    for (j, node) in base.nodes.iter().enumerate() {
        let mj = sample_multiview_with_jacobian(scene.pyr, scene.rig, node, &[]);
        if !mj.differentiable {
            return None;
        }
        for a in 0..3 {
            let mut plus = *node;
            let mut minus = *node;
            plus[a] += eps;
            minus[a] -= eps;
            if scene.footprint(&plus) != base.pattern.1[j] || scene.footprint(&minus) != base.pattern.1[j] {
                return None;
            }
            let mut nodes = base.nodes.clone();
            nodes[j] = plus;
            let lp = scene.loss(&case.q, &nodes, &base.weights);
            nodes[j] = minus;
            let lm = scene.loss(&case.q, &nodes, &base.weights);
            let analytic: f64 = base.weights[j] * mj.jacobian.iter().map(|row| row[a]).sum::<f64>();
            pairs.push((GradPath::Offset, analytic, (lp - lm) / (2.0 * eps)));

            let (sp, sm) = (scene.sample(&plus), scene.sample(&minus));
            for c in 0..sp.len() {
                pairs.push((GradPath::Sampling, mj.jacobian[c][a], (sp[c] - sm[c]) / (2.0 * eps)));
            }
        }
    }

    // Weight path: the loss is linear in each weight.
    for j in 0..case.k {
        let mut weights = base.weights.clone();
        weights[j] += eps;
        let lp = scene.loss(&case.q, &base.nodes, &weights);
        weights[j] -= 2.0 * eps;
        let lm = scene.loss(&case.q, &base.nodes, &weights);
        let analytic: f64 = scene.sample(&base.nodes[j]).iter().sum();
        pairs.push((GradPath::Weight, analytic, (lp - lm) / (2.0 * eps)));
    }

    // Query path: full chain through all three networks.
    let analytic = case.query_gradient(scene, &base);
    for (i, g) in analytic.iter().enumerate() {
        let mut qp = case.q.clone();
        let mut qm = case.q.clone();
        qp[i] += eps;
        qm[i] -= eps;
        let fp = case.forward(scene, &qp);
        let fm = case.forward(scene, &qm);
        if fp.pattern != base.pattern || fm.pattern != base.pattern {
            return None;
        }
        pairs.push((GradPath::Query, *g, (fp.loss - fm.loss) / (2.0 * eps)));
    }
    Some(pairs)
}

/// Random networks and a query whose reference point lands in a 10 m box
/// somewhere around the rig, 8 to 35 m out.
fn random_case(config: &GradCheckConfig, rng: &mut impl Rng) -> Result<Case> {
    let c = config.channels;
    let k = config.neighbors;
    let azimuth: f64 = rng.gen_range(-180.0..180.0);
    let range: f64 = rng.gen_range(8.0..35.0);
    let a = azimuth.to_radians();
    let center = Vector3::new(range * a.cos(), range * a.sin(), 0.5);
    let half = Vector3::new(5.0, 5.0, 1.5);
    Ok(Case {
        q: (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ref_net: Mlp::seeded(&[c, c, 3], rng)?,
        offset_net: Mlp::seeded(&[c, c, 3 * k], rng)?,
        weight_net: Mlp::seeded(&[c, k], rng)?,
        bounds: SceneBounds::new(center - half, center + half)?,
        k,
        offset_scale: config.offset_scale,
    })
}

/// Builds the rig and pyramid the check samples from.
pub fn gradcheck_scene(config: &GradCheckConfig) -> Result<(CameraRig, FeaturePyramid)> {
    let rig = gen_rig(&RigStyle::NuScenesLike)?;
    let k = rig.cameras()[0].intrinsics;
    let field_seed = derive_seed(config.seed, 0);
    let pyr = match config.field {
        GradField::Noise => render_noise_pyramid(&rig, &DEFAULT_STRIDES, config.channels, field_seed)?,
        GradField::Analytic(kind) => {
            let field = AnalyticField::seeded(kind, config.channels, k.width, k.height, field_seed)?;
            render_pyramid(&field, &rig, &DEFAULT_STRIDES)?
        }
    };
    Ok((rig, pyr))
}

pub fn grad_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    config.validate()?;
    let (rig, pyr) = gradcheck_scene(config)?;
    let scene = Scene { pyr: &pyr, rig: &rig };
    let mut rng = seeded_rng(derive_seed(config.seed, 1));
    let mut tallies: Vec<Tally> = GradPath::ALL.iter().map(|_| Tally::default()).collect();
    let (mut accepted, mut jittered, mut skipped) = (0, 0, 0);

    while accepted < config.points {
        let mut case = random_case(config, &mut rng)?;
        let mut result = None;
        for attempt in 0..=config.max_jitters {
            if attempt > 0 {
                // Step off the kink by a few eps in a random direction.
                let scale = 10.0 * config.eps * attempt as f64;
                case.q.iter_mut().for_each(|v| *v += scale * rng.gen_range(-1.0..1.0));
            }
            result = check_point(&case, &scene, config.eps);
            if result.is_some() {
                jittered += usize::from(attempt > 0);
                break;
            }
        }
        match result {
            Some(pairs) => {
                for (path, a, fd) in pairs {
                    tallies[path as usize].add(a, fd);
                }
                accepted += 1;
            }
            None => {
                skipped += 1;
                if skipped > config.points.max(100) * 10 {
                    return Err(Error::Numeric(format!(
                        "gradient check could not find smooth sample points ({skipped} skipped)"
                    )));
                }
            }
        }
    }

    let paths: Vec<PathReport> = GradPath::ALL
        .iter()
        .zip(&tallies)
        .map(|(path, t)| PathReport {
            path: *path,
            entries: t.entries,
            max_abs_deviation: t.max_abs,
            max_rel_deviation: t.max_rel,
            max_abs_gradient: t.max_grad,
            passed: t.max_rel <= config.tol,
        })
        .collect();
    let passed = paths.iter().all(|p| p.passed);
    Ok(GradCheckReport {
        seed: config.seed,
        eps: config.eps,
        tol: config.tol,
        points: accepted,
        jittered,
        skipped,
        paths,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeo::project_point;
    use crate::featcore::FeatureLevel;

    fn small(field: GradField) -> GradCheckConfig {
        GradCheckConfig {
            points: 20,
            field,
            ..GradCheckConfig::default()
        }
    }

    #[test]
    fn default_noise_field_passes() {
        let report = grad_check(&small(GradField::Noise)).unwrap();
        assert!(report.passed, "{report:#?}");
        assert_eq!(report.points, 20);
        for p in &report.paths {
            assert!(p.entries > 0);
            assert!(p.max_abs_gradient > 0.0, "{:?}", p.path);
        }
    }

    #[test]
    fn seed_42_relative_deviation_below_1e5() {
        let report = grad_check(&small(GradField::Analytic(FieldKind::Bilinear))).unwrap();
        for p in &report.paths {
            assert!(p.max_rel_deviation < 1e-5, "{p:?}");
        }
    }

    #[test]
    fn constant_field_has_zero_offset_gradient() {
        let report = grad_check(&small(GradField::Analytic(FieldKind::Constant))).unwrap();
        let offset = &report.paths[GradPath::Offset as usize];
        assert_eq!(offset.max_abs_gradient, 0.0);
        assert_eq!(offset.max_abs_deviation, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn zero_tolerance_fails() {
        let config = GradCheckConfig {
            tol: 0.0,
            ..small(GradField::Noise)
        };
        assert!(!grad_check(&config).unwrap().passed);
    }

    #[test]
    fn rejects_bad_config() {
        let config = GradCheckConfig {
            eps: 0.0,
            ..GradCheckConfig::default()
        };
        assert!(matches!(grad_check(&config), Err(Error::Config(_))));
    }

    #[test]
    fn linear_field_slope_is_recovered_along_u() {
        // One camera, one full-resolution level holding s·u; with K=1 and
        // w=1 the loss gradient w.r.t. the node's image u-coordinate is s.
        let rig = gen_rig(&RigStyle::Single).unwrap();
        let cam = &rig.cameras()[0];
        let (w, h) = (cam.intrinsics.width as usize, cam.intrinsics.height as usize);
        // Dyadic slope: s·x is exact in f32.
        let s = 1.0 / 256.0;
        let level = FeatureLevel::from_fn(1, h, w, 1, |_, _, x| (s * x as f64) as f32).unwrap();
        let pyr = FeaturePyramid::new(vec![vec![level]]).unwrap();
        let node = Vector3::new(20.0, 1.3, 1.1);
        let mj = sample_multiview_with_jacobian(&pyr, &rig, &node, &[]);
        let pj = cam.projection_jacobian(&node);
        // Move along the direction that changes u only: solve pj·d = (1, 0)
        // with d orthogonal to the camera ray.
        let pc = cam.extrinsics.to_camera(&node);
        let d_cam = Vector3::new(1.0 / cam.intrinsics.fx * pc.z, 0.0, 0.0);
        let d = cam.extrinsics.rotation.transpose() * d_cam;
        let du: f64 = (0..3).map(|a| pj[0][a] * d[a]).sum();
        let dv: f64 = (0..3).map(|a| pj[1][a] * d[a]).sum();
        assert!((du - 1.0).abs() < 1e-12 && dv.abs() < 1e-12);
        let dloss: f64 = (0..3).map(|a| mj.jacobian[0][a] * d[a]).sum();
        assert!((dloss - s).abs() < 1e-9, "{dloss}");
        assert!(project_point(&node, cam).in_front());
    }
}
