//! Set-based supervision: matching cost, optimal assignment, focal and L1
//! losses.

mod hungarian;

pub use hungarian::{brute_force_assignment, hungarian, Assignment, CostMatrix};

use crate::camgeo::Box3D;
use crate::error::{Error, Result};

/// Length of [`box_regression_vector`].
pub const REGRESSION_DIM: usize = 10;

const PROB_TOL: f64 = 1e-6;
const LOG_CLAMP: f64 = 1e-12;

/// `(x, y, z, ln w, ln l, ln h, sin yaw, cos yaw, vx, vy)`.
pub fn box_regression_vector(b: &Box3D) -> [f64; REGRESSION_DIM] {
    let (s, c) = b.yaw.sin_cos();
    [
        b.center.x,
        b.center.y,
        b.center.z,
        b.size.x.ln(),
        b.size.y.ln(),
        b.size.z.ln(),
        s,
        c,
        b.velocity.x,
        b.velocity.y,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub cls: f64,
    pub reg: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { cls: 1.0, reg: 0.25 }
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    let total: f64 = probs.iter().sum();
    if probs.is_empty() || (total - 1.0).abs() > PROB_TOL || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput(format!(
            "class probabilities must be in [0, 1] and sum to 1 (sum {total})"
        )));
    }
    Ok(())
}

/// `λ_cls·(−p[gt class]) + λ_reg·Σ|Δ regression vector|`.
pub fn match_cost(probs: &[f64], pred: &Box3D, gt_class: usize, gt: &Box3D, weights: CostWeights) -> Result<f64> {
    check_probs(probs)?;
    let p = *probs
        .get(gt_class)
        .ok_or_else(|| Error::InvalidInput(format!("class {gt_class} outside {} probabilities", probs.len())))?;
    let a = box_regression_vector(pred);
    let b = box_regression_vector(gt);
    let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    Ok(weights.cls * -p + weights.reg * l1)
}

/// Mean absolute difference.
pub fn l1_reg_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::InvalidInput(format!(
            "regression vectors differ in length ({} vs {})",
            pred.len(),
            gt.len()
        )));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { alpha: 0.25, gamma: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalLoss {
    pub value: f64,
    /// A probability reached 0 or 1 and its logarithm was clamped.
    pub clamped: bool,
}

/// Sigmoid focal loss over all classes. `target` of `None` treats every
/// class as negative (background).
///
/// Target class: `−α·(1−p)^γ·ln p`; other classes: `−(1−α)·p^γ·ln(1−p)`.
pub fn focal_loss(probs: &[f64], target: Option<usize>, params: FocalParams) -> Result<FocalLoss> {
    check_probs(probs)?;
    if let Some(t) = target {
        if t >= probs.len() {
            return Err(Error::InvalidInput(format!("class {t} outside {} probabilities", probs.len())));
        }
    }
    let FocalParams { alpha, gamma } = params;
    let mut clamped = false;
    let mut log = |x: f64| {
        if x < LOG_CLAMP {
            clamped = true;
            LOG_CLAMP.ln()
        } else {
            x.ln()
        }
    };
    let mut value = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        if Some(k) == target {
            value += -alpha * (1.0 - p).powf(gamma) * log(p);
        } else if alpha < 1.0 {
            value += -(1.0 - alpha) * p.powf(gamma) * log(1.0 - p);
        }
    }
    Ok(FocalLoss { value, clamped })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg: f64,
    pub total: f64,
}

/// A prediction as seen by the loss: normalized class probabilities and a box.
#[derive(Clone, Debug, PartialEq)]
pub struct LossInput {
    pub probs: Vec<f64>,
    pub bbox: Box3D,
}

/// Hungarian-matched set loss.
///
/// `cls = λ_cls·Σ_preds focal`, with unmatched predictions as background;
/// `reg = λ_reg·Σ_matched L1`.
pub fn set_loss(
    preds: &[LossInput],
    gts: &[Box3D],
    weights: CostWeights,
    focal: FocalParams,
) -> Result<(LossBreakdown, Assignment)> {
    let mut values = Vec::with_capacity(preds.len() * gts.len());
    for p in preds {
        for g in gts {
            values.push(match_cost(&p.probs, &p.bbox, g.class_id, g, weights)?);
        }
    }
    let costs = CostMatrix::new(preds.len(), gts.len(), values)?;
    let assignment = hungarian(&costs);

    let mut target = vec![None; preds.len()];
    for &(p, g) in &assignment.pairs {
        target[p] = Some(gts[g].class_id);
    }
    let mut cls = 0.0;
    for (p, t) in preds.iter().zip(&target) {
        cls += focal_loss(&p.probs, *t, focal)?.value;
    }
    let mut reg = 0.0;
    for &(p, g) in &assignment.pairs {
        reg += l1_reg_loss(&box_regression_vector(&preds[p].bbox), &box_regression_vector(&gts[g]))?;
    }
    let (cls, reg) = (weights.cls * cls, weights.reg * reg);
    Ok((
        LossBreakdown {
            cls,
            reg,
            total: cls + reg,
        },
        assignment,
    ))
}
