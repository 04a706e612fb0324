//! Center-distance detection metrics: AP, the five true-positive errors,
//! NDS and the overlapping / non-overlapping region split.
//!
//! Matching follows the usual nuScenes recipe: predictions of one class are
//! sorted by descending score across all frames and greedily take the
//! nearest unmatched ground truth of the same frame whose 2D center distance
//! is below the threshold.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use crate::camgeo::{classify_region, normalize_yaw, Box3D, CameraRig, Region};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_TP_THRESHOLD: f64 = 2.0;
pub const MIN_RECALL: f64 = 0.1;
pub const MIN_PRECISION: f64 = 0.1;

/// A box with a detection score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredBox {
    pub bbox: Box3D,
    pub score: f64,
}

/// Ground truth and predictions of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalFrame {
    pub gts: Vec<Box3D>,
    pub preds: Vec<ScoredBox>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFilter {
    All,
    Overlapping,
    NonOverlapping,
}

impl RegionFilter {
    fn keeps(&self, region: Region) -> bool {
        match self {
            RegionFilter::All => true,
            RegionFilter::Overlapping => region == Region::Overlapping,
            RegionFilter::NonOverlapping => region == Region::NonOverlapping,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RegionFilter::All => "overall",
            RegionFilter::Overlapping => "overlapping",
            RegionFilter::NonOverlapping => "non_overlapping",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Matching distances for AP, ascending, meters.
    pub thresholds: Vec<f64>,
    /// Matching distance for the TP errors, meters.
    pub tp_threshold: f64,
    pub classes: Vec<usize>,
    pub region: RegionFilter,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            tp_threshold: DEFAULT_TP_THRESHOLD,
            classes: (0..10).collect(),
            region: RegionFilter::All,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty()
            || !self.thresholds.iter().all(|d| *d > 0.0 && d.is_finite())
            || !self.thresholds.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::Config("distance thresholds must be positive and ascending".into()));
        }
        if !(self.tp_threshold > 0.0 && self.tp_threshold.is_finite()) {
            return Err(Error::Config("TP threshold must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("class list is empty".into()));
        }
        Ok(())
    }
}

/// Mean true-positive errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TpErrors {
    pub ate: f64,
    pub ase: f64,
    pub aoe: f64,
    pub ave: f64,
    pub aae: f64,
}

impl TpErrors {
    pub const WORST: TpErrors = TpErrors {
        ate: 1.0,
        ase: 1.0,
        aoe: 1.0,
        ave: 1.0,
        aae: 1.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.ate, self.ase, self.aoe, self.ave, self.aae]
    }
}

pub fn center_distance(a: &Box3D, b: &Box3D) -> f64 {
    (a.center.xy() - b.center.xy()).norm()
}

/// IoU of two boxes after aligning centers and yaw.
pub fn aligned_iou(a: &Box3D, b: &Box3D) -> f64 {
    let inter: f64 = (0..3).map(|i| a.size[i].min(b.size[i])).product();
    inter / (a.volume() + b.volume() - inter)
}

/// Smallest absolute yaw difference, in `[0, π]`.
pub fn yaw_difference(a: f64, b: f64) -> f64 {
    normalize_yaw(a - b).abs()
}

/// Mean errors over `(prediction, ground truth)` pairs; `None` when empty.
pub fn tp_errors(pairs: &[(&Box3D, &Box3D)]) -> Option<TpErrors> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&Box3D, &Box3D) -> f64| pairs.iter().map(|(p, g)| f(p, g)).sum::<f64>() / n;
    Some(TpErrors {
        ate: mean(&center_distance),
        ase: mean(&|p, g| 1.0 - aligned_iou(p, g)),
        aoe: mean(&|p, g| yaw_difference(p.yaw, g.yaw)),
        ave: mean(&|p, g| (p.velocity - g.velocity).norm()),
        aae: mean(&|p, g| if p.attribute_id == g.attribute_id { 0.0 } else { 1.0 }),
    })
}

/// `(5·mAP + Σ(1 − min(1, mTP))) / 10`.
pub fn nds(map: f64, mtp: [f64; 5]) -> f64 {
    (5.0 * map + mtp.iter().map(|e| 1.0 - e.min(1.0)).sum::<f64>()) / 10.0
}

/// Result of greedy matching for one class at one distance.
struct Matching {
    /// True-positive flag per prediction, in descending score order.
    tp: Vec<bool>,
    /// `(frame, pred index, gt index)` of every match.
    pairs: Vec<(usize, usize, usize)>,
    num_gt: usize,
}

fn match_class(frames: &[EvalFrame], class: usize, d: f64) -> Matching {
    let mut order: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, fr)| {
            fr.preds
                .iter()
                .enumerate()
                .filter(|(_, p)| p.bbox.class_id == class)
                .map(move |(i, _)| (f, i))
        })
        .collect();
    // Stable sort keeps input order among equal scores.
    order.sort_by(|a, b| {
        let sa = frames[a.0].preds[a.1].score;
        let sb = frames[b.0].preds[b.1].score;
        sb.partial_cmp(&sa).unwrap_or(Ordering::Equal)
    });

    let mut taken: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.gts.len()]).collect();
    let num_gt = frames
        .iter()
        .map(|f| f.gts.iter().filter(|g| g.class_id == class).count())
        .sum();
    let mut tp = Vec::with_capacity(order.len());
    let mut pairs = Vec::new();
    for (f, i) in order {
        let pred = &frames[f].preds[i].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in frames[f].gts.iter().enumerate() {
            if gt.class_id != class || taken[f][j] {
                continue;
            }
            let dist = center_distance(pred, gt);
            if best.map_or(true, |(_, b)| dist < b) {
                best = Some((j, dist));
            }
        }
        match best {
            Some((j, dist)) if dist < d => {
                taken[f][j] = true;
                tp.push(true);
                pairs.push((f, i, j));
            }
            _ => tp.push(false),
        }
    }
    Matching { tp, pairs, num_gt }
}

/// Linear interpolation with `numpy.interp` semantics and `right = 0`.
fn interp(x: f64, xp: &[f64], fp: &[f64]) -> f64 {
    let last = xp.len() - 1;
    if x > xp[last] {
        return 0.0;
    }
    if x <= xp[0] {
        return fp[0];
    }
    let j = xp.partition_point(|v| *v <= x) - 1;
    if j == last {
        return fp[last];
    }
    let t = (x - xp[j]) / (xp[j + 1] - xp[j]);
    fp[j] + t * (fp[j + 1] - fp[j])
}

/// Precision sampled at recalls `0, 0.01, …, 1`, plus the highest recall.
fn precision_curve(m: &Matching) -> Option<(Vec<f64>, f64)> {
    if m.num_gt == 0 || m.tp.is_empty() {
        return None;
    }
    let mut tp = 0.0;
    let mut recall = Vec::with_capacity(m.tp.len());
    let mut precision = Vec::with_capacity(m.tp.len());
    for (k, hit) in m.tp.iter().enumerate() {
        tp += f64::from(u8::from(*hit));
        recall.push(tp / m.num_gt as f64);
        precision.push(tp / (k + 1) as f64);
    }
    let max_recall = *recall.last().expect("non-empty");
    let curve = (0..=100).map(|i| interp(i as f64 / 100.0, &recall, &precision)).collect();
    Some((curve, max_recall))
}

fn ap_from_curve(curve: &[f64]) -> f64 {
    let start = (100.0 * MIN_RECALL).round() as usize + 1;
    let tail = &curve[start..];
    let mean = tail.iter().map(|p| (p - MIN_PRECISION).max(0.0)).sum::<f64>() / tail.len() as f64;
    // Rounding can push a perfect curve a few ulps above 1.
    (mean / (1.0 - MIN_PRECISION)).min(1.0)
}

/// Average precision of one class at one matching distance; 0 without
/// ground truth or predictions.
pub fn ap_at_threshold(frames: &[EvalFrame], class: usize, d: f64) -> f64 {
    precision_curve(&match_class(frames, class, d)).map_or(0.0, |(c, _)| ap_from_curve(&c))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub num_gt: usize,
    pub num_pred: usize,
    /// AP per distance threshold, in threshold order.
    pub ap: Vec<f64>,
    pub mean_ap: f64,
    /// Highest recall reached at the TP threshold.
    pub max_recall: f64,
    pub tp_matches: usize,
    /// `None` when the class has no match at the TP threshold.
    pub tp_errors: Option<TpErrors>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub region: RegionFilter,
    pub thresholds: Vec<f64>,
    pub tp_threshold: f64,
    pub classes: Vec<ClassMetrics>,
    pub map: f64,
    pub mate: f64,
    pub mase: f64,
    pub maoe: f64,
    pub mave: f64,
    pub maae: f64,
    pub nds: f64,
    /// Mean over classes with ground truth of the highest recall.
    pub recall_plateau: f64,
    pub num_gt: usize,
    pub num_pred: usize,
    /// No ground truth at all; mAP is reported as 0.
    pub no_ground_truth: bool,
    /// No match at the TP threshold; TP errors are reported as 1.
    pub no_tp_matches: bool,
}

impl MetricsReport {
    pub fn mtp(&self) -> [f64; 5] {
        [self.mate, self.mase, self.maoe, self.mave, self.maae]
    }
}

/// Evaluates all frames. Region filters other than `All` need one rig per
/// frame; ground truth and predictions are filtered by their own region.
pub fn evaluate(frames: &[EvalFrame], rigs: Option<&[CameraRig]>, cfg: &EvalConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let filtered;
    let frames = if cfg.region == RegionFilter::All {
        frames
    } else {
        let rigs = rigs.ok_or_else(|| Error::Config("region filtering needs a camera rig".into()))?;
        if rigs.len() != frames.len() {
            return Err(Error::Dimension {
                expected: frames.len(),
                actual: rigs.len(),
                context: "rigs per frame",
            });
        }
        filtered = frames
            .iter()
            .zip(rigs)
            .map(|(f, rig)| EvalFrame {
                gts: f
                    .gts
                    .iter()
                    .filter(|g| cfg.region.keeps(classify_region(g, rig)))
                    .cloned()
                    .collect(),
                preds: f
                    .preds
                    .iter()
                    .filter(|p| cfg.region.keeps(classify_region(&p.bbox, rig)))
                    .cloned()
                    .collect(),
            })
            .collect::<Vec<_>>();
        &filtered[..]
    };

    let classes: Vec<ClassMetrics> = cfg
        .classes
        .iter()
        .map(|&class| {
            let ap: Vec<f64> = cfg.thresholds.iter().map(|&d| ap_at_threshold(frames, class, d)).collect();
            let m = match_class(frames, class, cfg.tp_threshold);
            let max_recall = precision_curve(&m).map_or(0.0, |(_, r)| r);
            let pairs: Vec<(&Box3D, &Box3D)> = m
                .pairs
                .iter()
                .map(|&(f, i, j)| (&frames[f].preds[i].bbox, &frames[f].gts[j]))
                .collect();
            ClassMetrics {
                class,
                num_gt: m.num_gt,
                num_pred: m.tp.len(),
                mean_ap: ap.iter().sum::<f64>() / ap.len() as f64,
                ap,
                max_recall,
                tp_matches: pairs.len(),
                tp_errors: tp_errors(&pairs),
            }
        })
        .collect();

    let with_gt: Vec<&ClassMetrics> = classes.iter().filter(|c| c.num_gt > 0).collect();
    let no_ground_truth = with_gt.is_empty();
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| {
        if with_gt.is_empty() {
            0.0
        } else {
            with_gt.iter().map(|c| f(c)).sum::<f64>() / with_gt.len() as f64
        }
    };
    let map = mean(&|c| c.mean_ap);
    let recall_plateau = mean(&|c| c.max_recall);

    let matched: Vec<TpErrors> = classes.iter().filter_map(|c| c.tp_errors).collect();
    let no_tp_matches = matched.is_empty();
    let tp = if no_tp_matches {
        TpErrors::WORST
    } else {
        let n = matched.len() as f64;
        let avg = |k: usize| matched.iter().map(|e| e.as_array()[k]).sum::<f64>() / n;
        TpErrors {
            ate: avg(0),
            ase: avg(1),
            aoe: avg(2),
            ave: avg(3),
            aae: avg(4),
        }
    };

    Ok(MetricsReport {
        region: cfg.region,
        thresholds: cfg.thresholds.clone(),
        tp_threshold: cfg.tp_threshold,
        nds: nds(map, tp.as_array()),
        num_gt: classes.iter().map(|c| c.num_gt).sum(),
        num_pred: classes.iter().map(|c| c.num_pred).sum(),
        classes,
        map,
        mate: tp.ate,
        mase: tp.ase,
        maoe: tp.aoe,
        mave: tp.ave,
        maae: tp.aae,
        recall_plateau,
        no_ground_truth,
        no_tp_matches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSplitReport {
    pub overall: MetricsReport,
    pub overlapping: MetricsReport,
    pub non_overlapping: MetricsReport,
}

impl RegionSplitReport {
    pub fn regions(&self) -> [&MetricsReport; 3] {
        [&self.overall, &self.overlapping, &self.non_overlapping]
    }
}

/// Overall report plus reports restricted to each region. Invisible objects
/// only count towards the overall report.
pub fn evaluate_region_split(frames: &[EvalFrame], rigs: &[CameraRig], cfg: &EvalConfig) -> Result<RegionSplitReport> {
    let run = |region| {
        evaluate(
            frames,
            Some(rigs),
            &EvalConfig {
                region,
                ..cfg.clone()
            },
        )
    };
    Ok(RegionSplitReport {
        overall: run(RegionFilter::All)?,
        overlapping: run(RegionFilter::Overlapping)?,
        non_overlapping: run(RegionFilter::NonOverlapping)?,
    })
}

/// One row per region and class.
pub fn region_split_csv(report: &RegionSplitReport) -> String {
    report_csv(&report.regions())
}

/// One row per report and class. The AP columns follow the first report's
/// thresholds.
pub fn report_csv(reports: &[&MetricsReport]) -> String {
    let mut out = String::from("region,class,num_gt,num_pred");
    for d in reports.first().map_or(&[][..], |r| &r.thresholds[..]) {
        let _ = write!(out, ",ap@{d}");
    }
    out.push_str(",mean_ap,max_recall,tp_matches,ate,ase,aoe,ave,aae\n");
    for r in reports {
        for c in &r.classes {
            let _ = write!(out, "{},{},{},{}", r.region.as_str(), c.class, c.num_gt, c.num_pred);
            for ap in &c.ap {
                let _ = write!(out, ",{ap}");
            }
            let _ = write!(out, ",{},{},{}", c.mean_ap, c.max_recall, c.tp_matches);
            match c.tp_errors {
                Some(e) => e.as_array().iter().for_each(|v| {
                    let _ = write!(out, ",{v}");
                }),
                None => out.push_str(",,,,,"),
            }
            out.push('\n');
        }
    }
    out
}
