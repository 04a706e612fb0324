use std::fmt::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;

use mvdet_core::io::{AnnotationJson, CalibrationJson, PredictionsJson};
use mvdet_core::metrics::{
    evaluate, evaluate_region_split, nds, region_split_csv, report_csv, EvalConfig, EvalFrame, MetricsReport,
    ScoredBox,
};
use mvdet_core::CameraRig;

use crate::output::{parse_mtp, read_json, write_json, write_text, Outcome};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth annotation JSON.
    #[arg(long, required_unless_present = "precomputed")]
    gt: Option<PathBuf>,
    /// Prediction JSON.
    #[arg(long, required_unless_present = "precomputed")]
    pred: Option<PathBuf>,
    /// Calibration used for the region split instead of each frame's own.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Also report the overlapping and non-overlapping regions.
    #[arg(long)]
    split: bool,
    /// Report JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-region, per-class CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Compute NDS from already aggregated metrics instead of files.
    #[arg(long, requires_all = ["map", "mtp"], conflicts_with_all = ["gt", "pred"])]
    precomputed: bool,
    #[arg(long)]
    map: Option<f64>,
    /// mATE,mASE,mAOE,mAVE,mAAE
    #[arg(long, value_parser = parse_mtp)]
    mtp: Option<[f64; 5]>,
    /// Fail unless the computed NDS is within `--tolerance` of this value.
    #[arg(long)]
    expect_nds: Option<f64>,
    #[arg(long, default_value_t = 5e-4)]
    tolerance: f64,
}

#[derive(Serialize)]
struct PrecomputedReport {
    map: f64,
    mtp: [f64; 5],
    nds: f64,
    expected: Option<f64>,
    tolerance: f64,
    passed: bool,
}

fn precomputed(args: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let (map, mtp) = (args.map.expect("required by clap"), args.mtp.expect("required by clap"));
    let value = nds(map, mtp);
    let passed = args.expect_nds.map_or(true, |e| (value - e).abs() <= args.tolerance);
    let mut human = format!("NDS {value:.6} from mAP {map} and mTP {mtp:?}\n");
    if let Some(e) = args.expect_nds {
        let _ = writeln!(human, "expected {e} +- {}: {}", args.tolerance, if passed { "PASS" } else { "FAIL" });
    }
    let report = PrecomputedReport {
        map,
        mtp,
        nds: value,
        expected: args.expect_nds,
        tolerance: args.tolerance,
        passed,
    };
    Outcome::checked(report, human, passed)
}

fn load_frames(args: &EvaluateArgs) -> anyhow::Result<(Vec<EvalFrame>, Vec<CameraRig>)> {
    let gt_path = args.gt.as_ref().expect("required by clap");
    let pred_path = args.pred.as_ref().expect("required by clap");
    let ann: AnnotationJson = read_json(gt_path)?;
    let preds: PredictionsJson = read_json(pred_path)?;
    let calib = match &args.calib {
        Some(p) => Some(read_json::<CalibrationJson>(p)?.to_rig()?),
        None => None,
    };

    let mut frames = Vec::with_capacity(ann.frames.len());
    let mut rigs = Vec::with_capacity(ann.frames.len());
    for (i, f) in ann.frames.iter().enumerate() {
        let own = f.calib.to_rig().with_context(|| format!("frame {i} calibration"))?;
        let rig = match &calib {
            Some(c) if c.len() != own.len() => bail!(
                "calibration has {} cameras but frame {i} of the ground truth has {}",
                c.len(),
                own.len()
            ),
            Some(c) => c.clone(),
            None => own,
        };
        let gts = f
            .objects
            .iter()
            .map(|o| o.to_box())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("frame {i} objects"))?;
        frames.push(EvalFrame { gts, preds: Vec::new() });
        rigs.push(rig);
    }
    for (i, p) in preds.predictions.iter().enumerate() {
        let frame = frames
            .get_mut(p.frame)
            .with_context(|| format!("prediction {i} refers to frame {} of {}", p.frame, ann.frames.len()))?;
        frame.preds.push(ScoredBox {
            bbox: p.to_box().with_context(|| format!("prediction {i}"))?,
            score: p.score,
        });
    }
    Ok((frames, rigs))
}

fn summary_line(r: &MetricsReport) -> String {
    format!(
        "  {:<16} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>6} {:>6}\n",
        r.region.as_str(),
        r.nds,
        r.map,
        r.mate,
        r.mase,
        r.maoe,
        r.mave,
        r.maae,
        r.num_gt,
        r.num_pred
    )
}

pub fn run(args: EvaluateArgs) -> anyhow::Result<Outcome> {
    if args.precomputed {
        return precomputed(&args);
    }
    let (frames, rigs) = load_frames(&args)?;
    let cfg = EvalConfig::default();
    let mut human = format!(
        "  {:<16} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6}\n",
        "region", "NDS", "mAP", "mATE", "mASE", "mAOE", "mAVE", "mAAE", "gt", "pred"
    );
    let (report, csv) = if args.split {
        let split = evaluate_region_split(&frames, &rigs, &cfg)?;
        for r in split.regions() {
            human.push_str(&summary_line(r));
        }
        let csv = region_split_csv(&split);
        (serde_json::to_value(&split)?, csv)
    } else {
        let overall = evaluate(&frames, Some(&rigs), &cfg)?;
        human.push_str(&summary_line(&overall));
        let csv = report_csv(&[&overall]);
        (serde_json::to_value(&overall)?, csv)
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    if let Some(path) = &args.csv {
        write_text(path, &csv)?;
    }
    Outcome::ok(report, human)
}
