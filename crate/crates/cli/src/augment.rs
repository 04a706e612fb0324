use std::fmt::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use mvdet_core::augment::{sample_scale, AnnotatedFrame, ScaleMode, ScaleTransform};
use mvdet_core::io::AnnotationJson;
use mvdet_core::seeded_rng;
use mvdet_core::synth::derive_seed;

use crate::output::{read_json, write_json, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Vanilla,
    Di,
    Disentangled,
}

impl From<Mode> for ScaleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Vanilla => ScaleMode::Vanilla,
            Mode::Di => ScaleMode::DepthInvariant,
            Mode::Disentangled => ScaleMode::Disentangled,
        }
    }
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Annotation JSON to transform.
    #[arg(long)]
    input: PathBuf,
    /// Transformed annotation JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Di)]
    mode: Mode,
    /// Smallest resize factor.
    #[arg(long, default_value_t = 0.5)]
    min_scale: f64,
    /// Largest resize factor.
    #[arg(long, default_value_t = 1.5)]
    max_scale: f64,
    #[arg(long)]
    seed: u64,
    /// Write the per-frame scale log here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Serialize)]
struct FrameLog {
    frame: usize,
    r: f64,
    regression_mask: bool,
}

#[derive(Serialize)]
struct AugmentLog {
    seed: u64,
    mode: &'static str,
    min_scale: f64,
    max_scale: f64,
    frames: Vec<FrameLog>,
}

pub fn run(args: AugmentArgs) -> anyhow::Result<Outcome> {
    let input: AnnotationJson = read_json(&args.input)?;
    let mode = ScaleMode::from(args.mode);
    let mut frames = Vec::with_capacity(input.frames.len());
    let mut log = Vec::with_capacity(input.frames.len());
    for (i, frame_json) in input.frames.iter().enumerate() {
        let frame = AnnotatedFrame::from_json(frame_json)?;
        // One generator per frame keeps each r independent of the others.
        let r = sample_scale(args.min_scale, args.max_scale, &mut seeded_rng(derive_seed(args.seed, i as u64)))?;
        let out = ScaleTransform::new(r, mode)?.apply(&frame)?;
        log.push(FrameLog {
            frame: i,
            r,
            regression_mask: out.regression_mask(),
        });
        frames.push(out.to_json()?);
    }
    write_json(&args.out, &AnnotationJson { frames })?;

    let report = AugmentLog {
        seed: args.seed,
        mode: mode.as_str(),
        min_scale: args.min_scale,
        max_scale: args.max_scale,
        frames: log,
    };
    if let Some(path) = &args.log {
        write_json(path, &report)?;
    }
    let mut human = format!("mode {} scale range [{}, {}]\n", report.mode, report.min_scale, report.max_scale);
    for f in &report.frames {
        let _ = writeln!(
            human,
            "  frame {:>4}  r = {:.6}{}",
            f.frame,
            f.r,
            if f.regression_mask { "" } else { "  (box regression off)" }
        );
    }
    Outcome::ok(report, human)
}
