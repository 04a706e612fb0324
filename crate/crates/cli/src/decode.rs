use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use mvdet_core::dgfa::{decoder_forward, load_bundle, output_checksum, predict, AggregationMode};
use mvdet_core::featcore::tensor::load_pyramid;
use mvdet_core::io::{CalibrationJson, PredictionJson, PredictionsJson};

use crate::output::{read_json, write_json, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Baseline,
    FixedMultiPoint,
    Dgfa,
}

impl Mode {
    fn aggregation(self) -> AggregationMode {
        match self {
            Mode::Baseline => AggregationMode::Baseline,
            Mode::FixedMultiPoint => AggregationMode::FixedMultiPoint,
            Mode::Dgfa => AggregationMode::Dgfa,
        }
    }
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Pyramid manifest written by `synth`.
    #[arg(long)]
    pyramid: PathBuf,
    #[arg(long)]
    calib: PathBuf,
    /// Parameter bundle manifest.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Dgfa)]
    mode: Mode,
    /// Expected graph size; must match the parameter bundle.
    #[arg(long)]
    neighbors: Option<usize>,
    /// Run only the first N decoder layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Replace every graph with a single zero-offset node of weight 1.
    #[arg(long)]
    degenerate: bool,
    /// Prediction JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct DecodeReport {
    mode: &'static str,
    layers: usize,
    neighbors: usize,
    predictions: usize,
    checksum: String,
    out: PathBuf,
}

pub fn run(args: DecodeArgs) -> anyhow::Result<Outcome> {
    let calib: CalibrationJson = read_json(&args.calib)?;
    let rig = calib.to_rig()?;
    let (pyramid, ids) = load_pyramid(&args.pyramid).with_context(|| format!("loading {}", args.pyramid.display()))?;
    let calib_ids: Vec<&str> = rig.cameras().iter().map(|c| c.id.as_str()).collect();
    if ids.iter().map(String::as_str).ne(calib_ids.iter().copied()) {
        bail!("pyramid cameras {ids:?} do not match calibration cameras {calib_ids:?}");
    }
    let bundle = load_bundle(&args.params).with_context(|| format!("loading {}", args.params.display()))?;

    let mut decoder = bundle.decoder;
    if let Some(k) = args.neighbors {
        if k != decoder.config.neighbors {
            bail!(
                "--neighbors {k} does not match the parameter bundle ({} neighbors)",
                decoder.config.neighbors
            );
        }
    }
    if let Some(n) = args.layers {
        decoder = decoder.truncated(n)?;
    }
    if args.degenerate {
        decoder = decoder.with_degenerate_graph()?;
    }

    let output = decoder_forward(&bundle.queries, &decoder, &pyramid, &rig, &[], args.mode.aggregation())?;
    let predictions = predict(&decoder, &output)?;
    let json = PredictionsJson {
        predictions: predictions.iter().map(|p| PredictionJson::from_box(&p.bbox, p.score)).collect(),
    };
    write_json(&args.out, &json)?;

    let report = DecodeReport {
        mode: match args.mode {
            Mode::Baseline => "baseline",
            Mode::FixedMultiPoint => "fixed-multi-point",
            Mode::Dgfa => "dgfa",
        },
        layers: decoder.layers.len(),
        neighbors: decoder.config.neighbors,
        predictions: predictions.len(),
        checksum: format!("{:016x}", output_checksum(&output)),
        out: args.out,
    };
    let human = format!(
        "{} decoder, {} layers, {} neighbors: {} predictions (checksum {}) -> {}\n",
        report.mode,
        report.layers,
        report.neighbors,
        report.predictions,
        report.checksum,
        report.out.display()
    );
    Outcome::ok(report, human)
}
