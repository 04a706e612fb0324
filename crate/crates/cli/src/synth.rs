use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use mvdet_core::camgeo::classify_region;
use mvdet_core::dgfa::{save_bundle, seeded_queries, Decoder, DecoderConfig, ParamBundle, SceneBounds};
use mvdet_core::featcore::tensor::save_pyramid;
use mvdet_core::featcore::DEFAULT_STRIDES;
use mvdet_core::io::{AnnotationJson, CalibrationJson, FrameJson, ObjectJson};
use mvdet_core::synth::{derive_seed, generate_scene, object_depth, render_noise_pyramid, FieldKind, RigStyle, SceneConfig};
use mvdet_core::{seeded_rng, Region};

use crate::output::{write_json, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Style {
    NuscenesLike,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Field {
    Constant,
    Linear,
    Bilinear,
    Noise,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Style::NuscenesLike)]
    style: Style,
    #[arg(long)]
    seed: u64,
    /// Number of ground-truth objects.
    #[arg(long, default_value_t = 50)]
    objects: usize,
    #[arg(long, value_enum, default_value_t = Field::Bilinear)]
    field: Field,
    /// Feature channels, also the decoder width.
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// Object queries stored with the decoder parameters.
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 16)]
    neighbors: usize,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    #[arg(long, default_value_t = 8)]
    heads: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SynthReport {
    seed: u64,
    cameras: usize,
    objects: usize,
    overlapping: usize,
    non_overlapping: usize,
    invisible: usize,
    calib: PathBuf,
    annotations: PathBuf,
    pyramid: PathBuf,
    params: PathBuf,
}

pub fn run(args: SynthArgs) -> anyhow::Result<Outcome> {
    let style = match args.style {
        Style::NuscenesLike => RigStyle::NuScenesLike,
        Style::Single => RigStyle::Single,
    };
    let field = match args.field {
        Field::Constant => FieldKind::Constant,
        Field::Linear => FieldKind::Linear,
        Field::Bilinear | Field::Noise => FieldKind::Bilinear,
    };
    let mut scene = generate_scene(&SceneConfig {
        style,
        seed: args.seed,
        object_count: args.objects,
        field,
        channels: args.channels,
        ..SceneConfig::default()
    })?;
    if args.field == Field::Noise {
        scene.pyramid = render_noise_pyramid(&scene.rig, &DEFAULT_STRIDES, args.channels, derive_seed(args.seed, 3))?;
    }

    let calib = CalibrationJson::from_rig(&scene.rig);
    let objects = scene
        .objects
        .iter()
        .map(|b| ObjectJson::from_box(b, object_depth(b, &scene.rig)))
        .collect();
    let annotations = AnnotationJson {
        frames: vec![FrameJson {
            calib: calib.clone(),
            objects,
            image_sizes: None,
        }],
    };

    let config = DecoderConfig {
        channels: args.channels,
        heads: args.heads,
        neighbors: args.neighbors,
        num_layers: args.layers,
        ..DecoderConfig::default()
    };
    let decoder = Decoder::seeded(config, &mut seeded_rng(derive_seed(args.seed, 4)))?;
    let queries = seeded_queries(
        args.queries,
        args.channels,
        SceneBounds::default(),
        &mut seeded_rng(derive_seed(args.seed, 5)),
    )?;

    let calib_path = args.out.join("calib.json");
    let ann_path = args.out.join("annotations.json");
    write_json(&calib_path, &calib)?;
    write_json(&ann_path, &annotations)?;
    let ids: Vec<String> = calib.cameras.iter().map(|c| c.id.clone()).collect();
    let pyramid_path = save_pyramid(&scene.pyramid, &ids, &args.out.join("pyramid"))?;
    let params_path = save_bundle(&ParamBundle { decoder, queries }, &args.out.join("params"))?;

    let regions: Vec<Region> = scene.objects.iter().map(|b| classify_region(b, &scene.rig)).collect();
    let count = |r| regions.iter().filter(|x| **x == r).count();
    let report = SynthReport {
        seed: args.seed,
        cameras: scene.rig.len(),
        objects: scene.objects.len(),
        overlapping: count(Region::Overlapping),
        non_overlapping: count(Region::NonOverlapping),
        invisible: count(Region::Invisible),
        calib: calib_path,
        annotations: ann_path,
        pyramid: pyramid_path,
        params: params_path,
    };
    let human = format!(
        "scene seed {}: {} cameras, {} objects ({} overlapping, {} non-overlapping, {} invisible)\n\
         calibration  {}\nannotations  {}\npyramid      {}\nparameters   {}\n",
        report.seed,
        report.cameras,
        report.objects,
        report.overlapping,
        report.non_overlapping,
        report.invisible,
        report.calib.display(),
        report.annotations.display(),
        report.pyramid.display(),
        report.params.display(),
    );
    Outcome::ok(report, human)
}
