use std::fmt::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::bail;
use clap::Args;
use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use mvdet_core::dgfa::{
    decoder_forward, node_features, output_checksum, seeded_queries, AggregationMode, Decoder, DecoderConfig,
    DynamicGraph, SceneBounds,
};
use mvdet_core::synth::{derive_seed, gen_rig, render_noise_pyramid, CameraSpec, RigStyle};
use mvdet_core::{seeded_rng, CameraRig, FeaturePyramid};

use crate::output::{write_json, Outcome};

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 900)]
    queries: usize,
    #[arg(long, default_value_t = 16)]
    neighbors: usize,
    #[arg(long, default_value_t = 6)]
    cameras: usize,
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = 256)]
    channels: usize,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    /// Timed repetitions of each measurement.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Repetitions of the sampling measurement; defaults to 4 × `--repeats`.
    #[arg(long)]
    sampling_repeats: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Latency {
    median_ms: f64,
    p95_ms: f64,
    min_ms: f64,
}

#[derive(Serialize)]
struct Sampling {
    neighbors: usize,
    compare_neighbors: usize,
    median_ms: f64,
    compare_median_ms: f64,
    /// Sampling time with `compare_neighbors` nodes over time with `neighbors` nodes.
    ratio: f64,
}

#[derive(Serialize)]
struct BenchReport {
    queries: usize,
    neighbors: usize,
    cameras: usize,
    levels: usize,
    channels: usize,
    layers: usize,
    threads: usize,
    repeats: usize,
    decoder: Latency,
    queries_per_second: f64,
    sampling: Sampling,
    checksum: String,
}

fn bench_rig(cameras: usize) -> anyhow::Result<CameraRig> {
    Ok(match cameras {
        0 => bail!("need at least one camera"),
        1 => gen_rig(&RigStyle::Single)?,
        6 => gen_rig(&RigStyle::NuScenesLike)?,
        n => {
            let step = 360.0 / n as f64;
            let hfov = (step + 10.0).min(120.0);
            let specs = (0..n)
                .map(|i| CameraSpec::on_circle(&format!("CAM_{i}"), i as f64 * step, hfov))
                .collect();
            gen_rig(&RigStyle::Custom(specs))?
        }
    })
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn latency(mut ms: Vec<f64>) -> Latency {
    ms.sort_by(f64::total_cmp);
    Latency {
        median_ms: percentile(&ms, 0.5),
        p95_ms: percentile(&ms, 0.95),
        min_ms: ms[0],
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Graphs with `k` nodes whose offsets are a prefix of the `2k`-node graphs,
/// so both sizes sample the same points.
fn sampling_graphs(count: usize, k: usize, seed: u64, offset_scale: f64) -> anyhow::Result<(Vec<DynamicGraph>, Vec<DynamicGraph>)> {
    let mut rng = seeded_rng(seed);
    let mut small = Vec::with_capacity(count);
    let mut large = Vec::with_capacity(count);
    for _ in 0..count {
        let az: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let range: f64 = rng.gen_range(8.0..40.0);
        let reference = Vector3::new(range * az.cos(), range * az.sin(), rng.gen_range(-1.0..2.0));
        let offsets: Vec<Vector3<f64>> = (0..2 * k)
            .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-offset_scale..offset_scale)))
            .collect();
        small.push(DynamicGraph::from_offsets(reference, offsets[..k].to_vec(), vec![1.0; k])?);
        large.push(DynamicGraph::from_offsets(reference, offsets, vec![1.0; 2 * k])?);
    }
    Ok((small, large))
}

fn time_sampling(graphs: &[DynamicGraph], pyr: &FeaturePyramid, rig: &CameraRig) -> f64 {
    let start = Instant::now();
    let features: Vec<Vec<Vec<f64>>> = graphs.par_iter().map(|g| node_features(g, pyr, rig, &[])).collect();
    let ms = start.elapsed().as_secs_f64() * 1e3;
    std::hint::black_box(features);
    ms
}

pub fn run(args: BenchArgs) -> anyhow::Result<Outcome> {
    if args.repeats == 0 || args.queries == 0 || args.levels == 0 {
        bail!("--repeats, --queries and --levels must be positive");
    }
    let rig = bench_rig(args.cameras)?;
    let strides: Vec<u32> = (0..args.levels).map(|l| 8u32 << l).collect();
    let pyr = render_noise_pyramid(&rig, &strides, args.channels, derive_seed(args.seed, 1))?;
    let config = DecoderConfig {
        channels: args.channels,
        neighbors: args.neighbors,
        num_layers: args.layers,
        ..DecoderConfig::default()
    };
    let offset_scale = config.offset_scale;
    let decoder = Decoder::seeded(config, &mut seeded_rng(derive_seed(args.seed, 2)))?;
    let qs = seeded_queries(
        args.queries,
        args.channels,
        SceneBounds::default(),
        &mut seeded_rng(derive_seed(args.seed, 3)),
    )?;

    // Warm-up pass, which also provides the determinism checksum.
    let output = decoder_forward(&qs, &decoder, &pyr, &rig, &[], AggregationMode::Dgfa)?;
    let checksum = output_checksum(&output);
    let mut passes = Vec::with_capacity(args.repeats);
    for _ in 0..args.repeats {
        let start = Instant::now();
        let out = decoder_forward(&qs, &decoder, &pyr, &rig, &[], AggregationMode::Dgfa)?;
        passes.push(start.elapsed().as_secs_f64() * 1e3);
        if output_checksum(&out) != checksum {
            bail!("decoder output changed between identical passes");
        }
    }
    let decoder_latency = latency(passes);

    let (small, large) = sampling_graphs(args.queries, args.neighbors, derive_seed(args.seed, 4), offset_scale)?;
    time_sampling(&small, &pyr, &rig);
    time_sampling(&large, &pyr, &rig);
    let rounds = args.sampling_repeats.unwrap_or(4 * args.repeats).max(1);
    let (mut t_small, mut t_large) = (Vec::with_capacity(rounds), Vec::with_capacity(rounds));
    for _ in 0..rounds {
        t_small.push(time_sampling(&small, &pyr, &rig));
        t_large.push(time_sampling(&large, &pyr, &rig));
    }
    let (m_small, m_large) = (median(t_small), median(t_large));

    let report = BenchReport {
        queries: args.queries,
        neighbors: args.neighbors,
        cameras: rig.len(),
        levels: args.levels,
        channels: args.channels,
        layers: args.layers,
        threads: rayon::current_num_threads(),
        repeats: args.repeats,
        queries_per_second: args.queries as f64 / (decoder_latency.median_ms / 1e3),
        decoder: decoder_latency,
        sampling: Sampling {
            neighbors: args.neighbors,
            compare_neighbors: 2 * args.neighbors,
            median_ms: m_small,
            compare_median_ms: m_large,
            ratio: m_large / m_small,
        },
        checksum: format!("{checksum:016x}"),
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }

    let mut human = String::new();
    let _ = writeln!(
        human,
        "{} queries, {} neighbors, {} cameras, {} levels, {} channels, {} layers on {} threads",
        report.queries, report.neighbors, report.cameras, report.levels, report.channels, report.layers, report.threads
    );
    let _ = writeln!(
        human,
        "decoder pass   median {:.2} ms  p95 {:.2} ms  min {:.2} ms  ({:.0} queries/s)",
        report.decoder.median_ms, report.decoder.p95_ms, report.decoder.min_ms, report.queries_per_second
    );
    let s = &report.sampling;
    let _ = writeln!(
        human,
        "node sampling  K={}: {:.2} ms  K={}: {:.2} ms  ratio {:.3}",
        s.neighbors, s.median_ms, s.compare_neighbors, s.compare_median_ms, s.ratio
    );
    let _ = writeln!(human, "checksum {}", report.checksum);
    Outcome::ok(report, human)
}
