//! Seeded fixtures shared by the criterion benchmarks.

use nalgebra::Vector3;
use rand::Rng;

use mvdet_core::dgfa::{seeded_queries, Decoder, DecoderConfig, DynamicGraph, QuerySet, SceneBounds};
use mvdet_core::featcore::DEFAULT_STRIDES;
use mvdet_core::synth::{derive_seed, gen_rig, render_noise_pyramid, RigStyle};
use mvdet_core::{seeded_rng, CameraRig, FeaturePyramid, Result};

pub struct Fixture {
    pub rig: CameraRig,
    pub pyramid: FeaturePyramid,
    pub decoder: Decoder,
    pub queries: QuerySet,
}

impl Fixture {
    /// Six-camera rig with noise features, seeded decoder weights and queries.
    pub fn new(config: DecoderConfig, queries: usize, seed: u64) -> Result<Self> {
        let rig = gen_rig(&RigStyle::NuScenesLike)?;
        let pyramid = render_noise_pyramid(&rig, &DEFAULT_STRIDES, config.channels, derive_seed(seed, 1))?;
        let channels = config.channels;
        let decoder = Decoder::seeded(config, &mut seeded_rng(derive_seed(seed, 2)))?;
        let queries = seeded_queries(queries, channels, SceneBounds::default(), &mut seeded_rng(derive_seed(seed, 3)))?;
        Ok(Self {
            rig,
            pyramid,
            decoder,
            queries,
        })
    }
}

/// `count` graphs of `k` unit-weight nodes around reference points 8 to
/// 40 m from the ego origin, offsets within `±offset_scale`.
pub fn sampling_graphs(count: usize, k: usize, offset_scale: f64, seed: u64) -> Result<Vec<DynamicGraph>> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let az: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let range: f64 = rng.gen_range(8.0..40.0);
            let reference = Vector3::new(range * az.cos(), range * az.sin(), rng.gen_range(-1.0..2.0));
            let offsets = (0..k)
                .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-offset_scale..offset_scale)))
                .collect();
            DynamicGraph::from_offsets(reference, offsets, vec![1.0; k])
        })
        .collect()
}
