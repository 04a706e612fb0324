use mvdet_core::dgfa::{
    build_graph, decode_reference_point, decoder_forward, node_features, propagate, seeded_queries, AggregationMode,
    Decoder, DecoderConfig, DynamicGraph, Mlp, MultiHeadAttention, ObjectQuery, SceneBounds,
};
use mvdet_core::featcore::{sample_footprint, DEFAULT_STRIDES};
use mvdet_core::seeded_rng;
use mvdet_core::synth::{gen_rig, render_noise_pyramid, RigStyle};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::Rng;

fn config(neighbors: usize, layers: usize) -> DecoderConfig {
    DecoderConfig {
        channels: 8,
        heads: 2,
        neighbors,
        num_layers: layers,
        ..DecoderConfig::default()
    }
}

fn query(rng: &mut impl Rng, dim: usize, scale: f64) -> ObjectQuery {
    ObjectQuery::new((0..dim).map(|_| rng.gen_range(-scale..scale)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn degenerate_dgfa_is_baseline(seed: u64, queries in 1usize..12, layers in 1usize..4) {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let pyr = render_noise_pyramid(&rig, &DEFAULT_STRIDES, 8, seed).unwrap();
        let decoder = Decoder::seeded(config(4, layers), &mut seeded_rng(seed ^ 1)).unwrap();
        let qs = seeded_queries(queries, 8, SceneBounds::default(), &mut seeded_rng(seed ^ 2)).unwrap();
        let base = decoder_forward(&qs, &decoder, &pyr, &rig, &[], AggregationMode::Baseline).unwrap();
        let degenerate = decoder.with_degenerate_graph().unwrap();
        let dgfa = decoder_forward(&qs, &degenerate, &pyr, &rig, &[], AggregationMode::Dgfa).unwrap();
        prop_assert_eq!(base, dgfa);
    }

    #[test]
    fn zero_weights_leave_query_unchanged(seed: u64, k in 1usize..20) {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let pyr = render_noise_pyramid(&rig, &DEFAULT_STRIDES, 4, seed).unwrap();
        let mut rng = seeded_rng(seed);
        let q = query(&mut rng, 4, 1.0);
        let offsets = (0..k).map(|_| Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0)).collect();
        let mut g = DynamicGraph::from_offsets(Vector3::new(15.0, 3.0, 0.5), offsets, vec![0.0; k]).unwrap();
        g.features = node_features(&g, &pyr, &rig, &[]);
        prop_assert_eq!(propagate(&q, &g), q);
    }

    #[test]
    fn propagate_ignores_pixels_outside_support(seed: u64, k in 1usize..8, edits in 1usize..40) {
        let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
        let pyr = render_noise_pyramid(&rig, &DEFAULT_STRIDES, 4, seed).unwrap();
        let mut rng = seeded_rng(seed);
        let az: f64 = rng.gen_range(-3.1..3.1);
        let reference = Vector3::new(20.0 * az.cos(), 20.0 * az.sin(), 0.5);
        let offsets = (0..k).map(|_| Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0))).collect();
        let weights = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut g = DynamicGraph::from_offsets(reference, offsets, weights).unwrap();
        let q = query(&mut rng, 4, 1.0);
        g.features = node_features(&g, &pyr, &rig, &[]);
        let before = propagate(&q, &g);

        // Every pixel within one cell of a touched grid point may be read.
        let touched: Vec<_> = g.nodes.iter().flat_map(|n| sample_footprint(&pyr, &rig, n, &[])).collect();
        let mut edited = pyr.clone();
        let mut done = 0;
        while done < edits {
            let cam = rng.gen_range(0..rig.len());
            let l = rng.gen_range(0..DEFAULT_STRIDES.len());
            let level = &edited.levels(cam)[l];
            let (x, y) = (rng.gen_range(0..level.width()), rng.gen_range(0..level.height()));
            let near = touched.iter().any(|e| {
                e.camera == cam && e.level == l && x + 1 >= e.x0 && x <= e.x0 + 2 && y + 1 >= e.y0 && y <= e.y0 + 2
            });
            if near {
                continue;
            }
            let c = rng.gen_range(0..level.channels());
            edited.levels_mut(cam)[l].set(c, y, x, 1e3);
            done += 1;
        }
        g.features = node_features(&g, &edited, &rig, &[]);
        prop_assert_eq!(propagate(&q, &g), before);
    }

    #[test]
    fn attention_is_permutation_equivariant(seed: u64, n in 1usize..10, shift in 0usize..10) {
        let mut rng = seeded_rng(seed);
        let attn = MultiHeadAttention::seeded(8, 2, &mut rng).unwrap();
        let qs: Vec<ObjectQuery> = (0..n).map(|_| query(&mut rng, 8, 2.0)).collect();
        let out = attn.forward(&qs).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(shift % n);
        perm.swap(0, n - 1);
        let permuted: Vec<ObjectQuery> = perm.iter().map(|&i| qs[i].clone()).collect();
        let out_p = attn.forward(&permuted).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            for (a, b) in out_p[j].embedding.iter().zip(&out[i].embedding) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn reference_points_stay_in_bounds(seed: u64, scale in 0.1..1e3f64) {
        let mut rng = seeded_rng(seed);
        let net = Mlp::seeded(&[8, 8, 3], &mut rng).unwrap();
        let bounds = SceneBounds::new(Vector3::new(-10.0, -20.0, -3.0), Vector3::new(30.0, 5.0, 4.0)).unwrap();
        let q = query(&mut rng, 8, scale);
        let c = decode_reference_point(&q, &net, &bounds).unwrap();
        for a in 0..3 {
            prop_assert!(c[a] >= bounds.min[a] && c[a] <= bounds.max[a]);
        }
    }

    #[test]
    fn graph_nodes_within_offset_scale(seed: u64, k in 1usize..20, scale in 0.1..5.0f64) {
        let mut rng = seeded_rng(seed);
        let offset_net = Mlp::seeded(&[8, 8, 3 * k], &mut rng).unwrap();
        let weight_net = Mlp::seeded(&[8, k], &mut rng).unwrap();
        let q = query(&mut rng, 8, 3.0);
        let reference = Vector3::new(1.0, 2.0, 0.0);
        let g = build_graph(&q, &reference, &offset_net, &weight_net, k, scale).unwrap();
        prop_assert_eq!(g.node_count(), k);
        for (node, w) in g.nodes.iter().zip(&g.weights) {
            prop_assert!((node - reference).amax() <= scale);
            prop_assert!((0.0..=1.0).contains(w));
        }
    }
}

#[test]
fn decoder_output_independent_of_thread_count() {
    let rig = gen_rig(&RigStyle::NuScenesLike).unwrap();
    let pyr = render_noise_pyramid(&rig, &DEFAULT_STRIDES, 8, 3).unwrap();
    let decoder = Decoder::seeded(config(16, 2), &mut seeded_rng(4)).unwrap();
    let qs = seeded_queries(64, 8, SceneBounds::default(), &mut seeded_rng(5)).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| decoder_forward(&qs, &decoder, &pyr, &rig, &[], AggregationMode::Dgfa).unwrap())
    };
    let single = run(1);
    for threads in [2, 3, 8] {
        assert_eq!(run(threads), single);
    }
}
