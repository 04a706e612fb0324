use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rayon::prelude::*;

use super::attention::MultiHeadAttention;
use super::graph::{
    baseline_aggregate, build_graph, decode_reference_point, node_features, propagate, sigmoid,
    DynamicGraph, ObjectQuery, QuerySet, SceneBounds, DEFAULT_OFFSET_SCALE,
};
use super::mlp::{Activation, Dense, Mlp};
use crate::camgeo::{box_corners, Box3D, CameraRig};
use crate::error::{Error, Result};
use crate::featcore::FeaturePyramid;

/// Width of the box regression head: log sizes (3), sin/cos yaw, velocity (2).
pub const REG_OUTPUTS: usize = 7;

/// Bias that drives a sigmoid to exactly 1.0 in double precision.
const SATURATING_BIAS: f64 = 64.0;

/// How a decoder layer gathers image features for a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggregationMode {
    /// One sample at the reference point.
    Baseline,
    /// Reference point plus the 8 corners of the currently decoded box, unit weights.
    FixedMultiPoint,
    /// Learned K-node dynamic graph.
    Dgfa,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    pub channels: usize,
    pub heads: usize,
    pub neighbors: usize,
    pub offset_scale: f64,
    pub num_classes: usize,
    pub num_layers: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            channels: 256,
            heads: 8,
            neighbors: 16,
            offset_scale: DEFAULT_OFFSET_SCALE,
            num_classes: 10,
            num_layers: 6,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.neighbors == 0 || self.num_classes == 0 || self.num_layers == 0 {
            return Err(Error::Config(
                "channels, neighbors, classes and layers must all be positive".into(),
            ));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "{} channels are not divisible by {} heads",
                self.channels, self.heads
            )));
        }
        if !(self.offset_scale >= 0.0 && self.offset_scale.is_finite()) {
            return Err(Error::Config("offset scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Parameters of one refinement layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayer {
    /// `C → C → 3`
    pub ref_net: Mlp,
    /// `C → C → 3K`
    pub offset_net: Mlp,
    /// `C → K`
    pub weight_net: Mlp,
    pub attention: MultiHeadAttention,
    /// `C → 4C → C`
    pub ffn: Mlp,
}

impl DecoderLayer {
    pub fn seeded(config: &DecoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let c = config.channels;
        let k = config.neighbors;
        Ok(Self {
            ref_net: Mlp::seeded(&[c, c, 3], rng)?,
            offset_net: Mlp::seeded(&[c, c, 3 * k], rng)?,
            weight_net: Mlp::seeded(&[c, k], rng)?,
            attention: MultiHeadAttention::seeded(c, config.heads, rng)?,
            ffn: Mlp::seeded(&[c, 4 * c, c], rng)?,
        })
    }

    pub fn zeros(config: &DecoderConfig) -> Result<Self> {
        let c = config.channels;
        let k = config.neighbors;
        Ok(Self {
            ref_net: Mlp::zeros(&[c, c, 3])?,
            offset_net: Mlp::zeros(&[c, c, 3 * k])?,
            weight_net: Mlp::zeros(&[c, k])?,
            attention: MultiHeadAttention::zeros(c, config.heads)?,
            ffn: Mlp::zeros(&[c, 4 * c, c])?,
        })
    }

    pub fn neighbors(&self) -> usize {
        self.weight_net.out_dim()
    }

    pub fn validate(&self, config: &DecoderConfig) -> Result<()> {
        let c = config.channels;
        let k = config.neighbors;
        let checks: [(&Mlp, usize, usize, &'static str); 4] = [
            (&self.ref_net, c, 3, "reference network"),
            (&self.offset_net, c, 3 * k, "offset network"),
            (&self.weight_net, c, k, "weight network"),
            (&self.ffn, c, c, "feed-forward network"),
        ];
        for (mlp, input, output, context) in checks {
            if mlp.in_dim() != input {
                return Err(Error::Dimension {
                    expected: input,
                    actual: mlp.in_dim(),
                    context,
                });
            }
            if mlp.out_dim() != output {
                return Err(Error::Dimension {
                    expected: output,
                    actual: mlp.out_dim(),
                    context,
                });
            }
        }
        if self.attention.dim() != c || self.attention.heads() != config.heads {
            return Err(Error::Config("attention shape does not match the decoder config".into()));
        }
        Ok(())
    }
}

/// Classification and box regression heads applied to refined queries.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionHeads {
    /// `C → classes`, per-class sigmoid logits.
    pub cls: Mlp,
    /// `C → 7`: log w, log l, log h, sin yaw, cos yaw, vx, vy.
    pub reg: Mlp,
}

impl DetectionHeads {
    pub fn seeded(config: &DecoderConfig, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            cls: Mlp::seeded(&[config.channels, config.num_classes], rng)?,
            reg: Mlp::seeded(&[config.channels, REG_OUTPUTS], rng)?,
        })
    }

    pub fn zeros(config: &DecoderConfig) -> Result<Self> {
        Ok(Self {
            cls: Mlp::zeros(&[config.channels, config.num_classes])?,
            reg: Mlp::zeros(&[config.channels, REG_OUTPUTS])?,
        })
    }

    /// Box decoded from a query around a given center.
    pub fn decode_box(&self, q: &ObjectQuery, center: Vector3<f64>) -> Result<Box3D> {
        let raw = self.reg.forward(&q.embedding);
        if !raw.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("regression head produced a non-finite value".into()));
        }
        let size = Vector3::new(raw[0], raw[1], raw[2]).map(|v| v.clamp(-4.0, 4.0).exp());
        let yaw = raw[3].atan2(raw[4]);
        Ok(Box3D::new(center, size, yaw)?.with_velocity(Vector2::new(raw[5], raw[6])))
    }

    pub fn class_probs(&self, q: &ObjectQuery) -> Vec<f64> {
        self.cls.forward(&q.embedding).into_iter().map(sigmoid).collect()
    }
}

/// Decoder layer stack plus output heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub layers: Vec<DecoderLayer>,
    pub heads: DetectionHeads,
}

impl Decoder {
    pub fn new(config: DecoderConfig, layers: Vec<DecoderLayer>, heads: DetectionHeads) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers {
            return Err(Error::Dimension {
                expected: config.num_layers,
                actual: layers.len(),
                context: "decoder layers",
            });
        }
        for layer in &layers {
            layer.validate(&config)?;
        }
        if heads.cls.in_dim() != config.channels
            || heads.cls.out_dim() != config.num_classes
            || heads.reg.in_dim() != config.channels
            || heads.reg.out_dim() != REG_OUTPUTS
        {
            return Err(Error::Config("detection head shapes do not match the decoder config".into()));
        }
        Ok(Self { config, layers, heads })
    }

    /// Seeded uniform `±1/√fan_in` initialization of every parameter.
    pub fn seeded(config: DecoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.num_layers)
            .map(|_| DecoderLayer::seeded(&config, rng))
            .collect::<Result<Vec<_>>>()?;
        let heads = DetectionHeads::seeded(&config, rng)?;
        Self::new(config, layers, heads)
    }

    pub fn zeros(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.num_layers)
            .map(|_| DecoderLayer::zeros(&config))
            .collect::<Result<Vec<_>>>()?;
        let heads = DetectionHeads::zeros(&config)?;
        Self::new(config, layers, heads)
    }

    /// Copy whose graph has one node at the reference point with unit weight.
    ///
    /// Under [`AggregationMode::Dgfa`] this reproduces the single-point
    /// baseline exactly.
    pub fn with_degenerate_graph(&self) -> Result<Self> {
        let c = self.config.channels;
        let config = DecoderConfig {
            neighbors: 1,
            ..self.config.clone()
        };
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                Ok(DecoderLayer {
                    offset_net: Mlp::zeros(&[c, c, 3])?,
                    weight_net: Mlp::new(vec![Dense::new(
                        c,
                        1,
                        vec![0.0; c],
                        vec![SATURATING_BIAS],
                        Activation::Identity,
                    )?])?,
                    ..layer.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(config, layers, self.heads.clone())
    }

    /// Keeps only the first `n` layers.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.layers.len() {
            return Err(Error::Config(format!(
                "cannot run {n} layers of a {}-layer decoder",
                self.layers.len()
            )));
        }
        let config = DecoderConfig {
            num_layers: n,
            ..self.config.clone()
        };
        Self::new(config, self.layers[..n].to_vec(), self.heads.clone())
    }
}

/// Initial learned query embeddings, drawn from the same uniform scheme.
pub fn seeded_queries(count: usize, dim: usize, bounds: SceneBounds, rng: &mut impl Rng) -> Result<QuerySet> {
    let bound = 1.0 / (dim as f64).sqrt();
    let queries = (0..count)
        .map(|_| ObjectQuery::new((0..dim).map(|_| rng.gen_range(-bound..bound)).collect()))
        .collect();
    QuerySet::new(queries, bounds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderOutput {
    pub queries: QuerySet,
    /// `reference_points[layer][query]`
    pub reference_points: Vec<Vec<Vector3<f64>>>,
}

/// Runs the layer stack.
///
/// Each layer applies self-attention, decodes reference points, aggregates
/// image features according to `mode` and finishes with a residual
/// feed-forward block. Queries are processed in parallel; every query's
/// arithmetic is sequential, so results do not depend on the thread count.
pub fn decoder_forward(
    qs: &QuerySet,
    decoder: &Decoder,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    scales: &[[f64; 2]],
    mode: AggregationMode,
) -> Result<DecoderOutput> {
    let c = decoder.config.channels;
    if qs.dim() != c {
        return Err(Error::Dimension {
            expected: c,
            actual: qs.dim(),
            context: "query dimension",
        });
    }
    if pyr.channels() != c {
        return Err(Error::Dimension {
            expected: c,
            actual: pyr.channels(),
            context: "pyramid channels",
        });
    }
    if pyr.camera_count() != rig.len() {
        return Err(Error::Dimension {
            expected: rig.len(),
            actual: pyr.camera_count(),
            context: "pyramid cameras",
        });
    }
    if !scales.is_empty() && scales.len() != rig.len() {
        return Err(Error::Dimension {
            expected: rig.len(),
            actual: scales.len(),
            context: "image scales",
        });
    }

    let bounds = qs.bounds;
    let mut queries = qs.queries.clone();
    let mut reference_points = Vec::with_capacity(decoder.layers.len());
    for layer in &decoder.layers {
        let attended = layer.attention.forward(&queries)?;
        let step: Vec<(ObjectQuery, Vector3<f64>)> = attended
            .par_iter()
            .map(|q| {
                let reference = decode_reference_point(q, &layer.ref_net, &bounds)?;
                let aggregated = aggregate(q, &reference, layer, decoder, pyr, rig, scales, mode)?;
                let ffn = layer.ffn.forward(&aggregated.embedding);
                let embedding = aggregated.embedding.iter().zip(ffn).map(|(a, f)| a + f).collect();
                Ok((ObjectQuery::new(embedding), reference))
            })
            .collect::<Result<Vec<_>>>()?;
        let (next, refs): (Vec<_>, Vec<_>) = step.into_iter().unzip();
        queries = next;
        reference_points.push(refs);
    }
    Ok(DecoderOutput {
        queries: QuerySet::new(queries, bounds)?,
        reference_points,
    })
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    q: &ObjectQuery,
    reference: &Vector3<f64>,
    layer: &DecoderLayer,
    decoder: &Decoder,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    scales: &[[f64; 2]],
    mode: AggregationMode,
) -> Result<ObjectQuery> {
    let mut graph = match mode {
        AggregationMode::Baseline => return Ok(baseline_aggregate(q, reference, pyr, rig, scales)),
        AggregationMode::Dgfa => build_graph(
            q,
            reference,
            &layer.offset_net,
            &layer.weight_net,
            layer.neighbors(),
            decoder.config.offset_scale,
        )?,
        AggregationMode::FixedMultiPoint => {
            let b = decoder.heads.decode_box(q, *reference)?;
            let offsets = std::iter::once(Vector3::zeros())
                .chain(box_corners(&b).iter().map(|corner| corner - reference))
                .collect::<Vec<_>>();
            let weights = vec![1.0; offsets.len()];
            DynamicGraph::from_offsets(*reference, offsets, weights)?
        }
    };
    graph.features = node_features(&graph, pyr, rig, scales);
    Ok(propagate(q, &graph))
}

/// One decoded detection.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub bbox: Box3D,
    pub score: f64,
    pub class_probs: Vec<f64>,
}

/// Decodes boxes and class scores from refined queries.
///
/// Centers come from the last layer's reference network applied to the
/// refined query; the class is the arg-max of the per-class sigmoids.
pub fn predict(decoder: &Decoder, output: &DecoderOutput) -> Result<Vec<Prediction>> {
    let last = decoder
        .layers
        .last()
        .ok_or_else(|| Error::Config("decoder has no layers".into()))?;
    output
        .queries
        .queries
        .par_iter()
        .map(|q| {
            let center = decode_reference_point(q, &last.ref_net, &output.queries.bounds)?;
            let probs = decoder.heads.class_probs(q);
            let (class_id, score) = probs
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
            let bbox = decoder.heads.decode_box(q, center)?.with_class(class_id);
            Ok(Prediction {
                bbox,
                score,
                class_probs: probs,
            })
        })
        .collect()
}

/// FNV-1a hash of the bit patterns of all refined queries and reference
/// points; equal outputs hash equally.
pub fn output_checksum(output: &DecoderOutput) -> u64 {
    let values = output
        .queries
        .queries
        .iter()
        .flat_map(|q| q.embedding.iter().copied())
        .chain(output.reference_points.iter().flatten().flat_map(|p| p.iter().copied().collect::<Vec<_>>()));
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
