use nalgebra::Vector3;

use super::mlp::Mlp;
use crate::camgeo::CameraRig;
use crate::error::{Error, Result};
use crate::featcore::{sample_multiview, FeaturePyramid};

/// Latent vector of one object query.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectQuery {
    pub embedding: Vec<f64>,
}

impl ObjectQuery {
    pub fn new(embedding: Vec<f64>) -> Self {
        Self { embedding }
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }
}

/// Axis-aligned box used to denormalize reference points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBounds {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl SceneBounds {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if !(0..3).all(|a| max[a] > min[a] && min[a].is_finite() && max[a].is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scene bounds need positive extent, got {:?}..{:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

impl Default for SceneBounds {
    /// ±51.2 m around the ego vehicle, -5 m to 3 m vertically.
    fn default() -> Self {
        Self {
            min: Vector3::new(-51.2, -51.2, -5.0),
            max: Vector3::new(51.2, 51.2, 3.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet {
    pub queries: Vec<ObjectQuery>,
    pub bounds: SceneBounds,
}

impl QuerySet {
    pub fn new(queries: Vec<ObjectQuery>, bounds: SceneBounds) -> Result<Self> {
        let first = queries
            .first()
            .ok_or_else(|| Error::InvalidInput("a query set needs at least one query".into()))?;
        let dim = first.dim();
        for q in &queries {
            if q.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: q.dim(),
                    context: "query dimension",
                });
            }
            if !q.embedding.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric("query embedding is not finite".into()));
            }
        }
        Ok(Self { queries, bounds })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.queries[0].dim()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} produced a non-finite value")))
    }
}

/// `bounds.min + sigmoid(ref_net(q)) ⊙ (bounds.max - bounds.min)`.
pub fn decode_reference_point(q: &ObjectQuery, ref_net: &Mlp, bounds: &SceneBounds) -> Result<Vector3<f64>> {
    if ref_net.out_dim() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            actual: ref_net.out_dim(),
            context: "reference network output",
        });
    }
    let raw = ref_net.forward(&q.embedding);
    check_finite(&raw, "reference network")?;
    let ext = bounds.extent();
    Ok(Vector3::from_fn(|a, _| bounds.min[a] + sigmoid(raw[a]) * ext[a]))
}

/// Single-point multi-view aggregation in residual form: `q + f(c)`.
///
/// `f(c)` is the σ-normalized mean of all in-bounds samples; an invisible
/// reference point leaves the query unchanged.
pub fn baseline_aggregate(
    q: &ObjectQuery,
    reference: &Vector3<f64>,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    scales: &[[f64; 2]],
) -> ObjectQuery {
    let sample = sample_multiview(pyr, rig, reference, scales);
    // An invalid sample is all zeros; adding it unconditionally keeps the
    // arithmetic identical to a one-node graph with unit weight.
    let mut out = q.embedding.clone();
    for (o, f) in out.iter_mut().zip(&sample.feature) {
        *o += f;
    }
    ObjectQuery::new(out)
}

/// Per-query learnable 3D graph: reference point, K neighbor nodes and edge
/// weights. The adjacency is implicit: every node connects to the
/// reference point with weight `weights[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicGraph {
    pub reference: Vector3<f64>,
    pub offsets: Vec<Vector3<f64>>,
    pub nodes: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    /// Node features; empty until [`node_features`] has been run.
    pub features: Vec<Vec<f64>>,
}

impl DynamicGraph {
    /// Graph with the given nodes and weights, offsets relative to `reference`.
    pub fn from_offsets(reference: Vector3<f64>, offsets: Vec<Vector3<f64>>, weights: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidInput("a graph needs at least one node".into()));
        }
        if offsets.len() != weights.len() {
            return Err(Error::Dimension {
                expected: offsets.len(),
                actual: weights.len(),
                context: "edge weights",
            });
        }
        let nodes = offsets.iter().map(|d| reference + d).collect();
        Ok(Self {
            reference,
            offsets,
            nodes,
            weights,
            features: Vec::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Default bound on neighbor offsets, in meters.
pub const DEFAULT_OFFSET_SCALE: f64 = 2.0;

/// Predicts K neighbor nodes around `reference` and their edge weights.
///
/// Offsets are `offset_scale · tanh(offset_net(q))` reshaped to `K × 3`;
/// weights are `sigmoid(weight_net(q))`.
pub fn build_graph(
    q: &ObjectQuery,
    reference: &Vector3<f64>,
    offset_net: &Mlp,
    weight_net: &Mlp,
    k: usize,
    offset_scale: f64,
) -> Result<DynamicGraph> {
    if k == 0 {
        return Err(Error::InvalidInput("neighbor count must be at least 1".into()));
    }
    if offset_net.out_dim() != 3 * k {
        return Err(Error::Dimension {
            expected: 3 * k,
            actual: offset_net.out_dim(),
            context: "offset network output",
        });
    }
    if weight_net.out_dim() != k {
        return Err(Error::Dimension {
            expected: k,
            actual: weight_net.out_dim(),
            context: "weight network output",
        });
    }
    let raw_offsets = offset_net.forward(&q.embedding);
    check_finite(&raw_offsets, "offset network")?;
    let raw_weights = weight_net.forward(&q.embedding);
    check_finite(&raw_weights, "weight network")?;
    let offsets = raw_offsets
        .chunks_exact(3)
        .map(|d| Vector3::new(d[0].tanh(), d[1].tanh(), d[2].tanh()) * offset_scale)
        .collect();
    let weights = raw_weights.into_iter().map(sigmoid).collect();
    DynamicGraph::from_offsets(*reference, offsets, weights)
}

/// Samples every node of the graph through all cameras and levels.
///
/// Invisible nodes get a zero feature.
pub fn node_features(
    g: &DynamicGraph,
    pyr: &FeaturePyramid,
    rig: &CameraRig,
    scales: &[[f64; 2]],
) -> Vec<Vec<f64>> {
    g.nodes
        .iter()
        .map(|node| sample_multiview(pyr, rig, node, scales).feature)
        .collect()
}

/// `q + Σ_j w_j · x_j`, summed in node order.
///
/// # Panics
///
/// Panics if the graph's features have not been computed.
pub fn propagate(q: &ObjectQuery, g: &DynamicGraph) -> ObjectQuery {
    assert_eq!(
        g.features.len(),
        g.weights.len(),
        "node features must be computed before propagation"
    );
    let mut out = q.embedding.clone();
    for (x, w) in g.features.iter().zip(&g.weights) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi * w;
        }
    }
    ObjectQuery::new(out)
}
