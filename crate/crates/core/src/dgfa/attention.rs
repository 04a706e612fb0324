use rand::Rng;
use rayon::prelude::*;

use super::graph::ObjectQuery;
use super::mlp::{Activation, Dense};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product self-attention with a residual connection.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    heads: usize,
    pub query_proj: Dense,
    pub key_proj: Dense,
    pub value_proj: Dense,
    pub output_proj: Dense,
}

impl MultiHeadAttention {
    pub fn new(heads: usize, query_proj: Dense, key_proj: Dense, value_proj: Dense, output_proj: Dense) -> Result<Self> {
        let dim = query_proj.in_dim();
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "embedding dimension {dim} is not divisible by {heads} heads"
            )));
        }
        for proj in [&query_proj, &key_proj, &value_proj, &output_proj] {
            if proj.in_dim() != dim || proj.out_dim() != dim {
                return Err(Error::Config(format!(
                    "attention projections must be {dim}x{dim}, got {}x{}",
                    proj.out_dim(),
                    proj.in_dim()
                )));
            }
        }
        Ok(Self {
            heads,
            query_proj,
            key_proj,
            value_proj,
            output_proj,
        })
    }

    pub fn seeded(dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut proj = || Dense::seeded(dim, dim, Activation::Identity, rng);
        let (q, k, v, o) = (proj()?, proj()?, proj()?, proj()?);
        Self::new(heads, q, k, v, o)
    }

    pub fn zeros(dim: usize, heads: usize) -> Result<Self> {
        let proj = || Dense::zeros(dim, dim, Activation::Identity);
        Self::new(heads, proj()?, proj()?, proj()?, proj()?)
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn dim(&self) -> usize {
        self.query_proj.in_dim()
    }

    /// Returns `q_i + W_o · concat_h(softmax(Q_h K_hᵀ / √d_h) V_h)_i` for every query.
    ///
    /// Rows are computed independently, so the result does not depend on
    /// the thread count.
    pub fn forward(&self, queries: &[ObjectQuery]) -> Result<Vec<ObjectQuery>> {
        let dim = self.dim();
        if let Some(bad) = queries.iter().find(|q| q.dim() != dim) {
            return Err(Error::Config(format!(
                "query dimension {} does not match attention dimension {dim}",
                bad.dim()
            )));
        }
        let project = |proj: &Dense| -> Vec<Vec<f64>> {
            queries.par_iter().map(|q| proj.forward(&q.embedding)).collect()
        };
        let qs = project(&self.query_proj);
        let ks = project(&self.key_proj);
        let vs = project(&self.value_proj);
        let head_dim = dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let out = (0..queries.len())
            .into_par_iter()
            .map(|i| {
                let mut mixed = vec![0.0; dim];
                let mut scores = vec![0.0; queries.len()];
                for h in 0..self.heads {
                    let range = h * head_dim..(h + 1) * head_dim;
                    let qi = &qs[i][range.clone()];
                    for (s, kj) in scores.iter_mut().zip(&ks) {
                        *s = dot(qi, &kj[range.clone()]) * scale;
                    }
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        total += *s;
                    }
                    let slot = &mut mixed[range.clone()];
                    for (s, vj) in scores.iter().zip(&vs) {
                        let a = s / total;
                        for (m, v) in slot.iter_mut().zip(&vj[range.clone()]) {
                            *m += a * v;
                        }
                    }
                }
                let projected = self.output_proj.forward(&mixed);
                let embedding = queries[i]
                    .embedding
                    .iter()
                    .zip(projected)
                    .map(|(q, p)| q + p)
                    .collect();
                ObjectQuery::new(embedding)
            })
            .collect();
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
