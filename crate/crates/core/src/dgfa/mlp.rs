use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer `y = act(W x + b)` with `W` stored row-major `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config("dense layer dimensions must be positive".into()));
        }
        if weight.len() != in_dim * out_dim {
            return Err(Error::Dimension {
                expected: in_dim * out_dim,
                actual: weight.len(),
                context: "dense weight",
            });
        }
        if bias.len() != out_dim {
            return Err(Error::Dimension {
                expected: out_dim,
                actual: bias.len(),
                context: "dense bias",
            });
        }
        if !weight.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::Numeric("dense layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Self::new(in_dim, out_dim, vec![0.0; in_dim * out_dim], vec![0.0; out_dim], activation)
    }

    /// Uniform `(-1/√fan_in, 1/√fan_in)` initialization for weights and biases.
    pub fn seeded(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<_>>();
        let weight = draw(in_dim * out_dim);
        let bias = draw(out_dim);
        Self::new(in_dim, out_dim, weight, bias, activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Pre-activation `W x + b`, accumulated in input order.
    pub fn linear(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.linear(x);
        if self.activation == Activation::Relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        y
    }

    /// Gradient w.r.t. the input given the gradient w.r.t. the pre-activation.
    fn backward_linear(&self, grad_pre: &[f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.in_dim];
        for (row, g) in self.weight.chunks_exact(self.in_dim).zip(grad_pre) {
            for (gxi, w) in gx.iter_mut().zip(row) {
                *gxi += g * w;
            }
        }
        gx
    }
}

/// Stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl MlpTrace {
    /// Which ReLU units were active, layer by layer.
    pub fn relu_pattern(&self, mlp: &Mlp) -> Vec<bool> {
        mlp.layers
            .iter()
            .zip(&self.pre_activations)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, pre)| pre.iter().map(|v| *v > 0.0))
            .collect()
    }
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension {
                    expected: pair[0].out_dim,
                    actual: pair[1].in_dim,
                    context: "adjacent MLP layers",
                });
            }
        }
        Ok(Self { layers })
    }

    /// Builds an MLP over `sizes` with ReLU hidden layers and a linear output.
    pub fn seeded(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Self::build(sizes, |i, o, act| Dense::seeded(i, o, act, rng))
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, Dense::zeros)
    }

    fn build(sizes: &[usize], mut make: impl FnMut(usize, usize, Activation) -> Result<Dense>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("MLP sizes need input and output".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Relu };
                make(w[0], w[1], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64]) -> MlpTrace {
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let pre = layer.linear(&h);
            h = match layer.activation {
                Activation::Relu => pre.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => pre.clone(),
            };
            pre_activations.push(pre);
        }
        MlpTrace {
            pre_activations,
            output: h,
        }
    }

    /// Vector-Jacobian product: gradient w.r.t. the input given the gradient
    /// w.r.t. the output of the traced pass.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64]) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for (layer, pre) in self.layers.iter().zip(&trace.pre_activations).rev() {
            if layer.activation == Activation::Relu {
                for (gi, p) in g.iter_mut().zip(pre) {
                    if *p <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            g = layer.backward_linear(&g);
        }
        g
    }
}
