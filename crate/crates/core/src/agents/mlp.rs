//! Small fully connected network with hand-rolled backpropagation.
//!
//! Hidden layers use the rectifier, the output layer is linear. The topology
//! is fixed at construction; gradients are verified against finite
//! differences in the test suite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

/// Dense network parameters. Weights are stored row-major per layer:
/// `weights[layer][out * fan_in + in]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-parameter gradients, same shapes as [`Mlp`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Intermediate values of one forward pass, kept for backprop.
pub struct ForwardCache {
    /// Post-activation values per layer; `activations[0]` is the input.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation values per non-input layer.
    pub preactivations: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-initialized network with the given layer sizes.
    pub fn new(layer_sizes: Vec<usize>, rng: &mut impl Rng) -> Mlp {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-1.0..1.0) * scale)
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            layer_sizes,
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), AgentError> {
        if input.len() != self.input_dim() {
            return Err(AgentError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward_cached(input)?.activations.pop().unwrap())
    }

    /// Forward pass retaining intermediates for [`Mlp::backward`].
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, AgentError> {
        self.check_input(input)?;
        let layers = self.weights.len();
        let mut activations = vec![input.to_vec()];
        let mut preactivations = Vec::with_capacity(layers);
        for layer in 0..layers {
            let fan_in = self.layer_sizes[layer];
            let fan_out = self.layer_sizes[layer + 1];
            let prev = &activations[layer];
            let mut z = self.biases[layer].clone();
            for out in 0..fan_out {
                let row = &self.weights[layer][out * fan_in..(out + 1) * fan_in];
                z[out] += row.iter().zip(prev.iter()).map(|(w, a)| w * a).sum::<f64>();
            }
            let a = if layer + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            preactivations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            preactivations,
        })
    }

    /// Backpropagate `dloss/doutput` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, dloss_doutput: &[f64]) -> Gradients {
        let layers = self.weights.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = dloss_doutput.to_vec();
        for layer in (0..layers).rev() {
            let fan_in = self.layer_sizes[layer];
            let fan_out = self.layer_sizes[layer + 1];
            if layer + 1 != layers {
                // Rectifier gate.
                for (d, z) in delta.iter_mut().zip(cache.preactivations[layer].iter()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let prev = &cache.activations[layer];
            for out in 0..fan_out {
                grads.biases[layer][out] += delta[out];
                let row = &mut grads.weights[layer][out * fan_in..(out + 1) * fan_in];
                for (slot, a) in row.iter_mut().zip(prev.iter()) {
                    *slot += delta[out] * a;
                }
            }
            if layer > 0 {
                let mut next_delta = vec![0.0; fan_in];
                for out in 0..fan_out {
                    let row = &self.weights[layer][out * fan_in..(out + 1) * fan_in];
                    for (nd, w) in next_delta.iter_mut().zip(row.iter()) {
                        *nd += delta[out] * w;
                    }
                }
                delta = next_delta;
            }
        }
        grads
    }
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Gradients {
        Gradients {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(other.weights.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(other.biases.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in w.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        let mut sq = 0.0;
        for w in self.weights.iter().chain(self.biases.iter()) {
            for x in w {
                sq += x * x;
            }
        }
        sq.sqrt()
    }

    /// Scale down so the global norm does not exceed `max_norm`.
    pub fn clip(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
    }

    pub fn iter_flat<'a>(&'a self) -> impl Iterator<Item = f64> + 'a {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
    }
}

/// Optimizer choice; SGD with norm clipping is the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First/second-moment state for Adam; unused for SGD.
pub struct Optimizer {
    pub kind: OptimizerKind,
    m: Option<Gradients>,
    v: Option<Gradients>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Optimizer {
        Optimizer {
            kind,
            m: None,
            v: None,
            t: 0,
        }
    }

    /// Apply one descent step of `grads` (already clipped by the caller).
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients, learning_rate: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                apply(mlp, grads, |g, _, _| -learning_rate * g);
            }
            OptimizerKind::Adam => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let m = self.m.get_or_insert_with(|| Gradients::zeros_like(mlp));
                let v = self.v.get_or_insert_with(|| Gradients::zeros_like(mlp));
                let t = self.t as i32;
                for (layer, g_layer) in grads.weights.iter().chain(grads.biases.iter()).enumerate() {
                    let (m_layer, v_layer) = if layer < grads.weights.len() {
                        (&mut m.weights[layer], &mut v.weights[layer])
                    } else {
                        let i = layer - grads.weights.len();
                        (&mut m.biases[i], &mut v.biases[i])
                    };
                    for (i, g) in g_layer.iter().enumerate() {
                        m_layer[i] = BETA1 * m_layer[i] + (1.0 - BETA1) * g;
                        v_layer[i] = BETA2 * v_layer[i] + (1.0 - BETA2) * g * g;
                    }
                }
                let m = self.m.as_ref().unwrap();
                let v = self.v.as_ref().unwrap();
                let bias1 = 1.0 - BETA1.powi(t);
                let bias2 = 1.0 - BETA2.powi(t);
                for layer in 0..mlp.weights.len() {
                    for i in 0..mlp.weights[layer].len() {
                        let mh = m.weights[layer][i] / bias1;
                        let vh = v.weights[layer][i] / bias2;
                        mlp.weights[layer][i] -= learning_rate * mh / (vh.sqrt() + EPS);
                    }
                    for i in 0..mlp.biases[layer].len() {
                        let mh = m.biases[layer][i] / bias1;
                        let vh = v.biases[layer][i] / bias2;
                        mlp.biases[layer][i] -= learning_rate * mh / (vh.sqrt() + EPS);
                    }
                }
            }
        }
    }
}

fn apply(mlp: &mut Mlp, grads: &Gradients, f: impl Fn(f64, usize, usize) -> f64) {
    for layer in 0..mlp.weights.len() {
        for i in 0..mlp.weights[layer].len() {
            mlp.weights[layer][i] += f(grads.weights[layer][i], layer, i);
        }
        for i in 0..mlp.biases[layer].len() {
            mlp.biases[layer][i] += f(grads.biases[layer][i], layer, i);
        }
    }
}
