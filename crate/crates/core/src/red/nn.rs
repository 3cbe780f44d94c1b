//! Neural-network parameterization of the pattern, trained with Adam on the
//! Euler-discretized objective.
//!
//! The net maps `t / T` through three tanh hidden layers of width 32 to a
//! scalar. With the logarithmic penalty the output passes through `exp`, which
//! keeps the pattern strictly positive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{GridConfig, ValidatedParams};

use super::euler::euler_objective;
use super::{finish_report, OptimizationReport, PenaltyKind, RedConfig};

pub const HIDDEN_WIDTH: usize = 32;
pub const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnSettings {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for NnSettings {
    fn default() -> Self {
        NnSettings {
            epochs: 500,
            learning_rate: 1e-3,
        }
    }
}

/// Dense layer, weights stored row-major as `[n_out][n_in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.n_out {
            let row = &self.weights[i * self.n_in..(i + 1) * self.n_in];
            out.push(self.biases[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub layers: Vec<Layer>,
    pub exp_output: bool,
    /// Multiplies `t` before the first layer.
    pub input_scale: f64,
}

impl MlpNetwork {
    fn shape() -> Vec<(usize, usize)> {
        let mut dims = vec![(1, HIDDEN_WIDTH)];
        dims.extend((1..HIDDEN_LAYERS).map(|_| (HIDDEN_WIDTH, HIDDEN_WIDTH)));
        dims.push((HIDDEN_WIDTH, 1));
        dims
    }

    pub fn zeros(horizon: f64, exp_output: bool) -> Self {
        MlpNetwork {
            layers: Self::shape().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect(),
            exp_output,
            input_scale: 1.0 / horizon,
        }
    }

    /// Weights and biases uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn random(horizon: f64, exp_output: bool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::zeros(horizon, exp_output);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.n_params(), "parameter vector length");
        let mut it = theta.iter();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = *it.next().unwrap();
            }
        }
    }

    /// Post-activation values of every layer, input included.
    fn trace(&self, t: f64) -> Vec<Vec<f64>> {
        let mut acts = vec![vec![t * self.input_scale]];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.n_out);
            layer.apply(acts.last().unwrap(), &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else if self.exp_output {
                z[0] = z[0].exp();
            }
            acts.push(z);
        }
        acts
    }

    pub fn output(&self, t: f64) -> f64 {
        self.trace(t).last().unwrap()[0]
    }

    pub fn outputs(&self, grid: &GridConfig) -> Vec<f64> {
        grid.times().map(|t| self.output(t)).collect()
    }

    /// Adds `upstream * d output(t) / d theta` into `grad`.
    fn accumulate(&self, t: f64, upstream: f64, grad: &mut [f64]) {
        let acts = self.trace(t);
        let out = acts.last().unwrap()[0];
        let mut delta = vec![if self.exp_output { upstream * out } else { upstream }];
        let mut offset = self.n_params();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.n_params();
            let input = &acts[i];
            let (gw, gb) = grad[offset..offset + layer.n_params()].split_at_mut(layer.weights.len());
            for (r, d) in delta.iter().enumerate() {
                gb[r] += d;
                for (c, x) in input.iter().enumerate() {
                    gw[r * layer.n_in + c] += d * x;
                }
            }
            if i == 0 {
                break;
            }
            // back through the weights, then through tanh of the previous layer
            delta = (0..layer.n_in)
                .map(|c| {
                    let s: f64 = delta.iter().enumerate().map(|(r, d)| d * layer.weights[r * layer.n_in + c]).sum();
                    s * (1.0 - input[c] * input[c])
                })
                .collect();
        }
    }

    /// `sum_k df[k] * d f(t_k) / d theta`.
    pub fn pullback(&self, grid: &GridConfig, df: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        for (t, d) in grid.times().zip(df) {
            if *d != 0.0 {
                self.accumulate(t, *d, &mut grad);
            }
        }
        grad
    }
}

pub fn nn_forward(net: &MlpNetwork, t: f64) -> f64 {
    net.output(t)
}

/// Gradient of the Euler objective with respect to the flattened net parameters.
pub fn nn_gradient(
    net: &MlpNetwork,
    params: &ValidatedParams,
    config: &RedConfig,
    grid: &GridConfig,
) -> Result<Vec<f64>> {
    let eg = euler_objective(params, &net.outputs(grid), config, grid)?;
    Ok(net.pullback(grid, &eg.gradient))
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            theta[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Trains a freshly seeded net. `objective_history` holds the Euler objective
/// before each epoch; the final figures are re-evaluated with the RK4 solvers
/// so they are comparable with the other methods. `converged` reports whether
/// the last epoch moved the objective by less than `tolerance` (relative).
pub fn nn_solve(params: &ValidatedParams, config: &RedConfig, grid: &GridConfig, seed: u64) -> Result<OptimizationReport> {
    config.validate(grid)?;
    let exp_output = config.penalty_kind == PenaltyKind::Logarithmic;
    let mut net = MlpNetwork::random(grid.horizon(), exp_output, seed);
    let mut theta = net.params();
    let mut adam = Adam::new(theta.len(), config.nn.learning_rate);
    let mut history = Vec::with_capacity(config.nn.epochs);
    for _ in 0..config.nn.epochs {
        let eg = euler_objective(params, &net.outputs(grid), config, grid)?;
        history.push(eg.objective);
        let grad = net.pullback(grid, &eg.gradient);
        adam.step(&mut theta, &grad);
        net.set_params(&theta);
    }
    let converged = match history.as_slice() {
        [.., a, b] => (b - a).abs() <= config.tolerance * b.abs().max(1.0),
        _ => false,
    };
    finish_report(params, net.outputs(grid), config, grid, history, config.nn.epochs, converged)
}
