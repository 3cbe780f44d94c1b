//! Euler–Maruyama simulation of the controlled dynamics, pathwise
//! statistics and seeded Monte Carlo.
//!
//! All time integrals use left endpoints (Itô convention). Path `i` of a
//! Monte Carlo run draws its noise from a generator seeded with
//! [`path_seed`]`(master_seed, i)`, and per-path results are reduced in index
//! order, so a summary is a pure function of its inputs and the master seed
//! regardless of how many worker threads were used.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{AffineControl, BetaMode, FeedbackPolicy};
use crate::error::{Error, Result};
use crate::model::{GridConfig, Pattern, ValidatedParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub v_path: Vec<f64>,
    pub y_path: Vec<f64>,
    /// Controls applied on `[t_k, t_{k+1})`, `k = 0..N_T`.
    pub alpha_path: Vec<f64>,
    pub beta_path: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_paths: usize,
    pub mean_primary_cost: f64,
    pub se_primary_cost: f64,
    pub mean_log_lr: f64,
    pub se_log_lr: f64,
    pub mean_blue_cost: f64,
    /// Sample mean of `exp(log L_T)`.
    pub mean_likelihood_ratio: f64,
    pub se_likelihood_ratio: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub beta_mode: BetaMode,
    /// Turns both noise sources off. Only meant for deterministic checks.
    pub noise: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            beta_mode: BetaMode::Optimal,
            noise: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct McOptions {
    pub sim: SimOptions,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of path `index` within a run seeded by `master_seed`.
pub fn path_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64(index.wrapping_add(0x6a09_e667_f3bc_c909)))
}

/// Node-level inputs precomputed once per policy.
struct Simulator {
    grid: GridConfig,
    controls: Vec<(AffineControl, AffineControl)>,
    sigma_b: f64,
    sigma_w: f64,
    v0: f64,
    y0: f64,
}

impl Simulator {
    fn new(policy: &FeedbackPolicy<'_>, grid: &GridConfig, opts: SimOptions) -> Result<Self> {
        if policy.grid() != *grid {
            return Err(Error::GridMismatch(
                "policy coefficients were solved on a different grid".into(),
            ));
        }
        let p = policy.params();
        let (sigma_b, sigma_w) = if opts.noise {
            (p.sigma_b, p.sigma_w)
        } else {
            (0.0, 0.0)
        };
        Ok(Simulator {
            grid: *grid,
            controls: policy.node_controls(opts.beta_mode),
            sigma_b,
            sigma_w,
            v0: p.v0,
            y0: p.y0,
        })
    }

    fn run(&self, seed: u64) -> Result<Trajectory> {
        let n = self.grid.n_steps();
        let h = self.grid.step();
        let sqrt_h = h.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v_path = Vec::with_capacity(n + 1);
        let mut y_path = Vec::with_capacity(n + 1);
        let mut alpha_path = Vec::with_capacity(n);
        let mut beta_path = Vec::with_capacity(n);
        let (mut v, mut y) = (self.v0, self.y0);
        v_path.push(v);
        y_path.push(y);
        for k in 0..n {
            let (a_ctl, b_ctl) = &self.controls[k];
            let alpha = a_ctl.apply(v, y);
            let beta = b_ctl.apply(v, y);
            let zb: f64 = StandardNormal.sample(&mut rng);
            let zw: f64 = StandardNormal.sample(&mut rng);
            let v_next = v + alpha * h + self.sigma_b * sqrt_h * zb;
            let y_next = y + (v + beta) * h + self.sigma_w * sqrt_h * zw;
            if !v_next.is_finite() || !y_next.is_finite() {
                return Err(Error::NonFiniteState {
                    node: k + 1,
                    component: if v_next.is_finite() { 1 } else { 0 },
                });
            }
            alpha_path.push(alpha);
            beta_path.push(beta);
            v = v_next;
            y = y_next;
            v_path.push(v);
            y_path.push(y);
        }
        Ok(Trajectory {
            times: self.grid.times().collect(),
            v_path,
            y_path,
            alpha_path,
            beta_path,
        })
    }
}

pub fn simulate_path(policy: &FeedbackPolicy<'_>, grid: &GridConfig, seed: u64) -> Result<Trajectory> {
    simulate_path_with(policy, grid, seed, SimOptions::default())
}

pub fn simulate_path_with(
    policy: &FeedbackPolicy<'_>,
    grid: &GridConfig,
    seed: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    Simulator::new(policy, grid, opts)?.run(seed)
}

fn check_trajectory(traj: &Trajectory) -> Result<GridConfig> {
    let n_nodes = traj.times.len();
    if n_nodes < 3
        || traj.v_path.len() != n_nodes
        || traj.y_path.len() != n_nodes
        || traj.alpha_path.len() != n_nodes - 1
        || traj.beta_path.len() != n_nodes - 1
    {
        return Err(Error::GridMismatch("inconsistent trajectory lengths".into()));
    }
    GridConfig::new(traj.times[n_nodes - 1], n_nodes - 1)
}

/// Itô-discretized log-likelihood ratio of the alternative against the null
/// hypothesis along one path:
///
/// ```text
/// 1/sigma_W^2 [ sum q_k (Y_{k+1} - Y_k) - sum V_k q_k h - 1/2 sum q_k^2 h ],
/// q_k = f_c(t_k) Y_k + f_d(t_k)
/// ```
pub fn log_likelihood_ratio(
    traj: &Trajectory,
    pattern: &Pattern,
    params: &ValidatedParams,
) -> Result<f64> {
    let grid = check_trajectory(traj)?;
    if (grid.horizon() - params.horizon).abs() > 1e-12 * params.horizon {
        return Err(Error::GridMismatch("trajectory horizon differs from model".into()));
    }
    let h = grid.step();
    let mut stochastic = 0.0;
    let mut drift = 0.0;
    let mut energy = 0.0;
    for k in 0..grid.n_steps() {
        let t = traj.times[k];
        let q = pattern.f_c.eval(t) * traj.y_path[k] + pattern.f_d.eval(t);
        stochastic += q * (traj.y_path[k + 1] - traj.y_path[k]);
        drift += traj.v_path[k] * q * h;
        energy += q * q * h;
    }
    Ok((stochastic - drift - 0.5 * energy) / params.sigma_w2())
}

/// Left-Riemann running cost plus terminal cost along one path.
pub fn primary_cost(traj: &Trajectory, params: &ValidatedParams) -> Result<f64> {
    let grid = check_trajectory(traj)?;
    let h = grid.step();
    let mut running = 0.0;
    for k in 0..grid.n_steps() {
        let (a, b) = (traj.alpha_path[k], traj.beta_path[k]);
        let dv = traj.v_path[k] - params.vbar.eval(traj.times[k]);
        running += (0.5 * params.r_alpha * a * a + 0.5 * params.r_beta * b * b + 0.5 * params.r_v * dv * dv) * h;
    }
    let dv_t = traj.v_path[grid.n_steps()] - params.vbar_terminal;
    Ok(running + 0.5 * params.t_v * dv_t * dv_t)
}

/// Runs `f` on a pool with `threads` workers, or on the global pool.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Index-ordered mean and standard error (`sample std / sqrt(n)`).
fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for x in xs.clone() {
        sum += x;
        n += 1;
    }
    let mean = sum / n as f64;
    let ss: f64 = xs.map(|x| (x - mean) * (x - mean)).sum();
    let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
    (mean, (var / n as f64).sqrt())
}

pub fn monte_carlo(
    policy: &FeedbackPolicy<'_>,
    pattern: &Pattern,
    grid: &GridConfig,
    n_paths: usize,
    master_seed: u64,
) -> Result<McSummary> {
    monte_carlo_with(policy, pattern, grid, n_paths, master_seed, McOptions::default())
}

pub fn monte_carlo_with(
    policy: &FeedbackPolicy<'_>,
    pattern: &Pattern,
    grid: &GridConfig,
    n_paths: usize,
    master_seed: u64,
    opts: McOptions,
) -> Result<McSummary> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("n_paths must be >= 2, got {n_paths}")));
    }
    let sim = Simulator::new(policy, grid, opts.sim)?;
    let params = policy.params();
    let per_path: Vec<(f64, f64)> = with_threads(opts.threads, || {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let traj = sim.run(path_seed(master_seed, i))?;
                Ok((primary_cost(&traj, params)?, log_likelihood_ratio(&traj, pattern, params)?))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let (mean_primary_cost, se_primary_cost) = mean_se(per_path.iter().map(|p| p.0));
    let (mean_log_lr, se_log_lr) = mean_se(per_path.iter().map(|p| p.1));
    let (mean_likelihood_ratio, se_likelihood_ratio) = mean_se(per_path.iter().map(|p| p.1.exp()));
    Ok(McSummary {
        n_paths,
        mean_primary_cost,
        se_primary_cost,
        mean_log_lr,
        se_log_lr,
        mean_blue_cost: mean_primary_cost - params.lambda * mean_log_lr,
        mean_likelihood_ratio,
        se_likelihood_ratio,
        master_seed,
    })
}

/// Monte Carlo estimate of `E[V^2]`, `E[V Y]`, `E[Y^2]` at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub node: usize,
    pub mean: [f64; 3],
    pub se: [f64; 3],
}

pub fn monte_carlo_moments(
    policy: &FeedbackPolicy<'_>,
    grid: &GridConfig,
    n_paths: usize,
    master_seed: u64,
    nodes: &[usize],
    opts: McOptions,
) -> Result<Vec<MomentEstimate>> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("n_paths must be >= 2, got {n_paths}")));
    }
    if let Some(bad) = nodes.iter().find(|k| **k > grid.n_steps()) {
        return Err(Error::InvalidArgument(format!("node {bad} beyond grid")));
    }
    let sim = Simulator::new(policy, grid, opts.sim)?;
    let samples: Vec<Vec<(f64, f64)>> = with_threads(opts.threads, || {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let traj = sim.run(path_seed(master_seed, i))?;
                Ok(nodes.iter().map(|&k| (traj.v_path[k], traj.y_path[k])).collect())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(j, &node)| {
            let (m20, s20) = mean_se(samples.iter().map(|s| s[j].0 * s[j].0));
            let (m11, s11) = mean_se(samples.iter().map(|s| s[j].0 * s[j].1));
            let (m02, s02) = mean_se(samples.iter().map(|s| s[j].1 * s[j].1));
            MomentEstimate {
                node,
                mean: [m20, m11, m02],
                se: [s20, s11, s02],
            }
        })
        .collect())
}
