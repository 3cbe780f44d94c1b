//! Repeated leader–follower play between the red and blue teams.
//!
//! Each round the blue team best-responds to the pattern it currently
//! trusts; the red team then anchors its penalty at that pattern and
//! optimizes the next one, which the blue team adopts unconditionally.

use serde::Serialize;

use crate::controls::FeedbackPolicy;
use crate::error::{Error, Result};
use crate::model::{GridConfig, Pattern, TimeFunction, ValidatedParams};
use crate::moments::{expected_log_lr, solve_moments};
use crate::red::{optimize, OptimizationReport, RedConfig};
use crate::riccati::{solve_value_coeffs, ValueCoeffs};
use crate::sde::{monte_carlo_with, path_seed, simulate_path, McOptions, McSummary, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    /// Starts at 1.
    pub round_index: usize,
    pub f_c_used: TimeFunction,
    pub mc: McSummary,
    pub expected_log_lr_moment: f64,
    pub sample_trajectories: Vec<Trajectory>,
    /// The red move made at the end of this round.
    pub red_report: OptimizationReport,
}

impl RoundRecord {
    pub fn f_c_next(&self) -> &TimeFunction {
        &self.red_report.f_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOptions {
    pub n_rounds: usize,
    pub mc_paths: usize,
    pub seed: u64,
    pub sample_trajectories: usize,
    pub mc: McOptions,
}

impl GameOptions {
    pub fn new(n_rounds: usize, mc_paths: usize, seed: u64) -> Self {
        GameOptions {
            n_rounds,
            mc_paths,
            seed,
            sample_trajectories: 3,
            mc: McOptions::default(),
        }
    }
}

/// Blue-side solve and statistics under a fixed pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlueOutcome {
    pub coeffs: ValueCoeffs,
    pub mc: McSummary,
    pub expected_log_lr_moment: f64,
    pub sample_trajectories: Vec<Trajectory>,
}

pub fn blue_round(
    params: &ValidatedParams,
    f_c: &TimeFunction,
    grid: &GridConfig,
    mc_paths: usize,
    seed: u64,
    n_samples: usize,
    mc: McOptions,
) -> Result<BlueOutcome> {
    let pattern = Pattern::slope_only(f_c.clone());
    let coeffs = solve_value_coeffs(params, &pattern, grid)?;
    let policy = FeedbackPolicy::new(params, &pattern, &coeffs)?;
    let summary = monte_carlo_with(&policy, &pattern, grid, mc_paths, seed, mc)?;
    let moments = solve_moments(params, &coeffs, f_c, grid)?;
    let expected_log_lr_moment = expected_log_lr(params, &coeffs, f_c, &moments, grid)?;
    // the samples are exactly the first paths of the Monte Carlo run
    let sample_trajectories = (0..n_samples.min(mc_paths) as u64)
        .map(|i| simulate_path(&policy, grid, path_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlueOutcome {
        coeffs,
        mc: summary,
        expected_log_lr_moment,
        sample_trajectories,
    })
}

/// Reference outcome with `f_c = 0`, on the same seed stream as the rounds.
pub fn baseline(params: &ValidatedParams, grid: &GridConfig, opts: &GameOptions) -> Result<BlueOutcome> {
    blue_round(
        params,
        &TimeFunction::zero(),
        grid,
        opts.mc_paths,
        opts.seed,
        opts.sample_trajectories,
        opts.mc,
    )
}

pub fn play_rounds(
    params: &ValidatedParams,
    initial_f_c: &TimeFunction,
    red_config: &RedConfig,
    grid: &GridConfig,
    opts: &GameOptions,
) -> Result<Vec<RoundRecord>> {
    if opts.n_rounds == 0 {
        return Err(Error::InvalidArgument("n_rounds must be >= 1".into()));
    }
    let mut current = initial_f_c.sample(grid);
    let mut records = Vec::with_capacity(opts.n_rounds);
    for round in 1..=opts.n_rounds {
        let blue = blue_round(
            params,
            &current,
            grid,
            opts.mc_paths,
            opts.seed,
            opts.sample_trajectories,
            opts.mc,
        )?;
        let mut config = red_config.clone();
        config.f_c_initial = current.clone();
        let red_seed = path_seed(opts.seed ^ 0x7265_645f_7465_616d, round as u64);
        let red_report = optimize(params, &config, grid, red_seed)?;
        let next = red_report.f_c.clone();
        records.push(RoundRecord {
            round_index: round,
            f_c_used: current,
            mc: blue.mc,
            expected_log_lr_moment: blue.expected_log_lr_moment,
            sample_trajectories: blue.sample_trajectories,
            red_report,
        });
        current = next;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::red::{PenaltyKind, SolverKind};

    fn params() -> ValidatedParams {
        ModelParams {
            horizon: 0.1,
            sigma_b: 0.15,
            sigma_w: 0.15,
            r_alpha: 2.0,
            r_beta: 10.0,
            r_v: 1.0,
            t_v: 1.0,
            vbar_terminal: 0.0,
            vbar: TimeFunction::zero(),
            lambda: 0.2,
            v0: 1.0,
            y0: 2.0,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn rounds_chain_and_heavy_penalty_freezes() {
        let p = params();
        let g = GridConfig::new(0.1, 100).unwrap();
        let start = TimeFunction::affine(0.6, -20.0);
        let red = RedConfig::new(1e6, PenaltyKind::Quadratic, TimeFunction::zero(), SolverKind::Fpi);
        let opts = GameOptions::new(2, 200, 5);
        let rounds = play_rounds(&p, &start, &red, &g, &opts).unwrap();
        assert_eq!(rounds.len(), 2);
        assert_eq!(&rounds[1].f_c_used, rounds[0].f_c_next());
        assert_eq!(rounds[0].f_c_used, start.sample(&g));
        let a = start.sample_values(&g);
        let b = rounds[0].red_report.f_c_values();
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-3));
        assert_eq!(rounds[0].sample_trajectories.len(), 3);
    }

    #[test]
    fn zero_pattern_is_kept() {
        let p = params();
        let g = GridConfig::new(0.1, 100).unwrap();
        let red = RedConfig::new(1.5, PenaltyKind::Quadratic, TimeFunction::zero(), SolverKind::Fbs);
        let opts = GameOptions::new(2, 100, 1);
        let rounds = play_rounds(&p, &TimeFunction::zero(), &red, &g, &opts).unwrap();
        for r in &rounds {
            let norm = r.red_report.f_c_values().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < 1e-3);
            assert_eq!(r.expected_log_lr_moment, 0.0);
        }
    }

    #[test]
    fn baseline_matches_zero_round() {
        let p = params();
        let g = GridConfig::new(0.1, 50).unwrap();
        let opts = GameOptions::new(1, 100, 9);
        let b = baseline(&p, &g, &opts).unwrap();
        let red = RedConfig::new(1.5, PenaltyKind::Quadratic, TimeFunction::zero(), SolverKind::Fpi);
        let r = play_rounds(&p, &TimeFunction::zero(), &red, &g, &opts).unwrap();
        assert_eq!(b.mc, r[0].mc);
        assert!(play_rounds(&p, &TimeFunction::zero(), &red, &g, &GameOptions::new(0, 10, 1)).is_err());
    }
}
