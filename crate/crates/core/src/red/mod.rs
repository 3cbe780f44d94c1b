//! Red-team pattern optimization.
//!
//! The red team picks the slope pattern `f_c` that minimizes
//!
//! ```text
//! J_red(f_c) = E log L_T(f_c) + lambda_reg / sigma_W^2 * P(f_c)
//! ```
//!
//! where `P` is a proximity penalty towards the pattern the blue team
//! currently trusts. Everything here works on the simplified model, so
//! `E log L_T` comes from the moment ODEs rather than simulation.

mod euler;
mod fbs;
mod fpi;
mod nn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GridConfig, TimeFunction, ValidatedParams};
use crate::moments::{cross_moment_term, expected_log_lr_from, solve_moments_from, MomentCurves};
use crate::riccati::{solve_core_coeffs, CoreCoeffs};

pub use euler::{euler_objective, EulerGradient};
pub use fbs::{fbs_solve, solve_adjoint, AdjointState};
pub use fpi::{fpi_solve, fpi_update, NodeState};
pub use nn::{nn_forward, nn_gradient, nn_solve, MlpNetwork, NnSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `int (f_c - f_init)^2 dt`
    Quadratic,
    /// `-int f_init log(f_c / f_init) dt`
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Fpi,
    Fbs,
    Nn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedConfig {
    pub lambda_reg: f64,
    pub penalty_kind: PenaltyKind,
    pub f_c_initial: TimeFunction,
    pub solver: SolverKind,
    pub tolerance: f64,
    pub max_iters: usize,
    pub fbs_relaxation: f64,
    pub nn: NnSettings,
}

impl RedConfig {
    pub fn new(lambda_reg: f64, penalty_kind: PenaltyKind, f_c_initial: TimeFunction, solver: SolverKind) -> Self {
        RedConfig {
            lambda_reg,
            penalty_kind,
            f_c_initial,
            solver,
            tolerance: 1e-3,
            max_iters: 200,
            fbs_relaxation: 0.5,
            nn: NnSettings::default(),
        }
    }

    pub fn validate(&self, grid: &GridConfig) -> Result<()> {
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_reg must be >= 0, got {}", self.lambda_reg)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if !(self.fbs_relaxation > 0.0 && self.fbs_relaxation <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fbs_relaxation must lie in (0, 1], got {}",
                self.fbs_relaxation
            )));
        }
        if self.penalty_kind == PenaltyKind::Logarithmic {
            check_positive(&self.f_c_initial.sample_values(grid))?;
        }
        Ok(())
    }

    pub fn anchor(&self, grid: &GridConfig) -> Vec<f64> {
        self.f_c_initial.sample_values(grid)
    }
}

fn check_positive(f: &[f64]) -> Result<()> {
    match f.iter().position(|v| !(*v > 0.0)) {
        Some(node) => Err(Error::NonPositiveFc { node, value: f[node] }),
        None => Ok(()),
    }
}

/// The log-penalty closed forms assume the anchor is identically one.
pub(crate) fn require_unit_log_anchor(config: &RedConfig, anchor: &[f64]) -> Result<()> {
    if config.penalty_kind == PenaltyKind::Logarithmic && anchor.iter().any(|a| *a != 1.0) {
        return Err(Error::Unsupported(
            "logarithmic penalty closed-form updates require f_c_initial = 1".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub f_c: TimeFunction,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_expected_log_lr: f64,
    pub final_penalty: f64,
    pub final_objective: f64,
}

impl OptimizationReport {
    pub fn f_c_values(&self) -> &[f64] {
        match &self.f_c {
            TimeFunction::GridSampled { values, .. } => values,
            _ => unreachable!("reports always carry grid-sampled patterns"),
        }
    }
}

pub fn penalty(f_c: &[f64], config: &RedConfig, grid: &GridConfig) -> Result<f64> {
    grid.check_len("f_c", f_c.len())?;
    let anchor = config.anchor(grid);
    let density: Vec<f64> = match config.penalty_kind {
        PenaltyKind::Quadratic => f_c.iter().zip(&anchor).map(|(f, a)| (f - a) * (f - a)).collect(),
        PenaltyKind::Logarithmic => {
            check_positive(f_c)?;
            f_c.iter().zip(&anchor).map(|(f, a)| -a * (f / a).ln()).collect()
        }
    };
    Ok(grid.trapezoid(&density))
}

/// Gradient of `penalty` with respect to the node values of `f_c`.
pub fn penalty_gradient(f_c: &[f64], config: &RedConfig, grid: &GridConfig) -> Result<Vec<f64>> {
    grid.check_len("f_c", f_c.len())?;
    let anchor = config.anchor(grid);
    let w = grid.trapezoid_weights();
    match config.penalty_kind {
        PenaltyKind::Quadratic => Ok((0..f_c.len()).map(|k| 2.0 * w[k] * (f_c[k] - anchor[k])).collect()),
        PenaltyKind::Logarithmic => {
            check_positive(f_c)?;
            Ok((0..f_c.len()).map(|k| -w[k] * anchor[k] / f_c[k]).collect())
        }
    }
}

/// Everything the solvers need at one pattern.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub coeffs: CoreCoeffs,
    pub moments: MomentCurves,
    pub expected_log_lr: f64,
    pub penalty: f64,
    pub objective: f64,
}

impl Evaluation {
    /// `(eta h11 + rho h02) / r_beta` at every node.
    pub fn cross_term(&self, params: &ValidatedParams) -> Vec<f64> {
        cross_moment_term(params, &self.coeffs.eta, &self.coeffs.rho, &self.moments)
    }
}

pub fn evaluate(params: &ValidatedParams, f_c: &[f64], config: &RedConfig, grid: &GridConfig) -> Result<Evaluation> {
    if !params.has_zero_targets(grid) {
        return Err(Error::NotSimplifiedModel);
    }
    let pattern = TimeFunction::grid_sampled(grid, f_c.to_vec())?;
    let coeffs = solve_core_coeffs(params, &pattern, grid)?;
    let moments = solve_moments_from(params, &coeffs.mu, &coeffs.eta, &coeffs.rho, &pattern, grid)?;
    let expected_log_lr = expected_log_lr_from(params, &coeffs.eta, &coeffs.rho, f_c, &moments, grid)?;
    let penalty = penalty(f_c, config, grid)?;
    let objective = expected_log_lr + config.lambda_reg / params.sigma_w2() * penalty;
    Ok(Evaluation {
        coeffs,
        moments,
        expected_log_lr,
        penalty,
        objective,
    })
}

pub fn red_objective(params: &ValidatedParams, f_c: &[f64], config: &RedConfig, grid: &GridConfig) -> Result<f64> {
    Ok(evaluate(params, f_c, config, grid)?.objective)
}

/// Dispatches on `config.solver`. The seed only matters for the NN solver.
pub fn optimize(params: &ValidatedParams, config: &RedConfig, grid: &GridConfig, seed: u64) -> Result<OptimizationReport> {
    match config.solver {
        SolverKind::Fpi => fpi_solve(params, config, grid),
        SolverKind::Fbs => fbs_solve(params, config, grid),
        SolverKind::Nn => nn_solve(params, config, grid, seed),
    }
}

pub(crate) fn l2_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `|a - b|_2 / |b|_2` over grid nodes.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    l2_change(a, b) / norm
}

pub(crate) fn finish_report(
    params: &ValidatedParams,
    f_c: Vec<f64>,
    config: &RedConfig,
    grid: &GridConfig,
    objective_history: Vec<f64>,
    iterations: usize,
    converged: bool,
) -> Result<OptimizationReport> {
    let eval = evaluate(params, &f_c, config, grid)?;
    Ok(OptimizationReport {
        f_c: TimeFunction::grid_sampled(grid, f_c)?,
        objective_history,
        iterations,
        converged,
        final_expected_log_lr: eval.expected_log_lr,
        final_penalty: eval.penalty,
        final_objective: eval.objective,
    })
}
