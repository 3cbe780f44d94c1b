//! Fixed-point iteration on the pointwise minimizer of the red objective.
//!
//! Freezing `(eta, rho, h11, h02)` at their values for the current pattern,
//! the integrand of `J_red` is a scalar function of `f_c(t)` alone and is
//! minimized in closed form at every node.

use crate::error::{Error, Result};
use crate::model::{GridConfig, ValidatedParams};

use super::{evaluate, finish_report, l2_change, require_unit_log_anchor, PenaltyKind, RedConfig, OptimizationReport};

/// Frozen state at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub eta: f64,
    pub rho: f64,
    pub h11: f64,
    pub h02: f64,
}

/// Pointwise minimizer with anchor value `anchor = f_c_initial(t)`.
///
/// Errors carry node index 0; [`fpi_solve`] rewrites them with the real node.
pub fn fpi_update(state: &NodeState, anchor: f64, params: &ValidatedParams, config: &RedConfig) -> Result<f64> {
    let rb = params.r_beta;
    let sw2 = params.sigma_w2();
    let lam = params.lambda;
    let lreg = config.lambda_reg;
    let NodeState { eta, rho, h11, h02 } = *state;
    match config.penalty_kind {
        PenaltyKind::Quadratic => {
            let den = 2.0 * lreg * rb * sw2 - (rb * sw2 - 2.0 * lam) * h02;
            if !(den > 0.0) {
                return Err(Error::DegenerateDenominator { node: 0, value: den });
            }
            Ok((2.0 * lreg * rb * sw2 * anchor + sw2 * eta * h11 + sw2 * rho * h02) / den)
        }
        PenaltyKind::Logarithmic => {
            let a2 = lam / (rb * sw2) - 0.5;
            let lead = 4.0 * a2 * h02;
            if !(lead > 0.0) {
                return Err(Error::DegenerateDenominator { node: 0, value: lead });
            }
            let g = (eta * h11 + rho * h02) / rb;
            let disc = g * g + 8.0 * lreg * a2 * h02;
            if disc < 0.0 {
                return Err(Error::NegativeDiscriminant { node: 0, value: disc });
            }
            Ok((g + disc.sqrt()) / lead)
        }
    }
}

fn with_node(err: Error, node: usize) -> Error {
    match err {
        Error::DegenerateDenominator { value, .. } => Error::DegenerateDenominator { node, value },
        Error::NegativeDiscriminant { value, .. } => Error::NegativeDiscriminant { node, value },
        other => other,
    }
}

pub fn fpi_solve(params: &ValidatedParams, config: &RedConfig, grid: &GridConfig) -> Result<OptimizationReport> {
    config.validate(grid)?;
    let anchor = config.anchor(grid);
    require_unit_log_anchor(config, &anchor)?;

    let mut f = anchor.clone();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let eval = evaluate(params, &f, config, grid)?;
        history.push(eval.objective);
        let next = (0..grid.n_nodes())
            .map(|k| {
                let state = NodeState {
                    eta: eval.coeffs.eta[k],
                    rho: eval.coeffs.rho[k],
                    h11: eval.moments.h11[k],
                    h02: eval.moments.h02[k],
                };
                fpi_update(&state, anchor[k], params, config).map_err(|e| with_node(e, k))
            })
            .collect::<Result<Vec<f64>>>()?;
        iterations += 1;
        let change = l2_change(&next, &f);
        f = next;
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    let report = finish_report(params, f, config, grid, history, iterations, converged)?;
    Ok(report)
}
