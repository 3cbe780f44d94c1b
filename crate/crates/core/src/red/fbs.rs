//! Forward-backward sweep on the Pontryagin system of the red problem.
//!
//! State `x = (mu, eta, rho, h20, h11, h02)`, costate `psi_1..psi_6`. The
//! Hamiltonian is written for `sigma_W^2 J_red`, so the running cost is
//!
//! ```text
//! -(eta h11 + rho h02)/r_b f + (g - 1/2) h02 f^2 + lambda_reg p(f)
//! ```
//!
//! `mu, eta, rho` are pinned at `T` and free at `0`, so `psi_1..3` vanish at
//! `t = 0`; the moments are pinned at `0`, so `psi_4..6` vanish at `T`.
//! `psi_4..6` do not involve `psi_1..3` and are integrated first.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{interpolate, GridConfig, ValidatedParams};
use crate::odeint::{integrate_backward, integrate_forward, OdeSystem};

use super::{evaluate, finish_report, l2_change, require_unit_log_anchor, Evaluation, OptimizationReport, PenaltyKind, RedConfig};

/// Below this the relaxation factor stops halving and the step is taken.
const MIN_RELAXATION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjointState {
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub psi3: Vec<f64>,
    pub psi4: Vec<f64>,
    pub psi5: Vec<f64>,
    pub psi6: Vec<f64>,
}

struct Frozen<'a> {
    x: [&'a [f64]; 6],
    f: &'a [f64],
    horizon: f64,
}

impl Frozen<'_> {
    fn at(&self, t: f64) -> ([f64; 6], f64) {
        let mut x = [0.0; 6];
        for (xi, curve) in x.iter_mut().zip(self.x) {
            *xi = interpolate(curve, self.horizon, t);
        }
        (x, interpolate(self.f, self.horizon, t))
    }
}

pub fn solve_adjoint(
    params: &ValidatedParams,
    f_c: &[f64],
    eval: &Evaluation,
    grid: &GridConfig,
) -> Result<AdjointState> {
    grid.check_len("f_c", f_c.len())?;
    let (ra, rb) = (params.r_alpha, params.r_beta);
    let k = params.misdirection_gain();
    let (c, m) = (&eval.coeffs, &eval.moments);
    let frozen = Frozen {
        x: [&c.mu, &c.eta, &c.rho, &m.h20, &m.h11, &m.h02],
        f: f_c,
        horizon: grid.horizon(),
    };

    let lower = OdeSystem::new(3, |t, p: &[f64], dp: &mut [f64]| {
        let (x, f) = frozen.at(t);
        let (p4, p5, p6) = (p[0], p[1], p[2]);
        dp[0] = 2.0 * p4 * x[0] / ra + p5 * (x[1] / rb - 1.0);
        dp[1] = f * x[1] / rb
            + 2.0 * p4 * x[1] / ra
            + p5 * (x[2] / rb + x[0] / ra - k * f)
            + 2.0 * p6 * (x[1] / rb - 1.0);
        dp[2] = f * x[2] / rb - 0.5 * f * f * (2.0 * k - 1.0) + p5 * x[1] / ra + 2.0 * p6 * (x[2] / rb - k * f);
    });
    let low = integrate_backward(&lower, &[0.0; 3], grid)?;
    let (psi4, psi5, psi6) = (low.component(0), low.component(1), low.component(2));

    let horizon = grid.horizon();
    let upper = OdeSystem::new(3, |t, p: &[f64], dp: &mut [f64]| {
        let (x, f) = frozen.at(t);
        let p4 = interpolate(&psi4, horizon, t);
        let p5 = interpolate(&psi5, horizon, t);
        let p6 = interpolate(&psi6, horizon, t);
        let (p1, p2, p3) = (p[0], p[1], p[2]);
        dp[0] = -2.0 * p1 * x[0] / ra - p2 * x[1] / ra + 2.0 * p4 * x[3] / ra + p5 * x[4] / ra;
        dp[1] = f * x[4] / rb - 2.0 * p1 * (x[1] / rb - 1.0) - p2 * (x[0] / ra + x[2] / rb - k * f)
            - 2.0 * p3 * x[1] / ra
            + 2.0 * p4 * x[4] / ra
            + p5 * (x[3] / rb + x[5] / ra)
            + 2.0 * p6 * x[4] / rb;
        dp[2] = f * x[5] / rb - p2 * (x[1] / rb - 1.0) - 2.0 * p3 * (x[2] / rb - k * f)
            + p5 * x[4] / rb
            + 2.0 * p6 * x[5] / rb;
    });
    let up = integrate_forward(&upper, &[0.0; 3], grid)?;
    Ok(AdjointState {
        psi1: up.component(0),
        psi2: up.component(1),
        psi3: up.component(2),
        psi4,
        psi5,
        psi6,
    })
}

/// Nodewise minimizer of the Hamiltonian in `f_c`.
fn hamiltonian_minimizer(
    params: &ValidatedParams,
    config: &RedConfig,
    anchor: &[f64],
    eval: &Evaluation,
    adj: &AdjointState,
) -> Result<Vec<f64>> {
    let rb = params.r_beta;
    let lam = params.lambda;
    let s2 = params.sigma_w2();
    let s4 = s2 * s2;
    let lreg = config.lambda_reg;
    let (c, m) = (&eval.coeffs, &eval.moments);
    (0..anchor.len())
        .map(|k| {
            let (x2, x3, x5, x6) = (c.eta[k], c.rho[k], m.h11[k], m.h02[k]);
            let (p2, p3, p5, p6) = (adj.psi2[k], adj.psi3[k], adj.psi5[k], adj.psi6[k]);
            match config.penalty_kind {
                PenaltyKind::Quadratic => {
                    let num = 2.0 * lreg * rb * s4 * anchor[k]
                        + lam * p2 * s2 * x2
                        + 2.0 * lam * p3 * s2 * x3
                        + (s4 * x2 - lam * p5 * s2) * x5
                        + (s4 * x3 - 2.0 * lam * p6 * s2) * x6;
                    let den = 2.0 * lreg * rb * s4 - 2.0 * lam * p3 * rb * s2 + 2.0 * lam * lam * p3
                        - (rb * s4 - 2.0 * lam * s2) * x6;
                    if !(den > 0.0) {
                        return Err(Error::DegenerateDenominator { node: k, value: den });
                    }
                    Ok(num / den)
                }
                PenaltyKind::Logarithmic => {
                    let a = x6 * (2.0 * lam / (rb * s2) - 1.0) - 2.0 * (lam / s2 - lam * lam / (rb * s4)) * p3;
                    let b = -(x2 * x5 + x3 * x6) / rb
                        + (lam * p5 * x5 + 2.0 * lam * p6 * x6 - lam * p2 * x2 - 2.0 * lam * x3 * p3) / (rb * s2);
                    if !(a > 0.0) {
                        return Err(Error::DegenerateDenominator { node: k, value: a });
                    }
                    let disc = b * b + 4.0 * a * lreg;
                    if disc < 0.0 {
                        return Err(Error::NegativeDiscriminant { node: k, value: disc });
                    }
                    Ok((-b + disc.sqrt()) / (2.0 * a))
                }
            }
        })
        .collect()
}

pub fn fbs_solve(params: &ValidatedParams, config: &RedConfig, grid: &GridConfig) -> Result<OptimizationReport> {
    config.validate(grid)?;
    let anchor = config.anchor(grid);
    require_unit_log_anchor(config, &anchor)?;

    let mut f = anchor.clone();
    let mut eval = evaluate(params, &f, config, grid)?;
    let mut history = vec![eval.objective];
    let mut omega = config.fbs_relaxation;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let adj = solve_adjoint(params, &f, &eval, grid)?;
        let target = hamiltonian_minimizer(params, config, &anchor, &eval, &adj)?;
        let (next, next_eval) = loop {
            let cand: Vec<f64> = f.iter().zip(&target).map(|(a, b)| (1.0 - omega) * a + omega * b).collect();
            let cand_eval = evaluate(params, &cand, config, grid)?;
            let worse = cand_eval.objective > eval.objective + 1e-12 * eval.objective.abs();
            if !worse || omega < MIN_RELAXATION {
                break (cand, cand_eval);
            }
            omega *= 0.5;
        };
        iterations += 1;
        let change = l2_change(&next, &f);
        f = next;
        eval = next_eval;
        history.push(eval.objective);
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    finish_report(params, f, config, grid, history, iterations, converged)
}
