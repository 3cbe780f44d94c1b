//! Second moments of the optimally controlled state and the closed-form
//! expected log-likelihood ratio.
//!
//! Valid for the simplified model (`f_d = vbar = 0`, `vbar_T = 0`), where
//! `gamma = theta = 0` and the optimal state is a zero-drift-offset linear
//! system. With `g = lambda / (r_beta sigma_W^2)`:
//!
//! ```text
//! h20' = -2 mu/r_a h20 - 2 eta/r_a h11 + sigma_B^2
//! h11' = (g f_c - rho/r_b - mu/r_a) h11 + (1 - eta/r_b) h20 - eta/r_a h02
//! h02' = 2 (1 - eta/r_b) h11 + 2 (g f_c - rho/r_b) h02 + sigma_W^2
//!
//! E log L = 1/sigma_W^2 int [ -(eta h11 + rho h02)/r_b f_c + (g - 1/2) h02 f_c^2 ] dt
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{interpolate, GridConfig, TimeFunction, ValidatedParams};
use crate::odeint::{integrate_forward, OdeSystem};
use crate::riccati::{Consts, ValueCoeffs};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurves {
    pub h20: Vec<f64>,
    pub h11: Vec<f64>,
    pub h02: Vec<f64>,
}

impl MomentCurves {
    /// Largest violation of `h11^2 <= h20 h02` over the nodes (0 if none).
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        self.h20
            .iter()
            .zip(&self.h11)
            .zip(&self.h02)
            .map(|((a, b), c)| (b * b - a * c).max(0.0))
            .fold(0.0, f64::max)
    }
}

pub fn solve_moments(
    params: &ValidatedParams,
    coeffs: &ValueCoeffs,
    f_c: &TimeFunction,
    grid: &GridConfig,
) -> Result<MomentCurves> {
    if coeffs.grid != *grid {
        return Err(Error::GridMismatch("coefficients solved on another grid".into()));
    }
    if coeffs.gamma.iter().chain(&coeffs.theta).any(|v| *v != 0.0) {
        return Err(Error::NotSimplifiedModel);
    }
    solve_moments_from(params, &coeffs.mu, &coeffs.eta, &coeffs.rho, f_c, grid)
}

/// Moment curves from explicit `(mu, eta, rho)` node values.
pub fn solve_moments_from(
    params: &ValidatedParams,
    mu: &[f64],
    eta: &[f64],
    rho: &[f64],
    f_c: &TimeFunction,
    grid: &GridConfig,
) -> Result<MomentCurves> {
    for (name, v) in [("mu", mu), ("eta", eta), ("rho", rho)] {
        grid.check_len(name, v.len())?;
    }
    let c = Consts::new(params);
    let horizon = grid.horizon();
    let system = OdeSystem::new(3, |t, h: &[f64], dh: &mut [f64]| {
        let m = interpolate(mu, horizon, t);
        let e = interpolate(eta, horizon, t);
        let r = interpolate(rho, horizon, t);
        moment_rhs(&c, m, e, r, f_c.eval(t), h, dh);
    });
    let (v0, y0) = (params.v0, params.y0);
    let sol = integrate_forward(&system, &[v0 * v0, v0 * y0, y0 * y0], grid)?;
    Ok(MomentCurves {
        h20: sol.component(0),
        h11: sol.component(1),
        h02: sol.component(2),
    })
}

#[inline]
pub(crate) fn moment_rhs(c: &Consts, mu: f64, eta: f64, rho: f64, fc: f64, h: &[f64], dh: &mut [f64]) {
    let (h20, h11, h02) = (h[0], h[1], h[2]);
    let drift_y = c.gain * fc - c.inv_rb * rho;
    let coupling = 1.0 - c.inv_rb * eta;
    dh[0] = -2.0 * c.inv_ra * mu * h20 - 2.0 * c.inv_ra * eta * h11 + c.sb2;
    dh[1] = (drift_y - c.inv_ra * mu) * h11 + coupling * h20 - c.inv_ra * eta * h02;
    dh[2] = 2.0 * coupling * h11 + 2.0 * drift_y * h02 + c.sw2;
}

/// Integrand of the expected log-likelihood ratio, before the `1/sigma_W^2` factor.
#[inline]
pub(crate) fn log_lr_density(c: &Consts, eta: f64, rho: f64, h11: f64, h02: f64, fc: f64) -> f64 {
    -(eta * h11 + rho * h02) * c.inv_rb * fc + (c.gain - 0.5) * h02 * fc * fc
}

pub fn expected_log_lr(
    params: &ValidatedParams,
    coeffs: &ValueCoeffs,
    f_c: &TimeFunction,
    moments: &MomentCurves,
    grid: &GridConfig,
) -> Result<f64> {
    if coeffs.grid != *grid {
        return Err(Error::GridMismatch("coefficients solved on another grid".into()));
    }
    expected_log_lr_from(params, &coeffs.eta, &coeffs.rho, &f_c.sample_values(grid), moments, grid)
}

pub fn expected_log_lr_from(
    params: &ValidatedParams,
    eta: &[f64],
    rho: &[f64],
    f_c: &[f64],
    moments: &MomentCurves,
    grid: &GridConfig,
) -> Result<f64> {
    for (name, v) in [
        ("eta", eta),
        ("rho", rho),
        ("f_c", f_c),
        ("h11", &moments.h11[..]),
        ("h02", &moments.h02[..]),
    ] {
        grid.check_len(name, v.len())?;
    }
    let c = Consts::new(params);
    let density: Vec<f64> = (0..grid.n_nodes())
        .map(|k| log_lr_density(&c, eta[k], rho[k], moments.h11[k], moments.h02[k], f_c[k]))
        .collect();
    Ok(grid.trapezoid(&density) / c.sw2)
}

/// The shorthand `G(t) = (eta h11 + rho h02) / r_beta`; vanishes for `f_c = 0`.
pub fn cross_moment_term(params: &ValidatedParams, eta: &[f64], rho: &[f64], moments: &MomentCurves) -> Vec<f64> {
    (0..eta.len())
        .map(|k| (eta[k] * moments.h11[k] + rho[k] * moments.h02[k]) / params.r_beta)
        .collect()
}
