//! Backward solve of the value-function coefficient system.
//!
//! With the quadratic ansatz
//! `V(t, v, y) = mu/2 v^2 + eta v y + rho/2 y^2 + gamma v + theta y + xi`,
//! the HJB equation reduces to six coupled ODEs in
//! `(mu, eta, rho, gamma, theta, xi)` with terminal values
//! `(t_v, 0, 0, -t_v vbar_T, 0, t_v vbar_T^2 / 2)`. The first three do not
//! reference the last three.

use serde::Serialize;

use crate::error::Result;
use crate::model::{GridConfig, Pattern, TimeFunction, ValidatedParams};
use crate::odeint::{integrate_backward, OdeSystem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueCoeffs {
    pub grid: GridConfig,
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ValueCoeffs {
    pub fn curves(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("mu", &self.mu),
            ("eta", &self.eta),
            ("rho", &self.rho),
            ("gamma", &self.gamma),
            ("theta", &self.theta),
            ("xi", &self.xi),
        ]
    }

    /// Largest of `|eta|`, `|rho|`, `|theta|` over all nodes.
    pub fn max_cross_terms(&self) -> f64 {
        self.eta
            .iter()
            .chain(&self.rho)
            .chain(&self.theta)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Constants shared by every right-hand side of the coefficient system.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Consts {
    pub inv_ra: f64,
    pub inv_rb: f64,
    pub r_v: f64,
    /// `lambda / (r_beta sigma_W^2)`
    pub gain: f64,
    /// `lambda^2 / (r_beta sigma_W^4) - lambda / sigma_W^2`
    pub quad: f64,
    pub sb2: f64,
    pub sw2: f64,
}

impl Consts {
    pub fn new(p: &ValidatedParams) -> Self {
        let sw2 = p.sigma_w2();
        Consts {
            inv_ra: 1.0 / p.r_alpha,
            inv_rb: 1.0 / p.r_beta,
            r_v: p.r_v,
            gain: p.misdirection_gain(),
            quad: p.lambda * p.lambda / (p.r_beta * sw2 * sw2) - p.lambda / sw2,
            sb2: p.sigma_b2(),
            sw2,
        }
    }

    /// Derivatives of `(mu, eta, rho)` given `f_c`.
    #[inline]
    pub fn core_rhs(&self, x: &[f64], fc: f64, dx: &mut [f64]) {
        let (mu, eta, rho) = (x[0], x[1], x[2]);
        dx[0] = self.inv_ra * mu * mu + self.inv_rb * eta * eta - 2.0 * eta - self.r_v;
        dx[1] = self.inv_ra * mu * eta + self.inv_rb * rho * eta - rho - self.gain * eta * fc;
        dx[2] = self.inv_ra * eta * eta + self.inv_rb * rho * rho - 2.0 * self.gain * rho * fc
            + self.quad * fc * fc;
    }

    /// Derivatives of all six coefficients.
    #[inline]
    pub fn full_rhs(&self, x: &[f64], fc: f64, fd: f64, vbar: f64, dx: &mut [f64]) {
        self.core_rhs(x, fc, dx);
        let (mu, eta, rho, gamma, theta) = (x[0], x[1], x[2], x[3], x[4]);
        dx[3] = self.inv_ra * mu * gamma + self.inv_rb * eta * theta - theta + self.r_v * vbar
            - self.gain * eta * fd;
        dx[4] = self.inv_ra * eta * gamma + self.inv_rb * rho * theta
            - self.gain * theta * fc
            - self.gain * fd * rho
            + self.quad * fc * fd;
        dx[5] = 0.5 * self.inv_ra * gamma * gamma + 0.5 * self.inv_rb * theta * theta
            - 0.5 * self.sb2 * mu
            - 0.5 * self.sw2 * rho
            - self.gain * fd * theta
            - 0.5 * self.r_v * vbar * vbar
            + 0.5 * self.quad * fd * fd;
    }
}

pub fn solve_value_coeffs(
    params: &ValidatedParams,
    pattern: &Pattern,
    grid: &GridConfig,
) -> Result<ValueCoeffs> {
    let c = Consts::new(params);
    let (fc, fd, vbar) = (&pattern.f_c, &pattern.f_d, &params.vbar);
    let system = OdeSystem::new(6, |t, x: &[f64], dx: &mut [f64]| {
        c.full_rhs(x, fc.eval(t), fd.eval(t), vbar.eval(t), dx)
    });
    let vt = params.vbar_terminal;
    let terminal = [
        params.t_v,
        0.0,
        0.0,
        -params.t_v * vt,
        0.0,
        0.5 * params.t_v * vt * vt,
    ];
    let sol = integrate_backward(&system, &terminal, grid)?;
    Ok(ValueCoeffs {
        grid: *grid,
        mu: sol.component(0),
        eta: sol.component(1),
        rho: sol.component(2),
        gamma: sol.component(3),
        theta: sol.component(4),
        xi: sol.component(5),
    })
}

/// `(mu, eta, rho)` alone; they do not depend on `f_d`, `vbar` or `vbar_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreCoeffs {
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub rho: Vec<f64>,
}

pub fn solve_core_coeffs(
    params: &ValidatedParams,
    f_c: &TimeFunction,
    grid: &GridConfig,
) -> Result<CoreCoeffs> {
    let c = Consts::new(params);
    let system = OdeSystem::new(3, |t, x: &[f64], dx: &mut [f64]| c.core_rhs(x, f_c.eval(t), dx));
    let sol = integrate_backward(&system, &[params.t_v, 0.0, 0.0], grid)?;
    Ok(CoreCoeffs {
        mu: sol.component(0),
        eta: sol.component(1),
        rho: sol.component(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tracking_params, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn short_horizon(lambda: f64) -> ValidatedParams {
        ModelParams {
            horizon: 0.1,
            sigma_b: 0.1,
            sigma_w: 0.1,
            r_alpha: 1.0,
            r_beta: 10.0,
            r_v: 1.0,
            t_v: 1.0,
            vbar_terminal: 0.0,
            vbar: TimeFunction::zero(),
            lambda,
            v0: 1.0,
            y0: 2.0,
        }
        .validate()
        .unwrap()
    }

    fn sin_pattern(amp: f64) -> Pattern {
        Pattern::slope_only(TimeFunction::sinusoid(amp, 10.0 * std::f64::consts::PI, 0.0))
    }

    #[test]
    fn terminal_conditions_hold_exactly() {
        let p = tracking_params(0.05).validate().unwrap();
        let g = GridConfig::new(1.0, 100).unwrap();
        let c = solve_value_coeffs(&p, &sin_pattern(1.0), &g).unwrap();
        assert_eq!(c.mu[100], 1.0);
        assert_eq!(c.eta[100], 0.0);
        assert_eq!(c.rho[100], 0.0);
        assert_eq!(c.gamma[100], -1.0);
        assert_eq!(c.theta[100], 0.0);
        assert_eq!(c.xi[100], 0.5);
        assert!(c.curves().iter().all(|(_, v)| v.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn zero_pattern_or_zero_lambda_gives_no_cross_terms() {
        let g = GridConfig::new(1.0, 200).unwrap();
        let p = tracking_params(0.075).validate().unwrap();
        let c = solve_value_coeffs(&p, &Pattern::zero(), &g).unwrap();
        assert!(c.max_cross_terms() < 1e-10);
        let p0 = tracking_params(0.0).validate().unwrap();
        let mut pat = sin_pattern(0.5);
        pat.f_d = TimeFunction::affine(0.3, 1.0);
        let c = solve_value_coeffs(&p0, &pat, &g).unwrap();
        assert!(c.max_cross_terms() < 1e-10);
    }

    #[test]
    fn full_intensity_decouples() {
        let g = GridConfig::new(1.0, 200).unwrap();
        let p = tracking_params(0.625).validate().unwrap();
        let mut pat = sin_pattern(1.0);
        pat.f_d = TimeFunction::constant(-0.4);
        let c = solve_value_coeffs(&p, &pat, &g).unwrap();
        assert!(c.max_cross_terms() < 1e-10);
    }

    #[test]
    fn constant_riccati_regime() {
        let g = GridConfig::new(0.1, 200).unwrap();
        let c = solve_value_coeffs(&short_horizon(0.1), &Pattern::zero(), &g).unwrap();
        assert!(c.mu.iter().all(|m| (m - 1.0).abs() < 1e-14));
        assert!(c.gamma.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn core_subsystem_matches_full_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut m = tracking_params(0.0);
            m.r_alpha = rng.random_range(0.5..3.0);
            m.lambda = rng.random_range(0.0..=1.0) * m.lambda_max();
            let p = m.validate().unwrap();
            let g = GridConfig::new(1.0, 150).unwrap();
            let pat = Pattern::new(
                TimeFunction::sinusoid(rng.random_range(-1.0..1.0), 7.0, 0.2),
                TimeFunction::constant(rng.random_range(-1.0..1.0)),
            );
            let full = solve_value_coeffs(&p, &pat, &g).unwrap();
            let core = solve_core_coeffs(&p, &pat.f_c, &g).unwrap();
            assert_eq!(full.mu, core.mu);
            assert_eq!(full.eta, core.eta);
            assert_eq!(full.rho, core.rho);
        }
    }

    #[test]
    fn grid_refinement_is_stable() {
        let p = tracking_params(0.075).validate().unwrap();
        let pat = sin_pattern(0.5);
        let g = GridConfig::new(1.0, 1000).unwrap();
        let coarse = solve_value_coeffs(&p, &pat, &g).unwrap();
        let fine = solve_value_coeffs(&p, &pat, &g.refined()).unwrap();
        for ((_, a), (_, b)) in coarse.curves().iter().zip(fine.curves().iter()) {
            let diff = a
                .iter()
                .enumerate()
                .map(|(k, v)| (v - b[2 * k]).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-6, "diff {diff}");
        }
    }
}
