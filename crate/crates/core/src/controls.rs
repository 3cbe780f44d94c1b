//! Semi-explicit optimal feedback controls.
//!
//! ```text
//! alpha(t, v, y) = -(mu v + eta y + gamma) / r_alpha
//! beta(t, v, y)  = -eta/r_beta v + (g f_c(t) - rho/r_beta) y + (g f_d(t) - theta/r_beta)
//! ```
//!
//! with `g = lambda / (r_beta sigma_W^2)`. Off-grid queries interpolate the
//! coefficient curves linearly.

use crate::error::Result;
use crate::model::{check_domain, interpolate, GridConfig, Pattern, ValidatedParams};
use crate::riccati::ValueCoeffs;

/// Affine control `v_coef * v + y_coef * y + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineControl {
    pub v_coef: f64,
    pub y_coef: f64,
    pub offset: f64,
}

impl AffineControl {
    #[inline]
    pub fn apply(&self, v: f64, y: f64) -> f64 {
        self.v_coef * v + self.y_coef * y + self.offset
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedbackPolicy<'a> {
    params: &'a ValidatedParams,
    pattern: &'a Pattern,
    coeffs: &'a ValueCoeffs,
    grid: GridConfig,
}

/// Which `beta` the simulator applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    Optimal,
    /// `beta = 0`: paths distributed as under the null hypothesis.
    Null,
}

impl<'a> FeedbackPolicy<'a> {
    pub fn new(
        params: &'a ValidatedParams,
        pattern: &'a Pattern,
        coeffs: &'a ValueCoeffs,
    ) -> Result<Self> {
        let grid = coeffs.grid;
        for (name, curve) in coeffs.curves() {
            grid.check_len(name, curve.len())?;
        }
        if (grid.horizon() - params.horizon).abs() > 1e-12 * params.horizon {
            return Err(crate::Error::GridMismatch(format!(
                "coefficients span [0, {}], model horizon is {}",
                grid.horizon(),
                params.horizon
            )));
        }
        Ok(FeedbackPolicy {
            params,
            pattern,
            coeffs,
            grid,
        })
    }

    pub fn params(&self) -> &'a ValidatedParams {
        self.params
    }

    pub fn pattern(&self) -> &'a Pattern {
        self.pattern
    }

    pub fn coeffs(&self) -> &'a ValueCoeffs {
        self.coeffs
    }

    pub fn grid(&self) -> GridConfig {
        self.grid
    }

    fn coeff(&self, curve: &[f64], t: f64) -> f64 {
        interpolate(curve, self.grid.horizon(), t)
    }

    pub fn alpha_control(&self, t: f64) -> Result<AffineControl> {
        check_domain(t, self.grid.horizon())?;
        let ra = self.params.r_alpha;
        let c = self.coeffs;
        Ok(AffineControl {
            v_coef: -self.coeff(&c.mu, t) / ra,
            y_coef: -self.coeff(&c.eta, t) / ra,
            offset: -self.coeff(&c.gamma, t) / ra,
        })
    }

    pub fn beta_control(&self, t: f64) -> Result<AffineControl> {
        check_domain(t, self.grid.horizon())?;
        let rb = self.params.r_beta;
        let g = self.params.misdirection_gain();
        let c = self.coeffs;
        Ok(AffineControl {
            v_coef: -self.coeff(&c.eta, t) / rb,
            y_coef: g * self.pattern.f_c.eval(t) - self.coeff(&c.rho, t) / rb,
            offset: g * self.pattern.f_d.eval(t) - self.coeff(&c.theta, t) / rb,
        })
    }

    pub fn optimal_alpha(&self, t: f64, v: f64, y: f64) -> Result<f64> {
        Ok(self.alpha_control(t)?.apply(v, y))
    }

    pub fn optimal_beta(&self, t: f64, v: f64, y: f64) -> Result<f64> {
        Ok(self.beta_control(t)?.apply(v, y))
    }

    /// Control gains at every grid node, without interpolation.
    pub fn node_controls(&self, mode: BetaMode) -> Vec<(AffineControl, AffineControl)> {
        let (ra, rb) = (self.params.r_alpha, self.params.r_beta);
        let g = self.params.misdirection_gain();
        let c = self.coeffs;
        self.grid
            .times()
            .enumerate()
            .map(|(k, t)| {
                let alpha = AffineControl {
                    v_coef: -c.mu[k] / ra,
                    y_coef: -c.eta[k] / ra,
                    offset: -c.gamma[k] / ra,
                };
                let beta = match mode {
                    BetaMode::Optimal => AffineControl {
                        v_coef: -c.eta[k] / rb,
                        y_coef: g * self.pattern.f_c.eval(t) - c.rho[k] / rb,
                        offset: g * self.pattern.f_d.eval(t) - c.theta[k] / rb,
                    },
                    BetaMode::Null => AffineControl {
                        v_coef: 0.0,
                        y_coef: 0.0,
                        offset: 0.0,
                    },
                };
                (alpha, beta)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tracking_params, TimeFunction};
    use crate::riccati::solve_value_coeffs;
    use proptest::prelude::*;

    fn flat_coeffs(grid: GridConfig, mu: f64, gamma: f64) -> ValueCoeffs {
        let n = grid.n_nodes();
        ValueCoeffs {
            grid,
            mu: vec![mu; n],
            eta: vec![0.0; n],
            rho: vec![0.0; n],
            gamma: vec![gamma; n],
            theta: vec![0.0; n],
            xi: vec![0.0; n],
        }
    }

    #[test]
    fn baseline_alpha() {
        let p = tracking_params(0.0).validate().unwrap();
        let g = GridConfig::new(1.0, 10).unwrap();
        let pat = Pattern::zero();
        let c = flat_coeffs(g, 1.0, 0.0);
        let pol = FeedbackPolicy::new(&p, &pat, &c).unwrap();
        assert_eq!(pol.optimal_alpha(0.3, 2.0, 5.0).unwrap(), -2.0);
        assert_eq!(pol.optimal_alpha(0.77, -1.5, 9.0).unwrap(), 1.5);
        let c = flat_coeffs(g, 1.0, 0.4);
        let pol = FeedbackPolicy::new(&p, &pat, &c).unwrap();
        assert_eq!(pol.optimal_alpha(0.5, 0.0, 0.0).unwrap(), -0.4);
        assert!(pol.optimal_alpha(1.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn beta_vanishes_without_misdirection() {
        let g = GridConfig::new(1.0, 200).unwrap();
        let p = tracking_params(0.075).validate().unwrap();
        let pat = Pattern::zero();
        let c = solve_value_coeffs(&p, &pat, &g).unwrap();
        let pol = FeedbackPolicy::new(&p, &pat, &c).unwrap();
        for (t, v, y) in [(0.0, 1.0, 2.0), (0.33, -4.0, 7.0), (1.0, 3.0, -1.0)] {
            assert!(pol.optimal_beta(t, v, y).unwrap().abs() < 1e-10);
        }
        let p0 = tracking_params(0.0).validate().unwrap();
        let pat = Pattern::new(TimeFunction::constant(0.5), TimeFunction::constant(1.0));
        let c = solve_value_coeffs(&p0, &pat, &g).unwrap();
        let pol = FeedbackPolicy::new(&p0, &pat, &c).unwrap();
        assert_eq!(pol.optimal_beta(0.42, 3.0, -2.0).unwrap(), 0.0);
    }

    #[test]
    fn full_intensity_matches_alternative_hypothesis() {
        let g = GridConfig::new(1.0, 200).unwrap();
        let p = tracking_params(0.625).validate().unwrap();
        let pat = Pattern::new(
            TimeFunction::sinusoid(0.5, 10.0 * std::f64::consts::PI, 0.0),
            TimeFunction::affine(0.2, -0.3),
        );
        let c = solve_value_coeffs(&p, &pat, &g).unwrap();
        let pol = FeedbackPolicy::new(&p, &pat, &c).unwrap();
        for (k, t) in g.times().enumerate().step_by(7) {
            let b = pol.beta_control(t).unwrap();
            assert!(b.v_coef.abs() < 1e-10, "node {k}");
            assert!((b.y_coef - pat.f_c.eval(t)).abs() < 1e-10);
            assert!((b.offset - pat.f_d.eval(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let p = tracking_params(0.0).validate().unwrap();
        let g = GridConfig::new(1.0, 10).unwrap();
        let mut c = flat_coeffs(g, 1.0, 0.0);
        c.rho.pop();
        let pat = Pattern::zero();
        assert!(FeedbackPolicy::new(&p, &pat, &c).is_err());
    }

    proptest! {
        #[test]
        fn controls_are_affine_in_state(t in 0.0f64..1.0, v in -5.0f64..5.0, y in -5.0f64..5.0, d in 0.1f64..2.0) {
            let g = GridConfig::new(1.0, 50).unwrap();
            let p = tracking_params(0.3).validate().unwrap();
            let pat = Pattern::new(TimeFunction::sinusoid(0.8, 4.0, 0.1), TimeFunction::constant(0.2));
            let c = solve_value_coeffs(&p, &pat, &g).unwrap();
            let pol = FeedbackPolicy::new(&p, &pat, &c).unwrap();
            for f in [
                |pol: &FeedbackPolicy, t, v, y| pol.optimal_alpha(t, v, y).unwrap(),
                |pol: &FeedbackPolicy, t, v, y| pol.optimal_beta(t, v, y).unwrap(),
            ] {
                let second_v = f(&pol, t, v + d, y) - 2.0 * f(&pol, t, v, y) + f(&pol, t, v - d, y);
                let second_y = f(&pol, t, v, y + d) - 2.0 * f(&pol, t, v, y) + f(&pol, t, v, y - d);
                prop_assert!(second_v.abs() < 1e-12);
                prop_assert!(second_y.abs() < 1e-12);
            }
        }
    }
}
