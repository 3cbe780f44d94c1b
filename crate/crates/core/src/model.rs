//! Problem constants, time-function representations and parameter validation.
//!
//! The controlled state is one-dimensional velocity `V` and position `Y`:
//!
//! ```text
//! dV = alpha dt + sigma_B dB
//! dY = (V + beta) dt + sigma_W dW
//! ```
//!
//! with running cost `r_alpha/2 alpha^2 + r_beta/2 beta^2 + r_v/2 (V - vbar(t))^2`
//! and terminal cost `t_v/2 (V_T - vbar_T)^2`. The misdirection pattern
//! `(f_c, f_d)` describes the alternative hypothesis `beta = f_c(t) y + f_d(t)`.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack accepted at the ends of `[0, T]` to absorb rounding in `k * h`.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TimeFunction {
    Constant {
        value: f64,
    },
    /// `a + b t`
    Affine {
        a: f64,
        b: f64,
    },
    /// `amp * sin(omega t + phase)`
    Sinusoid {
        amp: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Values on the uniform grid over `[0, horizon]`, linearly interpolated.
    GridSampled {
        horizon: f64,
        values: Vec<f64>,
    },
}

impl TimeFunction {
    pub fn constant(value: f64) -> Self {
        TimeFunction::Constant { value }
    }

    pub fn zero() -> Self {
        TimeFunction::Constant { value: 0.0 }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        TimeFunction::Affine { a, b }
    }

    pub fn sinusoid(amp: f64, omega: f64, phase: f64) -> Self {
        TimeFunction::Sinusoid { amp, omega, phase }
    }

    pub fn grid_sampled(grid: &GridConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        Ok(TimeFunction::GridSampled {
            horizon: grid.horizon(),
            values,
        })
    }

    /// Evaluates without a domain check. Grid-sampled functions clamp to
    /// their end values outside `[0, horizon]`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Affine { a, b } => a + b * t,
            TimeFunction::Sinusoid { amp, omega, phase } => amp * (omega * t + phase).sin(),
            TimeFunction::GridSampled { horizon, values } => interpolate(values, *horizon, t),
        }
    }

    /// Evaluates at `t`, rejecting times outside `[0, horizon]`.
    pub fn eval_checked(&self, t: f64, horizon: f64) -> Result<f64> {
        check_domain(t, horizon)?;
        Ok(self.eval(t.clamp(0.0, horizon)))
    }

    /// Values at every grid node.
    pub fn sample_values(&self, grid: &GridConfig) -> Vec<f64> {
        match self {
            TimeFunction::GridSampled { values, horizon }
                if values.len() == grid.n_nodes() && *horizon == grid.horizon() =>
            {
                values.clone()
            }
            _ => grid.times().map(|t| self.eval(t)).collect(),
        }
    }

    pub fn sample(&self, grid: &GridConfig) -> TimeFunction {
        TimeFunction::GridSampled {
            horizon: grid.horizon(),
            values: self.sample_values(grid),
        }
    }

    /// True when the function vanishes at every node of `grid`.
    pub fn is_zero_on(&self, grid: &GridConfig) -> bool {
        match self {
            TimeFunction::Constant { value } => *value == 0.0,
            _ => self.sample_values(grid).iter().all(|v| *v == 0.0),
        }
    }
}

pub(crate) fn check_domain(t: f64, horizon: f64) -> Result<()> {
    let slack = DOMAIN_SLACK * horizon.abs().max(1.0);
    if !(t >= -slack && t <= horizon + slack) {
        return Err(Error::OutOfDomain { t, horizon });
    }
    Ok(())
}

/// Linear interpolation of uniformly spaced `values` on `[0, horizon]`.
pub(crate) fn interpolate(values: &[f64], horizon: f64, t: f64) -> f64 {
    let n = values.len() - 1;
    if n == 0 {
        return values[0];
    }
    let s = (t / horizon * n as f64).clamp(0.0, n as f64);
    let nearest = s.round();
    if (s - nearest).abs() < 1e-9 {
        return values[nearest as usize];
    }
    let k = (s.floor() as usize).min(n - 1);
    let w = s - k as f64;
    values[k] + w * (values[k + 1] - values[k])
}

/// The misdirection pair defining the alternative hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub f_c: TimeFunction,
    pub f_d: TimeFunction,
}

impl Pattern {
    pub fn new(f_c: TimeFunction, f_d: TimeFunction) -> Self {
        Pattern { f_c, f_d }
    }

    pub fn zero() -> Self {
        Pattern::new(TimeFunction::zero(), TimeFunction::zero())
    }

    /// `f_c` only, with `f_d = 0`.
    pub fn slope_only(f_c: TimeFunction) -> Self {
        Pattern::new(f_c, TimeFunction::zero())
    }
}

/// Uniform time grid `t_k = k T / N_T`, `k = 0..=N_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    horizon: f64,
    n_steps: usize,
}

impl GridConfig {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::NonPositiveHorizon(horizon));
        }
        if n_steps < 2 {
            return Err(Error::InvalidGrid(n_steps));
        }
        Ok(GridConfig { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }

    /// Same horizon with twice as many steps.
    pub fn refined(&self) -> GridConfig {
        GridConfig {
            horizon: self.horizon,
            n_steps: 2 * self.n_steps,
        }
    }

    /// Trapezoid rule over the grid nodes.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n_nodes());
        let n = values.len() - 1;
        let inner: f64 = values[1..n].iter().sum();
        self.step() * (0.5 * (values[0] + values[n]) + inner)
    }

    /// Trapezoid weights, so that `trapezoid(v) == sum_k w_k v_k`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.n_nodes()];
        w[0] = 0.5 * h;
        w[self.n_steps] = 0.5 * h;
        w
    }

    pub(crate) fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{what} has {len} nodes, grid has {}",
                self.n_nodes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub horizon: f64,
    pub sigma_b: f64,
    pub sigma_w: f64,
    pub r_alpha: f64,
    pub r_beta: f64,
    pub r_v: f64,
    pub t_v: f64,
    pub vbar_terminal: f64,
    pub vbar: TimeFunction,
    pub lambda: f64,
    pub v0: f64,
    pub y0: f64,
}

impl ModelParams {
    /// Largest admissible misdirection intensity, `r_beta * sigma_W^2`.
    pub fn lambda_max(&self) -> f64 {
        self.r_beta * self.sigma_w * self.sigma_w
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(self) -> Result<ValidatedParams> {
        validate_params(self)
    }
}

/// Parameters that passed [`validate_params`]. Dereferences to [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedParams(ModelParams);

impl Deref for ValidatedParams {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl ValidatedParams {
    pub fn into_inner(self) -> ModelParams {
        self.0
    }

    /// `lambda / (r_beta sigma_W^2)`, the gain of `f_c` inside the optimal `beta`.
    pub fn misdirection_gain(&self) -> f64 {
        self.lambda / self.lambda_max()
    }

    pub fn sigma_w2(&self) -> f64 {
        self.sigma_w * self.sigma_w
    }

    pub fn sigma_b2(&self) -> f64 {
        self.sigma_b * self.sigma_b
    }

    /// True when `vbar = 0`, `vbar_T = 0`; with `f_d = 0` this makes `gamma = theta = 0`.
    pub fn has_zero_targets(&self, grid: &GridConfig) -> bool {
        self.vbar_terminal == 0.0 && self.vbar.is_zero_on(grid)
    }
}

/// Checks positivity of volatilities, weights and horizon, and
/// `0 <= lambda <= r_beta sigma_W^2`, which guarantees a global solution of
/// the coefficient system.
pub fn validate_params(params: ModelParams) -> Result<ValidatedParams> {
    if !(params.horizon > 0.0) || !params.horizon.is_finite() {
        return Err(Error::NonPositiveHorizon(params.horizon));
    }
    let positive = [
        ("sigma_B", params.sigma_b),
        ("sigma_W", params.sigma_w),
        ("r_alpha", params.r_alpha),
        ("r_beta", params.r_beta),
        ("r_v", params.r_v),
        ("t_v", params.t_v),
    ];
    for (name, value) in positive {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveWeight { name, value });
        }
    }
    for (name, value) in [
        ("vbar_T", params.vbar_terminal),
        ("v0", params.v0),
        ("y0", params.y0),
    ] {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} is not finite")));
        }
    }
    let upper = params.lambda_max();
    if !(params.lambda >= 0.0 && params.lambda <= upper) {
        return Err(Error::LambdaOutOfRange {
            lambda: params.lambda,
            upper,
        });
    }
    if let TimeFunction::GridSampled { horizon, values } = &params.vbar {
        if *horizon != params.horizon || values.len() < 2 {
            return Err(Error::GridMismatch(
                "vbar is sampled on a different horizon".into(),
            ));
        }
    }
    Ok(ValidatedParams(params))
}

#[cfg(test)]
pub(crate) use tests::tracking_params;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn tracking_params(lambda: f64) -> ModelParams {
        ModelParams {
            horizon: 1.0,
            sigma_b: 0.25,
            sigma_w: 0.25,
            r_alpha: 1.0,
            r_beta: 10.0,
            r_v: 1.0,
            t_v: 1.0,
            vbar_terminal: 1.0,
            vbar: TimeFunction::affine(2.0, -1.0),
            lambda,
            v0: 2.0,
            y0: 4.0,
        }
    }

    #[test]
    fn accepts_reference_parameters() {
        assert!(validate_params(tracking_params(0.075)).is_ok());
        assert!(validate_params(tracking_params(0.0)).is_ok());
        // closed upper bound
        assert!(validate_params(tracking_params(0.625)).is_ok());
    }

    #[test]
    fn rejects_lambda_above_bound() {
        match validate_params(tracking_params(0.7)) {
            Err(Error::LambdaOutOfRange { upper, .. }) => assert!((upper - 0.625).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            validate_params(tracking_params(-1e-9)),
            Err(Error::LambdaOutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_weights_and_horizon() {
        let mut p = tracking_params(0.0);
        p.r_v = 0.0;
        assert!(matches!(
            validate_params(p),
            Err(Error::NonPositiveWeight { name: "r_v", .. })
        ));
        let mut p = tracking_params(0.0);
        p.sigma_w = -0.1;
        assert!(matches!(
            validate_params(p),
            Err(Error::NonPositiveWeight { name: "sigma_W", .. })
        ));
        let mut p = tracking_params(0.0);
        p.horizon = 0.0;
        assert!(matches!(
            validate_params(p),
            Err(Error::NonPositiveHorizon(_))
        ));
    }

    #[test]
    fn time_function_values() {
        assert_eq!(TimeFunction::affine(2.0, -1.0).eval(0.5), 1.5);
        assert_eq!(TimeFunction::zero().eval(0.731), 0.0);
        let g = GridConfig::new(1.0, 2).unwrap();
        let f = TimeFunction::grid_sampled(&g, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.25), 0.5);
        assert_eq!(f.eval(1.0), 2.0);
        assert!(matches!(
            f.eval_checked(1.5, 1.0),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(f.eval_checked(-0.1, 1.0).is_err());
        let s = TimeFunction::sinusoid(0.5, 10.0 * std::f64::consts::PI, 0.0);
        assert!((s.eval(0.05) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_basics() {
        assert!(GridConfig::new(1.0, 1).is_err());
        let g = GridConfig::new(0.1, 200).unwrap();
        assert_eq!(g.time(200), 0.1);
        assert_eq!(g.n_nodes(), 201);
        let ones = vec![1.0; 201];
        assert!((g.trapezoid(&ones) - 0.1).abs() < 1e-15);
        let w: f64 = g.trapezoid_weights().iter().sum();
        assert!((w - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(lambda_frac in 0.0f64..=1.0, sw in 0.05f64..1.0, rb in 0.5f64..20.0) {
            let mut p = tracking_params(0.0);
            p.sigma_w = sw;
            p.r_beta = rb;
            p.lambda = lambda_frac * p.lambda_max();
            let once = validate_params(p).unwrap();
            let twice = validate_params(once.clone().into_inner()).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn grid_sampling_round_trips(n in 2usize..60, amp in -3.0f64..3.0, omega in 0.0f64..40.0, a in -2.0f64..2.0) {
            let g = GridConfig::new(0.7, n).unwrap();
            for f in [TimeFunction::sinusoid(amp, omega, 0.3), TimeFunction::affine(a, amp), TimeFunction::constant(a)] {
                let sampled = f.sample(&g);
                let direct = f.sample_values(&g);
                for (k, t) in g.times().enumerate() {
                    prop_assert_eq!(sampled.eval(t), direct[k]);
                }
            }
        }
    }
}
