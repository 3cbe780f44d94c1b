//! Invariant suite behind the `validate` command, plus the random parameter
//! draws it shares with the acceptance tests.

use misdirection::controls::{BetaMode, FeedbackPolicy};
use misdirection::moments::{expected_log_lr, solve_moments};
use misdirection::red::{red_objective, PenaltyKind, RedConfig, SolverKind};
use misdirection::riccati::solve_value_coeffs;
use misdirection::sde::{monte_carlo_moments, monte_carlo_with, simulate_path_with, McOptions, SimOptions};
use misdirection::{Error, GridConfig, ModelParams, Pattern, TimeFunction, ValidatedParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult { name, passed, detail }
    }
}

/// A valid parameter draw. `simplified` zeroes the velocity targets.
pub fn random_params(rng: &mut ChaCha8Rng, simplified: bool) -> ModelParams {
    let horizon = rng.random_range(0.1..1.0);
    let mut m = ModelParams {
        horizon,
        sigma_b: rng.random_range(0.1..0.4),
        sigma_w: rng.random_range(0.15..0.4),
        r_alpha: rng.random_range(0.5..3.0),
        r_beta: rng.random_range(2.0..15.0),
        r_v: rng.random_range(0.5..2.0),
        t_v: rng.random_range(0.5..2.0),
        vbar_terminal: 0.0,
        vbar: TimeFunction::zero(),
        lambda: 0.0,
        v0: rng.random_range(-2.0..2.0),
        y0: rng.random_range(-3.0..3.0),
    };
    if !simplified {
        m.vbar_terminal = rng.random_range(-2.0..2.0);
        m.vbar = TimeFunction::affine(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    }
    m.lambda = rng.random_range(0.0..=1.0) * m.lambda_max();
    m
}

/// A smooth slope pattern of moderate size over `[0, horizon]`.
pub fn random_slope(rng: &mut ChaCha8Rng, horizon: f64) -> TimeFunction {
    if rng.random_bool(0.5) {
        TimeFunction::affine(rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0) / horizon)
    } else {
        let omega = rng.random_range(1.0..3.0) * std::f64::consts::PI / horizon;
        TimeFunction::sinusoid(rng.random_range(0.5..1.5), omega, rng.random_range(0.0..1.0))
    }
}

pub fn random_pattern(rng: &mut ChaCha8Rng, horizon: f64, with_offset: bool) -> Pattern {
    let f_c = random_slope(rng, horizon);
    let f_d = if with_offset {
        TimeFunction::affine(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    } else {
        TimeFunction::zero()
    };
    Pattern::new(f_c, f_d)
}

fn grid_for(horizon: f64, n: usize) -> GridConfig {
    GridConfig::new(horizon, n).expect("positive horizon and steps")
}

/// `lambda` just above `r_beta sigma_W^2` must be rejected.
pub fn parameter_guard(model: &ModelParams) -> CheckResult {
    let over = model.clone().with_lambda(model.lambda_max() * (1.0 + 1e-9));
    let rejected = matches!(over.validate(), Err(Error::LambdaOutOfRange { .. }));
    let at_edge = model.clone().with_lambda(model.lambda_max()).validate().is_ok();
    CheckResult::new(
        "parameter guard",
        rejected && at_edge,
        format!("lambda_max = {:.6e}; above rejected: {rejected}, at edge accepted: {at_edge}", model.lambda_max()),
    )
}

/// Coefficients on the grid and on its refinement must agree at shared nodes.
pub fn step_halving(params: &ValidatedParams, pattern: &Pattern, grid: &GridConfig, tol: f64) -> CheckResult {
    let name = "step-halving resolution";
    let run = || -> misdirection::Result<f64> {
        let coarse = solve_value_coeffs(params, pattern, grid)?;
        let fine = solve_value_coeffs(params, pattern, &grid.refined())?;
        let mut worst: f64 = 0.0;
        for ((_, a), (_, b)) in coarse.curves().iter().zip(fine.curves().iter()) {
            let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (k, ak) in a.iter().enumerate() {
                worst = worst.max((ak - b[2 * k]).abs() / scale);
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(d) => CheckResult::new(name, d < tol, format!("N = {}: max relative change {d:.3e} (tol {tol:.0e})", grid.n_steps())),
        Err(e) => CheckResult::new(name, false, format!("N = {}: {e}", grid.n_steps())),
    }
}

fn max_beta_gap(
    params: &ValidatedParams,
    pattern: &Pattern,
    grid: &GridConfig,
    rng: &mut ChaCha8Rng,
    queries: usize,
    target: impl Fn(f64, f64) -> f64,
) -> misdirection::Result<(f64, f64)> {
    let coeffs = solve_value_coeffs(params, pattern, grid)?;
    let policy = FeedbackPolicy::new(params, pattern, &coeffs)?;
    let mut gap: f64 = 0.0;
    for _ in 0..queries {
        let t = rng.random_range(0.0..=params.horizon);
        let v = rng.random_range(-5.0..5.0);
        let y = rng.random_range(-5.0..5.0);
        gap = gap.max((policy.optimal_beta(t, v, y)? - target(t, y)).abs());
    }
    let cross = coeffs
        .eta
        .iter()
        .chain(&coeffs.rho)
        .chain(&coeffs.theta)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((cross, gap))
}

/// With no misdirection incentive or no pattern the deceptive control vanishes.
pub fn no_incentive(draws: usize, queries: usize, n_steps: usize, seed: u64) -> CheckResult {
    let name = "no-incentive null control";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cross, mut gap) = (0.0f64, 0.0f64);
    for i in 0..draws {
        let mut m = random_params(&mut rng, false);
        let mut pattern = random_pattern(&mut rng, m.horizon, true);
        if i % 2 == 0 {
            m.lambda = 0.0;
        } else {
            pattern = Pattern::zero();
        }
        let params = m.validate().expect("draw is valid");
        match max_beta_gap(&params, &pattern, &grid_for(params.horizon, n_steps), &mut rng, queries, |_, _| 0.0) {
            Ok((c, g)) => {
                cross = cross.max(c);
                gap = gap.max(g);
            }
            Err(e) => return CheckResult::new(name, false, format!("draw {i}: {e}")),
        }
    }
    CheckResult::new(
        name,
        cross < 1e-8 && gap < 1e-8,
        format!("{draws} draws: max |eta|,|rho|,|theta| = {cross:.2e}, max |beta| = {gap:.2e}"),
    )
}

/// At `lambda = r_beta sigma_W^2` the deceptive control is the pattern itself.
pub fn full_intensity(draws: usize, queries: usize, n_steps: usize, seed: u64) -> CheckResult {
    let name = "full-intensity decoupling";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = 0.0f64;
    for i in 0..draws {
        let m = random_params(&mut rng, false);
        let m = m.clone().with_lambda(m.lambda_max());
        let pattern = random_pattern(&mut rng, m.horizon, true);
        let params = m.validate().expect("draw is valid");
        let target = |t: f64, y: f64| pattern.f_c.eval(t) * y + pattern.f_d.eval(t);
        match max_beta_gap(&params, &pattern, &grid_for(params.horizon, n_steps), &mut rng, queries, target) {
            Ok((_, g)) => gap = gap.max(g),
            Err(e) => return CheckResult::new(name, false, format!("draw {i}: {e}")),
        }
    }
    CheckResult::new(name, gap < 1e-8, format!("{draws} draws: max |beta - (f_c y + f_d)| = {gap:.2e}"))
}

/// Scales `f_c` so that the noise-free `(1/sigma_W^2) int (f_c y)^2 dt` equals `target`.
pub fn damp_pattern(params: &ValidatedParams, f_c: &TimeFunction, grid: &GridConfig, target: f64) -> misdirection::Result<TimeFunction> {
    let pattern = Pattern::slope_only(f_c.clone());
    let coeffs = solve_value_coeffs(params, &pattern, grid)?;
    let policy = FeedbackPolicy::new(params, &pattern, &coeffs)?;
    let opts = SimOptions {
        beta_mode: BetaMode::Null,
        noise: false,
    };
    let path = simulate_path_with(&policy, grid, 0, opts)?;
    let values = f_c.sample_values(grid);
    let energy: Vec<f64> = values.iter().zip(&path.y_path).map(|(f, y)| (f * y).powi(2)).collect();
    let variance = grid.trapezoid(&energy) / params.sigma_w2();
    let scale = if variance > 0.0 { (target / variance).sqrt() } else { 0.0 };
    TimeFunction::grid_sampled(grid, values.iter().map(|v| v * scale).collect())
}

/// Under the null hypothesis the likelihood ratio has mean one.
pub fn martingale(
    params: &ValidatedParams,
    f_c: &TimeFunction,
    grid: &GridConfig,
    n_paths: usize,
    seed: u64,
    threads: Option<usize>,
    n_se: f64,
) -> CheckResult {
    let name = "likelihood-ratio normalization";
    let run = || -> misdirection::Result<(f64, f64)> {
        let damped = damp_pattern(params, f_c, grid, 0.25)?;
        let pattern = Pattern::slope_only(damped);
        let coeffs = solve_value_coeffs(params, &pattern, grid)?;
        let policy = FeedbackPolicy::new(params, &pattern, &coeffs)?;
        let opts = McOptions {
            sim: SimOptions {
                beta_mode: BetaMode::Null,
                noise: true,
            },
            threads,
        };
        let s = monte_carlo_with(&policy, &pattern, grid, n_paths, seed, opts)?;
        Ok((s.mean_likelihood_ratio, s.se_likelihood_ratio))
    };
    match run() {
        Ok((mean, se)) => CheckResult::new(
            name,
            (mean - 1.0).abs() <= n_se * se,
            format!("{n_paths} paths: mean L_T = {mean:.5} +- {se:.5}"),
        ),
        Err(e) => CheckResult::new(name, false, e.to_string()),
    }
}

/// Worst deviation in standard errors between Monte Carlo and the moment curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossOracle {
    pub log_lr_z: f64,
    pub moment_z: f64,
}

pub fn cross_oracle_one(
    params: &ValidatedParams,
    f_c: &TimeFunction,
    grid: &GridConfig,
    n_paths: usize,
    seed: u64,
    threads: Option<usize>,
) -> misdirection::Result<CrossOracle> {
    let pattern = Pattern::slope_only(f_c.clone());
    let coeffs = solve_value_coeffs(params, &pattern, grid)?;
    let policy = FeedbackPolicy::new(params, &pattern, &coeffs)?;
    let moments = solve_moments(params, &coeffs, f_c, grid)?;
    let exact = expected_log_lr(params, &coeffs, f_c, &moments, grid)?;
    let opts = McOptions {
        sim: SimOptions::default(),
        threads,
    };
    let mc = monte_carlo_with(&policy, &pattern, grid, n_paths, seed, opts)?;
    let log_lr_z = (mc.mean_log_lr - exact).abs() / mc.se_log_lr.max(f64::MIN_POSITIVE);
    let n = grid.n_steps();
    let nodes: Vec<usize> = (1..=5).map(|i| i * n / 5).collect();
    let est = monte_carlo_moments(&policy, grid, n_paths, seed, &nodes, opts)?;
    let mut moment_z: f64 = 0.0;
    for e in &est {
        let exact = [moments.h20[e.node], moments.h11[e.node], moments.h02[e.node]];
        for ((mean, se), x) in e.mean.iter().zip(&e.se).zip(&exact) {
            moment_z = moment_z.max((mean - x).abs() / se.max(f64::MIN_POSITIVE));
        }
    }
    Ok(CrossOracle { log_lr_z, moment_z })
}

/// Monte Carlo against the moment equations on random simplified configurations.
pub fn cross_oracle(draws: usize, n_steps: usize, n_paths: usize, seed: u64, threads: Option<usize>, n_se: f64) -> CheckResult {
    let name = "moment cross-oracle";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lz, mut mz) = (0.0f64, 0.0f64);
    for i in 0..draws {
        let params = random_params(&mut rng, true).validate().expect("draw is valid");
        let f_c = random_slope(&mut rng, params.horizon);
        let grid = grid_for(params.horizon, n_steps);
        match cross_oracle_one(&params, &f_c, &grid, n_paths, rng.random(), threads) {
            Ok(c) => {
                lz = lz.max(c.log_lr_z);
                mz = mz.max(c.moment_z);
            }
            Err(e) => return CheckResult::new(name, false, format!("draw {i}: {e}")),
        }
    }
    CheckResult::new(
        name,
        lz <= n_se && mz <= n_se,
        format!("{draws} configs x {n_paths} paths: worst log-LR gap {lz:.2} SE, worst moment gap {mz:.2} SE (limit {n_se})"),
    )
}

/// Central-difference gradient at the zero pattern and the objective along
/// random unit directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPatternProbe {
    pub grad_max: f64,
    /// `J(eps u) - J(0)` for each direction.
    pub rises: Vec<f64>,
}

pub fn probe_zero_pattern(
    params: &ValidatedParams,
    grid: &GridConfig,
    rng: &mut ChaCha8Rng,
    directions: usize,
    eps: f64,
) -> misdirection::Result<ZeroPatternProbe> {
    let config = RedConfig::new(0.0, PenaltyKind::Quadratic, TimeFunction::zero(), SolverKind::Fpi);
    let n = grid.n_nodes();
    let zero = vec![0.0; n];
    let j0 = red_objective(params, &zero, &config, grid)?;
    let h = 1e-4;
    let mut grad_max: f64 = 0.0;
    for k in 0..n {
        let (mut up, mut dn) = (zero.clone(), zero.clone());
        up[k] = h;
        dn[k] = -h;
        let g = (red_objective(params, &up, &config, grid)? - red_objective(params, &dn, &config, grid)?) / (2.0 * h);
        grad_max = grad_max.max(g.abs());
    }
    let mut rises = Vec::with_capacity(directions);
    for _ in 0..directions {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = grid.trapezoid(&u.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
        let f: Vec<f64> = u.iter().map(|v| eps * v / norm).collect();
        rises.push(red_objective(params, &f, &config, grid)? - j0);
    }
    Ok(ZeroPatternProbe { grad_max, rises })
}

/// Above half intensity the zero pattern is a strict local minimizer of the
/// unpenalized red objective.
pub fn zero_pattern_minimizer(draws: usize, n_steps: usize, seed: u64) -> CheckResult {
    let name = "zero pattern local minimizer";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut grad, mut lowest) = (0.0f64, f64::INFINITY);
    for i in 0..draws {
        let m = random_params(&mut rng, true);
        let share = rng.random_range(0.51..=1.0);
        let m = m.clone().with_lambda(m.lambda_max() * share);
        let params = m.validate().expect("draw is valid");
        let grid = grid_for(params.horizon, n_steps);
        match probe_zero_pattern(&params, &grid, &mut rng, 10, 1e-2) {
            Ok(p) => {
                grad = grad.max(p.grad_max);
                lowest = p.rises.iter().fold(lowest, |m, v| m.min(*v));
            }
            Err(e) => return CheckResult::new(name, false, format!("draw {i}: {e}")),
        }
    }
    CheckResult::new(
        name,
        grad < 1e-4 && lowest > 0.0,
        format!("{draws} draws: max |dJ/df| = {grad:.2e}, min J(eps u) - J(0) = {lowest:.3e}"),
    )
}

/// Every check, parameterized by the run configuration.
pub fn run_suite(
    model: &ModelParams,
    params: &ValidatedParams,
    pattern: &Pattern,
    grid: &GridConfig,
    n_paths: usize,
    seed: u64,
    threads: Option<usize>,
) -> Vec<CheckResult> {
    let mut out = vec![parameter_guard(model), step_halving(params, pattern, grid, 1e-6)];
    out.push(no_incentive(20, 100, grid.n_steps().min(400), seed ^ 1));
    out.push(full_intensity(20, 100, grid.n_steps().min(400), seed ^ 2));
    out.push(martingale(params, &pattern.f_c, grid, 20_000, seed ^ 3, threads, 3.0));
    out.push(cross_oracle(3, grid.n_steps(), n_paths, seed ^ 4, threads, 4.0));
    out.push(zero_pattern_minimizer(3, 100, seed ^ 5));
    out
}
