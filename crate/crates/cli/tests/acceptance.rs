//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test -p misdirection-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use misdirection::controls::FeedbackPolicy;
use misdirection::moments::{expected_log_lr, solve_moments};
use misdirection::red::{euler_objective, nn_gradient, optimize, relative_l2, MlpNetwork, PenaltyKind, RedConfig, SolverKind};
use misdirection::riccati::solve_value_coeffs;
use misdirection::sde::monte_carlo;
use misdirection::stackelberg::{baseline, play_rounds, GameOptions};
use misdirection::{GridConfig, ModelParams, Pattern, TimeFunction, ValidatedParams};
use misdirection_cli::checks;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(got: f64, target: f64, tol: f64) -> bool {
    (got - target).abs() <= tol
}

fn tracking_params(lambda: f64) -> ValidatedParams {
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
    .validate()
    .unwrap()
}

fn tracking_pattern() -> Pattern {
    Pattern::slope_only(TimeFunction::sinusoid(1.0, 10.0 * std::f64::consts::PI, 0.0))
}

fn short_horizon_params() -> ValidatedParams {
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
        lambda: 0.1,
        v0: 1.0,
        y0: 2.0,
    }
    .validate()
    .unwrap()
}

fn trade_off() -> Outcome {
    let grid = GridConfig::new(1.0, 1000).unwrap();
    let pattern = tracking_pattern();
    let cases = [(0.0, 0.33, -96.98), (0.025, 0.44, -87.26), (0.05, 0.78, -78.14), (0.075, 1.32, -69.55)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (lambda, cost, log_lr) in cases {
        let params = tracking_params(lambda);
        let coeffs = solve_value_coeffs(&params, &pattern, &grid).unwrap();
        let policy = FeedbackPolicy::new(&params, &pattern, &coeffs).unwrap();
        let s = monte_carlo(&policy, &pattern, &grid, 10_000, SEED).unwrap();
        ok &= within(s.mean_primary_cost, cost, (0.05 * cost).max(3.0 * s.se_primary_cost));
        ok &= within(s.mean_log_lr, log_lr, (0.03 * log_lr.abs()).max(3.0 * s.se_log_lr));
        parts.push(format!("lambda {lambda}: J {:.3} logL {:.2}", s.mean_primary_cost, s.mean_log_lr));
    }
    outcome(ok, parts.join("; "))
}

fn moment_baseline() -> Outcome {
    let params = short_horizon_params();
    let grid = GridConfig::new(0.1, 200).unwrap();
    let f = TimeFunction::constant(1.0);
    let coeffs = solve_value_coeffs(&params, &Pattern::slope_only(f.clone()), &grid).unwrap();
    let m = solve_moments(&params, &coeffs, &f, &grid).unwrap();
    let v = expected_log_lr(&params, &coeffs, &f, &m, &grid).unwrap();
    outcome(within(v, 23.21, 0.01 * 23.21), format!("E log L = {v:.4} (target 23.21)"))
}

type RedRuns = BTreeMap<(&'static str, u32), [Vec<f64>; 3]>;

/// The four penalty settings, each solved by FPI, FBS and NN.
fn red_runs() -> (RedRuns, BTreeMap<(&'static str, u32), [f64; 3]>) {
    let params = short_horizon_params();
    let grid = GridConfig::new(0.1, 200).unwrap();
    let mut curves = BTreeMap::new();
    let mut values = BTreeMap::new();
    for (name, kind) in [("quadratic", PenaltyKind::Quadratic), ("logarithmic", PenaltyKind::Logarithmic)] {
        for lreg in [0.1, 1.0] {
            let mut c = Vec::new();
            let mut v = [0.0; 3];
            for (i, solver) in [SolverKind::Fpi, SolverKind::Fbs, SolverKind::Nn].into_iter().enumerate() {
                let config = RedConfig::new(lreg, kind, TimeFunction::constant(1.0), solver);
                let r = optimize(&params, &config, &grid, SEED).unwrap();
                v[i] = r.final_expected_log_lr;
                c.push(r.f_c_values().to_vec());
            }
            let key = (name, (lreg * 10.0) as u32);
            curves.insert(key, c.try_into().unwrap());
            values.insert(key, v);
        }
    }
    (curves, values)
}

fn optimized_values(values: &BTreeMap<(&'static str, u32), [f64; 3]>) -> Outcome {
    let targets = [
        (("quadratic", 1), 0.04_f64),
        (("quadratic", 10), 2.17),
        (("logarithmic", 1), 0.50),
        (("logarithmic", 10), 5.00),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (key, target) in targets {
        let [fpi, fbs, nn] = values[&key];
        let tight = (0.1 * target).max(0.05);
        let loose = (0.2 * target).max(0.05);
        ok &= within(fpi, target, tight) && within(fbs, target, tight) && within(nn, target, loose);
        parts.push(format!("{} {:.1}: {fpi:.3}/{fbs:.3}/{nn:.3}", key.0, key.1 as f64 / 10.0));
    }
    outcome(ok, format!("FPI/FBS/NN {}", parts.join("; ")))
}

fn solver_consistency(curves: &RedRuns) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (key, [fpi, fbs, nn]) in curves {
        let a = relative_l2(fpi, fbs);
        let b = relative_l2(nn, fbs);
        ok &= a < 0.05 && b < 0.10;
        parts.push(format!("{} {:.1}: {:.2}%/{:.2}%", key.0, key.1 as f64 / 10.0, 100.0 * a, 100.0 * b));
    }
    outcome(ok, format!("FPI-FBS/NN-FBS {}", parts.join("; ")))
}

fn from_check(r: checks::CheckResult) -> Outcome {
    outcome(r.passed, r.detail)
}

fn martingale() -> Outcome {
    let params = tracking_params(0.05);
    let grid = GridConfig::new(1.0, 1000).unwrap();
    from_check(checks::martingale(&params, &tracking_pattern().f_c, &grid, 20_000, SEED, None, 3.0))
}

fn nn_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let params = checks::random_params(&mut rng, true).validate().unwrap();
        let grid = GridConfig::new(params.horizon, 100).unwrap();
        let kind = if rng.random_bool(0.5) { PenaltyKind::Logarithmic } else { PenaltyKind::Quadratic };
        let config = RedConfig::new(rng.random_range(0.0..2.0), kind, TimeFunction::constant(1.0), SolverKind::Nn);
        let mut net = MlpNetwork::random(params.horizon, kind == PenaltyKind::Logarithmic, rng.random());
        let grad = nn_gradient(&net, &params, &config, &grid).unwrap();
        let theta = net.params();
        for _ in 0..20 {
            let i = rng.random_range(0..theta.len());
            let h = 1e-6;
            let mut eval = |delta: f64| {
                let mut p = theta.clone();
                p[i] += delta;
                net.set_params(&p);
                euler_objective(&params, &net.outputs(&grid), &config, &grid).unwrap().objective
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
            worst = worst.max(err);
        }
        net.set_params(&theta);
    }
    outcome(worst < 1e-4, format!("100 parameters over 5 configs: worst relative error {worst:.2e}"))
}

fn game_trend() -> Outcome {
    let params = ModelParams {
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
    .unwrap();
    let grid = GridConfig::new(0.1, 200).unwrap();
    let red = RedConfig::new(1.5, PenaltyKind::Quadratic, TimeFunction::zero(), SolverKind::Nn);
    let opts = GameOptions::new(3, 10_000, SEED);
    let base = baseline(&params, &grid, &opts).unwrap();
    let rounds = play_rounds(&params, &TimeFunction::affine(0.6, -20.0), &red, &grid, &opts).unwrap();
    let jb = base.mc.mean_primary_cost;
    let (j1, j3) = (rounds[0].mc.mean_primary_cost, rounds[2].mc.mean_primary_cost);
    let (l1, l3) = (rounds[0].mc.mean_log_lr, rounds[2].mc.mean_log_lr);
    let ok = l3.abs() < l1.abs()
        && (j3 - jb).abs() < (j1 - jb).abs()
        && (j3 - jb).abs() <= 0.15 * jb.abs()
        && l3.abs() <= 0.15 * l1.abs();
    outcome(
        ok,
        format!("baseline J {jb:.4}; round 1 J {j1:.4} logL {l1:.3}; round 3 J {j3:.4} logL {l3:.3}"),
    )
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(path.extension().and_then(|e| e.to_str()), Some("csv" | "json")) {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_misdirection");
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"model.T": 0.1, "model.sigma_B": 0.15, "model.sigma_W": 0.15, "model.r_alpha": 2,
            "model.V0": 1, "model.Y0": 2, "model.vbar_T": 0, "model.vbar": {"type": "constant", "value": 0},
            "model.lambda": 0.2, "grid.n_steps": 100, "pattern.f_c": {"type": "affine", "a": 0.6, "b": -20},
            "red.lambda_reg": 1.5, "red.solver": "nn", "red.nn_epochs": 50, "mc.paths": 2000, "game.n_rounds": 2}"#,
    )
    .unwrap();
    let mut files = 0;
    for cmd in ["blue-solve", "red-optimize", "stackelberg"] {
        let mut trees = Vec::new();
        for threads in ["1", "4", "4"] {
            let out = tmp.path().join(format!("{cmd}-{threads}-{}", trees.len()));
            let status = Command::new(bin)
                .args([cmd, "--config", config.to_str().unwrap(), "--seed", "9", "--threads", threads, "--out"])
                .arg(&out)
                .output()
                .unwrap()
                .status;
            if !status.success() {
                return outcome(false, format!("{cmd} exited with {status}"));
            }
            trees.push(read_tree(&out));
        }
        if trees[0] != trees[1] || trees[1] != trees[2] {
            return outcome(false, format!("{cmd}: outputs differ between runs"));
        }
        files += trees[0].len();
    }
    outcome(true, format!("3 commands x 3 runs (threads 1, 4, 4): {files} CSV/JSON files identical"))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, run: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = run();
        println!(
            "criterion {n:>2} [{}] {name}: {} ({:.1}s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        results.push((n, name, o));
    };
    record(1, "trade-off table", &mut trade_off);
    record(2, "moment baseline", &mut moment_baseline);
    let mut curves = RedRuns::new();
    record(3, "optimized values (all solver runs)", &mut || {
        let (c, values) = red_runs();
        curves = c;
        optimized_values(&values)
    });
    record(4, "solver consistency", &mut || solver_consistency(&curves));
    record(5, "no-incentive null control", &mut || from_check(checks::no_incentive(50, 100, 400, SEED)));
    record(6, "full-intensity decoupling", &mut || from_check(checks::full_intensity(50, 100, 400, SEED + 1)));
    record(7, "zero pattern local minimizer", &mut || from_check(checks::zero_pattern_minimizer(10, 100, SEED + 2)));
    record(8, "Monte Carlo vs moment equations", &mut || {
        from_check(checks::cross_oracle(10, 1000, 10_000, SEED + 3, None, 3.0))
    });
    record(9, "likelihood-ratio normalization", &mut martingale);
    record(10, "network gradient", &mut nn_gradient_check);
    record(11, "repeated-game trend", &mut game_trend);
    record(12, "determinism", &mut determinism);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
