//! The four subcommands. Each writes its artifacts into the output directory.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use misdirection::controls::FeedbackPolicy;
use misdirection::moments::{expected_log_lr, solve_moments};
use misdirection::red::{optimize, OptimizationReport, PenaltyKind, SolverKind};
use misdirection::riccati::{solve_value_coeffs, ValueCoeffs};
use misdirection::sde::{monte_carlo_with, path_seed, simulate_path, McOptions, McSummary, SimOptions, Trajectory};
use misdirection::stackelberg::{baseline, play_rounds, GameOptions};
use misdirection::{GridConfig, Pattern, ValidatedParams};
use serde::Serialize;

use crate::checks::{run_suite, CheckResult};
use crate::config::{ConfigError, RunConfig};
use crate::output::{ensure_dir, write_json, write_text, Csv};
use crate::plot::{render, Chart, Series};

/// Returned when `validate` ran but some check failed (exit code 2).
#[derive(Debug)]
pub struct ChecksFailed(pub usize);

impl fmt::Display for ChecksFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation check(s) failed", self.0)
    }
}

impl std::error::Error for ChecksFailed {}

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub plots: bool,
}

impl Context {
    fn mc(&self) -> McOptions {
        McOptions {
            sim: SimOptions::default(),
            threads: self.config.threads,
        }
    }

    fn prepare(&self) -> Result<(ValidatedParams, GridConfig)> {
        let checked = self.config.check()?;
        ensure_dir(&self.out)?;
        // execution settings are left out so reruns elsewhere compare equal
        let mut recorded = self.config.clone();
        recorded.threads = None;
        recorded.output_dir = None;
        write_json(&self.out.join("config.json"), &recorded)?;
        Ok(checked)
    }
}

#[derive(Serialize)]
struct McReport<'a> {
    #[serde(flatten)]
    summary: &'a McSummary,
    /// Only available for the simplified model.
    expected_log_lr_moment: Option<f64>,
}

struct BlueArtifacts<'a> {
    params: &'a ValidatedParams,
    pattern: &'a Pattern,
    coeffs: &'a ValueCoeffs,
    summary: &'a McSummary,
    moment: Option<f64>,
    samples: &'a [Trajectory],
}

fn coeffs_csv(coeffs: &ValueCoeffs) -> Csv {
    let mut csv = Csv::new(&["t", "mu", "eta", "rho", "gamma", "theta", "xi"]);
    for (k, t) in coeffs.grid.times().enumerate() {
        csv.numeric_row(&[
            t,
            coeffs.mu[k],
            coeffs.eta[k],
            coeffs.rho[k],
            coeffs.gamma[k],
            coeffs.theta[k],
            coeffs.xi[k],
        ]);
    }
    csv
}

/// Per-node `(alpha, beta)` of a trajectory, with the terminal node filled in
/// from the feedback law at `T`.
fn node_controls(policy: &FeedbackPolicy<'_>, traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = traj.alpha_path.len();
    let (t, v, y) = (traj.times[n], traj.v_path[n], traj.y_path[n]);
    let mut alpha = traj.alpha_path.clone();
    let mut beta = traj.beta_path.clone();
    alpha.push(policy.optimal_alpha(t, v, y)?);
    beta.push(policy.optimal_beta(t, v, y)?);
    Ok((alpha, beta))
}

fn write_blue(dir: &Path, a: &BlueArtifacts<'_>, plots: bool) -> Result<()> {
    ensure_dir(dir)?;
    coeffs_csv(a.coeffs).write(&dir.join("coeffs.csv"))?;
    let policy = FeedbackPolicy::new(a.params, a.pattern, a.coeffs)?;
    let mut csv = Csv::new(&["t", "path_id", "v", "y", "alpha", "beta"]);
    let mut controls = Vec::with_capacity(a.samples.len());
    for (id, traj) in a.samples.iter().enumerate() {
        let (alpha, beta) = node_controls(&policy, traj)?;
        for k in 0..traj.times.len() {
            csv.row(&[
                crate::output::num(traj.times[k]),
                id.to_string(),
                crate::output::num(traj.v_path[k]),
                crate::output::num(traj.y_path[k]),
                crate::output::num(alpha[k]),
                crate::output::num(beta[k]),
            ]);
        }
        controls.push((alpha, beta));
    }
    csv.write(&dir.join("trajectories.csv"))?;
    write_json(
        &dir.join("mc_summary.json"),
        &McReport {
            summary: a.summary,
            expected_log_lr_moment: a.moment,
        },
    )?;
    if plots {
        let panels: [(&str, &str, Vec<&[f64]>); 4] = [
            ("velocity.svg", "V", a.samples.iter().map(|s| s.v_path.as_slice()).collect()),
            ("position.svg", "Y", a.samples.iter().map(|s| s.y_path.as_slice()).collect()),
            ("alpha.svg", "alpha", controls.iter().map(|c| c.0.as_slice()).collect()),
            ("beta.svg", "beta", controls.iter().map(|c| c.1.as_slice()).collect()),
        ];
        for (file, what, curves) in panels {
            let mut chart = Chart::new(&format!("{what} along sample paths"), "t", what);
            for (i, (traj, curve)) in a.samples.iter().zip(curves).enumerate() {
                chart = chart.with(Series::new(format!("path {i}"), &traj.times, curve));
            }
            write_text(&dir.join(file), &render(&chart))?;
        }
        let times: Vec<f64> = a.coeffs.grid.times().collect();
        let mut chart = Chart::new("value-function coefficients", "t", "value");
        for (name, curve) in a.coeffs.curves() {
            chart = chart.with(Series::new(name, &times, curve));
        }
        write_text(&dir.join("coeffs.svg"), &render(&chart))?;
    }
    Ok(())
}

fn moment_value(params: &ValidatedParams, pattern: &Pattern, coeffs: &ValueCoeffs, grid: &GridConfig) -> Result<Option<f64>> {
    if !params.has_zero_targets(grid) || !pattern.f_d.is_zero_on(grid) {
        return Ok(None);
    }
    let moments = solve_moments(params, coeffs, &pattern.f_c, grid)?;
    Ok(Some(expected_log_lr(params, coeffs, &pattern.f_c, &moments, grid)?))
}

fn samples(policy: &FeedbackPolicy<'_>, grid: &GridConfig, config: &RunConfig) -> Result<Vec<Trajectory>> {
    let n = config.sample_paths.min(config.mc_paths) as u64;
    Ok((0..n)
        .map(|i| simulate_path(policy, grid, path_seed(config.seed, i)))
        .collect::<misdirection::Result<Vec<_>>>()?)
}

pub fn blue_solve(ctx: &Context) -> Result<()> {
    let (params, grid) = ctx.prepare()?;
    let cfg = &ctx.config;
    let pattern = cfg.pattern();
    let coeffs = solve_value_coeffs(&params, &pattern, &grid)?;
    let policy = FeedbackPolicy::new(&params, &pattern, &coeffs)?;
    let summary = monte_carlo_with(&policy, &pattern, &grid, cfg.mc_paths, cfg.seed, ctx.mc())?;
    let moment = moment_value(&params, &pattern, &coeffs, &grid)?;
    let trajectories = samples(&policy, &grid, cfg)?;
    write_blue(
        &ctx.out,
        &BlueArtifacts {
            params: &params,
            pattern: &pattern,
            coeffs: &coeffs,
            summary: &summary,
            moment,
            samples: &trajectories,
        },
        ctx.plots,
    )?;
    println!(
        "J_primary = {:.6} +- {:.6}   E log L = {:.6} +- {:.6}",
        summary.mean_primary_cost, summary.se_primary_cost, summary.mean_log_lr, summary.se_log_lr
    );
    Ok(())
}

#[derive(Serialize)]
struct RedReport<'a> {
    solver: SolverKind,
    penalty: PenaltyKind,
    lambda_reg: f64,
    converged: bool,
    iterations: usize,
    expected_log_lr: f64,
    penalty_value: f64,
    objective: f64,
    objective_history: &'a [f64],
}

impl<'a> RedReport<'a> {
    fn new(cfg: &RunConfig, r: &'a OptimizationReport) -> Self {
        RedReport {
            solver: cfg.solver,
            penalty: cfg.penalty,
            lambda_reg: cfg.lambda_reg,
            converged: r.converged,
            iterations: r.iterations,
            expected_log_lr: r.final_expected_log_lr,
            penalty_value: r.final_penalty,
            objective: r.final_objective,
            objective_history: &r.objective_history,
        }
    }
}

fn write_red(dir: &Path, cfg: &RunConfig, grid: &GridConfig, report: &OptimizationReport, plots: bool) -> Result<()> {
    ensure_dir(dir)?;
    let mut csv = Csv::new(&["t", "f_c"]);
    for (t, f) in grid.times().zip(report.f_c_values()) {
        csv.numeric_row(&[t, *f]);
    }
    csv.write(&dir.join("fc_optimized.csv"))?;
    write_json(&dir.join("report.json"), &RedReport::new(cfg, report))?;
    if plots {
        let times: Vec<f64> = grid.times().collect();
        let chart = Chart::new("optimized pattern", "t", "f_c")
            .with(Series::new("optimized", &times, report.f_c_values()))
            .with(Series::new("initial", &times, &cfg.red().anchor(grid)));
        write_text(&dir.join("fc_optimized.svg"), &render(&chart))?;
    }
    Ok(())
}

pub fn red_optimize(ctx: &Context) -> Result<()> {
    let (params, grid) = ctx.prepare()?;
    let cfg = &ctx.config;
    let report = optimize(&params, &cfg.red(), &grid, cfg.seed)?;
    write_red(&ctx.out, cfg, &grid, &report, ctx.plots)?;
    println!(
        "E log L = {:.6}   penalty = {:.6e}   J_red = {:.6}   iterations = {}   converged = {}",
        report.final_expected_log_lr, report.final_penalty, report.final_objective, report.iterations, report.converged
    );
    Ok(())
}

#[derive(Serialize)]
struct RoundSummary {
    round: usize,
    mean_primary_cost: f64,
    se_primary_cost: f64,
    mean_log_lr: f64,
    se_log_lr: f64,
    expected_log_lr_moment: f64,
    red_expected_log_lr: f64,
    red_converged: bool,
    f_c: Vec<f64>,
}

#[derive(Serialize)]
struct GameSummary {
    baseline: RoundSummary,
    rounds: Vec<RoundSummary>,
}

pub fn stackelberg(ctx: &Context) -> Result<()> {
    let (params, grid) = ctx.prepare()?;
    let cfg = &ctx.config;
    if !cfg.f_d.is_zero_on(&grid) {
        return Err(ConfigError("stackelberg needs pattern.f_d = 0".into()).into());
    }
    let opts = GameOptions {
        n_rounds: cfg.n_rounds,
        mc_paths: cfg.mc_paths,
        seed: cfg.seed,
        sample_trajectories: cfg.sample_paths,
        mc: ctx.mc(),
    };
    let base = baseline(&params, &grid, &opts)?;
    let rounds = play_rounds(&params, &cfg.f_c, &cfg.red(), &grid, &opts)?;

    let zero: Vec<f64> = vec![0.0; grid.n_nodes()];
    let mut summary = GameSummary {
        baseline: RoundSummary {
            round: 0,
            mean_primary_cost: base.mc.mean_primary_cost,
            se_primary_cost: base.mc.se_primary_cost,
            mean_log_lr: base.mc.mean_log_lr,
            se_log_lr: base.mc.se_log_lr,
            expected_log_lr_moment: base.expected_log_lr_moment,
            red_expected_log_lr: 0.0,
            red_converged: true,
            f_c: zero,
        },
        rounds: Vec::with_capacity(rounds.len()),
    };
    for r in &rounds {
        let pattern = Pattern::slope_only(r.f_c_used.clone());
        let coeffs = solve_value_coeffs(&params, &pattern, &grid)?;
        let dir = ctx.out.join(format!("round_{}", r.round_index));
        write_blue(
            &dir,
            &BlueArtifacts {
                params: &params,
                pattern: &pattern,
                coeffs: &coeffs,
                summary: &r.mc,
                moment: Some(r.expected_log_lr_moment),
                samples: &r.sample_trajectories,
            },
            ctx.plots,
        )?;
        let mut red_cfg = cfg.clone();
        red_cfg.f_c_initial = r.f_c_used.clone();
        write_red(&dir, &red_cfg, &grid, &r.red_report, ctx.plots)?;
        summary.rounds.push(RoundSummary {
            round: r.round_index,
            mean_primary_cost: r.mc.mean_primary_cost,
            se_primary_cost: r.mc.se_primary_cost,
            mean_log_lr: r.mc.mean_log_lr,
            se_log_lr: r.mc.se_log_lr,
            expected_log_lr_moment: r.expected_log_lr_moment,
            red_expected_log_lr: r.red_report.final_expected_log_lr,
            red_converged: r.red_report.converged,
            f_c: r.f_c_used.sample_values(&grid),
        });
        println!(
            "round {}: J_primary = {:.6}   E log L = {:.6}",
            r.round_index, r.mc.mean_primary_cost, r.mc.mean_log_lr
        );
    }
    println!(
        "baseline: J_primary = {:.6}   E log L = {:.6}",
        base.mc.mean_primary_cost, base.mc.mean_log_lr
    );
    write_json(&ctx.out.join("rounds.json"), &summary)?;

    if ctx.plots {
        let times: Vec<f64> = grid.times().collect();
        let mut chart = Chart::new("pattern adopted in each round", "t", "f_c");
        for r in &summary.rounds {
            chart = chart.with(Series::new(format!("round {}", r.round), &times, &r.f_c));
        }
        write_text(&ctx.out.join("fc_rounds.svg"), &render(&chart))?;
        let idx: Vec<f64> = (0..=summary.rounds.len()).map(|i| i as f64).collect();
        let metric = |f: &dyn Fn(&RoundSummary) -> f64| -> Vec<f64> {
            std::iter::once(&summary.baseline).chain(&summary.rounds).map(f).collect()
        };
        let chart = Chart::new("metrics by round (0 = baseline)", "round", "value")
            .with(Series::new("J_primary", &idx, &metric(&|r| r.mean_primary_cost)))
            .with(Series::new("E log L", &idx, &metric(&|r| r.mean_log_lr)));
        write_text(&ctx.out.join("metrics.svg"), &render(&chart))?;
    }
    Ok(())
}

fn print_table(results: &[CheckResult]) {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {:width$}  {}", r.name, r.detail);
    }
}

pub fn validate(ctx: &Context) -> Result<()> {
    let (params, grid) = ctx.config.check().context("validation rejected the configuration")?;
    let cfg = &ctx.config;
    let results = run_suite(&cfg.model(), &params, &cfg.pattern(), &grid, cfg.mc_paths, cfg.seed, cfg.threads);
    print_table(&results);
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(ChecksFailed(failed).into());
    }
    Ok(())
}
