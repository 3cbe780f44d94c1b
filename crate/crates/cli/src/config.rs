//! Run configuration: one JSON object with flat dotted keys.
//!
//! Every key is optional and falls back to the velocity-tracking experiment
//! (`T = 1`, `f_c = sin(10 pi t)`, `N_T = 1000`). Time-function keys take a
//! tagged object such as `{"type": "affine", "a": 0.6, "b": -20}`.

use std::fmt;
use std::path::{Path, PathBuf};

use misdirection::red::{NnSettings, PenaltyKind, RedConfig, SolverKind};
use misdirection::{GridConfig, ModelParams, Pattern, TimeFunction, ValidatedParams};
use serde::{Deserialize, Serialize};

/// Problems with the configuration or the command line (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(rename = "model.T")]
    pub horizon: f64,
    #[serde(rename = "model.sigma_B")]
    pub sigma_b: f64,
    #[serde(rename = "model.sigma_W")]
    pub sigma_w: f64,
    #[serde(rename = "model.r_alpha")]
    pub r_alpha: f64,
    #[serde(rename = "model.r_beta")]
    pub r_beta: f64,
    #[serde(rename = "model.r_v")]
    pub r_v: f64,
    #[serde(rename = "model.t_v")]
    pub t_v: f64,
    #[serde(rename = "model.vbar_T")]
    pub vbar_terminal: f64,
    #[serde(rename = "model.vbar")]
    pub vbar: TimeFunction,
    #[serde(rename = "model.lambda")]
    pub lambda: f64,
    #[serde(rename = "model.V0")]
    pub v0: f64,
    #[serde(rename = "model.Y0")]
    pub y0: f64,

    #[serde(rename = "grid.n_steps")]
    pub n_steps: usize,

    #[serde(rename = "pattern.f_c")]
    pub f_c: TimeFunction,
    #[serde(rename = "pattern.f_d")]
    pub f_d: TimeFunction,

    #[serde(rename = "red.lambda_reg")]
    pub lambda_reg: f64,
    #[serde(rename = "red.penalty")]
    pub penalty: PenaltyKind,
    #[serde(rename = "red.solver")]
    pub solver: SolverKind,
    #[serde(rename = "red.f_c_initial")]
    pub f_c_initial: TimeFunction,
    #[serde(rename = "red.tolerance")]
    pub tolerance: f64,
    #[serde(rename = "red.max_iters")]
    pub max_iters: usize,
    #[serde(rename = "red.fbs_relaxation")]
    pub fbs_relaxation: f64,
    #[serde(rename = "red.nn_epochs")]
    pub nn_epochs: usize,
    #[serde(rename = "red.nn_learning_rate")]
    pub nn_learning_rate: f64,

    #[serde(rename = "mc.paths")]
    pub mc_paths: usize,
    #[serde(rename = "mc.threads")]
    pub threads: Option<usize>,
    /// Trajectories written to CSV and plotted.
    #[serde(rename = "mc.sample_paths")]
    pub sample_paths: usize,

    #[serde(rename = "game.n_rounds")]
    pub n_rounds: usize,

    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: 1.0,
            sigma_b: 0.25,
            sigma_w: 0.25,
            r_alpha: 1.0,
            r_beta: 10.0,
            r_v: 1.0,
            t_v: 1.0,
            vbar_terminal: 1.0,
            vbar: TimeFunction::affine(2.0, -1.0),
            lambda: 0.05,
            v0: 2.0,
            y0: 4.0,
            n_steps: 1000,
            f_c: TimeFunction::sinusoid(1.0, 10.0 * std::f64::consts::PI, 0.0),
            f_d: TimeFunction::zero(),
            lambda_reg: 1.0,
            penalty: PenaltyKind::Quadratic,
            solver: SolverKind::Fpi,
            f_c_initial: TimeFunction::constant(1.0),
            tolerance: 1e-3,
            max_iters: 200,
            fbs_relaxation: 0.5,
            nn_epochs: 500,
            nn_learning_rate: 1e-3,
            mc_paths: 10_000,
            threads: None,
            sample_paths: 3,
            n_rounds: 3,
            seed: 0,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|ConfigError(msg)| ConfigError(format!("{}: {msg}", path.display())))
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            horizon: self.horizon,
            sigma_b: self.sigma_b,
            sigma_w: self.sigma_w,
            r_alpha: self.r_alpha,
            r_beta: self.r_beta,
            r_v: self.r_v,
            t_v: self.t_v,
            vbar_terminal: self.vbar_terminal,
            vbar: self.vbar.clone(),
            lambda: self.lambda,
            v0: self.v0,
            y0: self.y0,
        }
    }

    pub fn params(&self) -> Result<ValidatedParams, ConfigError> {
        self.model().validate().map_err(|e| ConfigError(e.to_string()))
    }

    pub fn grid(&self) -> Result<GridConfig, ConfigError> {
        GridConfig::new(self.horizon, self.n_steps).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn pattern(&self) -> Pattern {
        Pattern::new(self.f_c.clone(), self.f_d.clone())
    }

    pub fn red(&self) -> RedConfig {
        RedConfig {
            lambda_reg: self.lambda_reg,
            penalty_kind: self.penalty,
            f_c_initial: self.f_c_initial.clone(),
            solver: self.solver,
            tolerance: self.tolerance,
            max_iters: self.max_iters,
            fbs_relaxation: self.fbs_relaxation,
            nn: NnSettings {
                epochs: self.nn_epochs,
                learning_rate: self.nn_learning_rate,
            },
        }
    }

    /// Checks everything that can be checked without solving anything.
    pub fn check(&self) -> Result<(ValidatedParams, GridConfig), ConfigError> {
        let params = self.params()?;
        let grid = self.grid()?;
        if self.mc_paths < 2 {
            return Err(ConfigError(format!("mc.paths must be >= 2, got {}", self.mc_paths)));
        }
        if self.threads == Some(0) {
            return Err(ConfigError("mc.threads must be >= 1".into()));
        }
        if self.n_rounds == 0 {
            return Err(ConfigError("game.n_rounds must be >= 1".into()));
        }
        self.red().validate(&grid).map_err(|e| ConfigError(e.to_string()))?;
        Ok((params, grid))
    }
}
