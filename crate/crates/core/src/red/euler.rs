//! Euler-discretized red objective and its exact discrete adjoint.
//!
//! With `h` the grid step, the training scheme is
//!
//! ```text
//! c_N = (t_v, 0, 0),      c_k = c_{k+1} - h F(c_{k+1}, f_{k+1})
//! m_0 = (v0^2, v0 y0, y0^2), m_{k+1} = m_k + h G(m_k, c_k, f_k)
//! J = sum_k w_k [ L(c_k, m_k, f_k) / sigma_W^2 + lambda_reg / sigma_W^2 p(f_k) ]
//! ```
//!
//! with trapezoid weights `w_k`. The gradient with respect to the node
//! values `f_k` is accumulated in two sweeps: backwards over the moment
//! recursion, then forwards over the coefficient recursion.

use crate::error::{Error, Result};
use crate::model::{GridConfig, ValidatedParams};
use crate::moments::{log_lr_density, moment_rhs};
use crate::riccati::Consts;

use super::{penalty, penalty_gradient, RedConfig};

type M3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct EulerGradient {
    pub objective: f64,
    pub expected_log_lr: f64,
    /// `dJ / df_k` for every node.
    pub gradient: Vec<f64>,
}

fn mat_t_vec(m: &M3, v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = m[0][j] * v[0] + m[1][j] * v[1] + m[2][j] * v[2];
    }
    out
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `dF/dc` for the `(mu, eta, rho)` right-hand side.
fn coeff_jacobian(c: &Consts, x: &[f64; 3], f: f64) -> M3 {
    let (mu, eta, rho) = (x[0], x[1], x[2]);
    [
        [2.0 * mu * c.inv_ra, 2.0 * eta * c.inv_rb - 2.0, 0.0],
        [eta * c.inv_ra, mu * c.inv_ra + rho * c.inv_rb - c.gain * f, eta * c.inv_rb - 1.0],
        [0.0, 2.0 * eta * c.inv_ra, 2.0 * rho * c.inv_rb - 2.0 * c.gain * f],
    ]
}

fn coeff_df(c: &Consts, x: &[f64; 3], f: f64) -> [f64; 3] {
    [0.0, -c.gain * x[1], -2.0 * c.gain * x[2] + 2.0 * c.quad * f]
}

/// `dG/dm`, `dG/dc` and `dG/df` for the moment right-hand side.
fn moment_jacobians(c: &Consts, x: &[f64; 3], m: &[f64; 3], f: f64) -> (M3, M3, [f64; 3]) {
    let (mu, eta, rho) = (x[0], x[1], x[2]);
    let (h20, h11, h02) = (m[0], m[1], m[2]);
    let coupling = 1.0 - eta * c.inv_rb;
    let drift_y = c.gain * f - rho * c.inv_rb;
    let dm = [
        [-2.0 * mu * c.inv_ra, -2.0 * eta * c.inv_ra, 0.0],
        [coupling, drift_y - mu * c.inv_ra, -eta * c.inv_ra],
        [0.0, 2.0 * coupling, 2.0 * drift_y],
    ];
    let dc = [
        [-2.0 * h20 * c.inv_ra, -2.0 * h11 * c.inv_ra, 0.0],
        [-h11 * c.inv_ra, -h20 * c.inv_rb - h02 * c.inv_ra, -h11 * c.inv_rb],
        [0.0, -2.0 * h11 * c.inv_rb, -2.0 * h02 * c.inv_rb],
    ];
    let df = [0.0, c.gain * h11, 2.0 * c.gain * h02];
    (dm, dc, df)
}

struct Forward {
    coeffs: Vec<[f64; 3]>,
    moments: Vec<[f64; 3]>,
}

fn forward(params: &ValidatedParams, c: &Consts, f: &[f64], grid: &GridConfig) -> Forward {
    let n = grid.n_steps();
    let h = grid.step();
    let mut coeffs = vec![[0.0; 3]; n + 1];
    coeffs[n] = [params.t_v, 0.0, 0.0];
    let mut d = [0.0; 3];
    for k in (0..n).rev() {
        c.core_rhs(&coeffs[k + 1], f[k + 1], &mut d);
        let next = coeffs[k + 1];
        coeffs[k] = [next[0] - h * d[0], next[1] - h * d[1], next[2] - h * d[2]];
    }
    let mut moments = vec![[0.0; 3]; n + 1];
    moments[0] = [params.v0 * params.v0, params.v0 * params.y0, params.y0 * params.y0];
    for k in 0..n {
        let x = coeffs[k];
        moment_rhs(c, x[0], x[1], x[2], f[k], &moments[k], &mut d);
        let m = moments[k];
        moments[k + 1] = [m[0] + h * d[0], m[1] + h * d[1], m[2] + h * d[2]];
    }
    Forward { coeffs, moments }
}

/// Euler objective and its gradient with respect to the node values of `f_c`.
pub fn euler_objective(
    params: &ValidatedParams,
    f_c: &[f64],
    config: &RedConfig,
    grid: &GridConfig,
) -> Result<EulerGradient> {
    grid.check_len("f_c", f_c.len())?;
    if !params.has_zero_targets(grid) {
        return Err(Error::NotSimplifiedModel);
    }
    let c = Consts::new(params);
    let n = grid.n_steps();
    let h = grid.step();
    let w = grid.trapezoid_weights();
    let fw = forward(params, &c, f_c, grid);
    let scale = 1.0 / c.sw2;

    let mut expected_log_lr = 0.0;
    for k in 0..=n {
        let (x, m) = (fw.coeffs[k], fw.moments[k]);
        expected_log_lr += w[k] * log_lr_density(&c, x[1], x[2], m[1], m[2], f_c[k]);
    }
    expected_log_lr *= scale;
    let pen_weight = config.lambda_reg * scale;
    let objective = expected_log_lr + pen_weight * penalty(f_c, config, grid)?;

    let mut grad: Vec<f64> = penalty_gradient(f_c, config, grid)?.iter().map(|g| pen_weight * g).collect();

    // partials of the weighted density at node k
    let density_partials = |k: usize| -> ([f64; 3], [f64; 3], f64) {
        let (x, m, f) = (fw.coeffs[k], fw.moments[k], f_c[k]);
        let s = w[k] * scale;
        let a2 = c.gain - 0.5;
        let dc = [0.0, -s * m[1] * f * c.inv_rb, -s * m[2] * f * c.inv_rb];
        let dm = [0.0, -s * x[1] * f * c.inv_rb, s * (-x[2] * f * c.inv_rb + a2 * f * f)];
        let df = s * (-(x[1] * m[1] + x[2] * m[2]) * c.inv_rb + 2.0 * a2 * m[2] * f);
        (dc, dm, df)
    };

    // backward sweep over the moments
    let mut direct_c = vec![[0.0; 3]; n + 1];
    let (dc_n, dm_n, df_n) = density_partials(n);
    let mut adj_m = dm_n;
    direct_c[n] = dc_n;
    grad[n] += df_n;
    for k in (0..n).rev() {
        let (x, m, f) = (fw.coeffs[k], fw.moments[k], f_c[k]);
        let (jm, jc, jf) = moment_jacobians(&c, &x, &m, f);
        let (dc, dm, df) = density_partials(k);
        let through_m = mat_t_vec(&jm, &adj_m);
        let through_c = mat_t_vec(&jc, &adj_m);
        direct_c[k] = [dc[0] + h * through_c[0], dc[1] + h * through_c[1], dc[2] + h * through_c[2]];
        grad[k] += df + h * dot(&jf, &adj_m);
        adj_m = [
            dm[0] + adj_m[0] + h * through_m[0],
            dm[1] + adj_m[1] + h * through_m[1],
            dm[2] + adj_m[2] + h * through_m[2],
        ];
    }

    // forward sweep over the coefficients: c_{k-1} depends on c_k and f_k
    let mut adj_c = direct_c[0];
    for k in 1..=n {
        let (x, f) = (fw.coeffs[k], f_c[k]);
        let jc = coeff_jacobian(&c, &x, f);
        let through = mat_t_vec(&jc, &adj_c);
        grad[k] -= h * dot(&coeff_df(&c, &x, f), &adj_c);
        adj_c = [
            direct_c[k][0] + adj_c[0] - h * through[0],
            direct_c[k][1] + adj_c[1] - h * through[1],
            direct_c[k][2] + adj_c[2] - h * through[2],
        ];
    }

    Ok(EulerGradient {
        objective,
        expected_log_lr,
        gradient: grad,
    })
}
