//! Fixed-step classical Runge–Kutta (order 4) on the uniform grid.
//!
//! Backward integration runs the same stepper in reversed time
//! (`s = T - t`), so both directions share one code path. Every node of
//! the grid is a step boundary; coefficient curves that are only known at
//! nodes must be interpolated for the half-step stages.

use crate::error::{Error, Result};
use crate::model::GridConfig;

/// A vector field `rhs(t, x, dx)` of fixed dimension.
pub struct OdeSystem<F> {
    dim: usize,
    rhs: F,
}

impl<F> OdeSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, rhs: F) -> Self {
        OdeSystem { dim, rhs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        (self.rhs)(t, x, dx)
    }
}

/// Node-major table of states: row `k` is the state at `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    dim: usize,
    data: Vec<f64>,
}

impl Solution {
    fn zeros(dim: usize, n_nodes: usize) -> Self {
        Solution {
            dim,
            data: vec![0.0; dim * n_nodes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Column `j` across all nodes.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.dim).copied().collect()
    }
}

pub fn integrate_forward<F>(
    system: &OdeSystem<F>,
    initial_state: &[f64],
    grid: &GridConfig,
) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    sweep(system, initial_state, grid, Direction::Forward)
}

pub fn integrate_backward<F>(
    system: &OdeSystem<F>,
    terminal_state: &[f64],
    grid: &GridConfig,
) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    sweep(system, terminal_state, grid, Direction::Backward)
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

fn sweep<F>(
    system: &OdeSystem<F>,
    boundary: &[f64],
    grid: &GridConfig,
    direction: Direction,
) -> Result<Solution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dim = system.dim();
    if boundary.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: boundary.len(),
        });
    }
    let n = grid.n_steps();
    let mut sol = Solution::zeros(dim, grid.n_nodes());
    let start = match direction {
        Direction::Forward => 0,
        Direction::Backward => n,
    };
    sol.row_mut(start).copy_from_slice(boundary);
    check_finite(sol.row(start), start)?;

    let mut stepper = Rk4::new(dim);
    for j in 0..n {
        let (from, to) = match direction {
            Direction::Forward => (j, j + 1),
            Direction::Backward => (n - j, n - j - 1),
        };
        let (t0, t1) = (grid.time(from), grid.time(to));
        let mut x = sol.row(from).to_vec();
        stepper.step(system, t0, t1 - t0, &mut x);
        check_finite(&x, to)?;
        sol.row_mut(to).copy_from_slice(&x);
    }
    Ok(sol)
}

fn check_finite(x: &[f64], node: usize) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(component) => Err(Error::NonFiniteState { node, component }),
        None => Ok(()),
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// One step of signed length `dt` from `(t, x)`, in place.
    fn step<F>(&mut self, system: &OdeSystem<F>, t: f64, dt: f64, x: &mut [f64])
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * dt;
        system.eval(t, x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        system.eval(t + half, &self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        system.eval(t + half, &self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        system.eval(t + dt, &self.tmp, &mut self.k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}
