//! Piecewise-constant controls on `[0, T]` and their running integral.
//!
//! A control takes one `R^m` value per step, constant on `[t_k, t_{k+1})`.
//! This class is closed under the optimizer and makes the running integral
//! exact: on a budget set `{ |phi|_{L2}^2 <= alpha }` the integral satisfies
//! the modulus bound `|I(t) - I(s)| <= sqrt(alpha |t - s|)`, which is what
//! makes the budget sets relatively compact in sup norm.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path;
use crate::stats::CompensatedSum;
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    grid: TimeGrid,
    dim: usize,
    /// `grid.n_steps() * dim` values, step-major.
    values: Vec<f64>,
}

impl Control {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() * dim {
            return Err(Error::InvalidArgument(format!(
                "control needs {} values ({} steps x dim {}), got {}",
                grid.n_steps() * dim,
                grid.n_steps(),
                dim,
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let values = vec![0.0; grid.n_steps() * dim];
        Self { grid, dim, values }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.n_steps() * value.len());
        for _ in 0..grid.n_steps() {
            values.extend_from_slice(value);
        }
        Self { grid, dim: value.len(), values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Control value on `[t_k, t_{k+1})`.
    pub fn step_value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Squared L2 norm `h * sum_k |phi_k|^2`.
    pub fn l2_norm_sq(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for v in &self.values {
            acc.add(v * v);
        }
        self.grid.step() * acc.value()
    }

    /// Rescale so that `l2_norm_sq` equals `target` (no-op on a zero control).
    pub fn rescale_to(&mut self, target: f64) {
        let cur = self.l2_norm_sq();
        if cur > 0.0 {
            let s = (target / cur).sqrt();
            for v in &mut self.values {
                *v *= s;
            }
        }
    }

    /// Running integral `t -> int_0^t phi(s) ds` sampled at the step nodes.
    ///
    /// Returns `(n_steps + 1) * dim` values starting from zero; exact for
    /// piecewise-constant integrands (left-endpoint rule is not an
    /// approximation here). Each component is accumulated with compensated
    /// summation.
    pub fn integral(&self) -> Vec<f64> {
        let n = self.grid.n_steps();
        let h = self.grid.step();
        let mut out = vec![0.0; (n + 1) * self.dim];
        let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); self.dim];
        for k in 0..n {
            let v = self.step_value(k);
            for c in 0..self.dim {
                acc[c].add(h * v[c]);
                out[(k + 1) * self.dim + c] = acc[c].value();
            }
        }
        out
    }

    /// Write as CSV with header `t,v0,...,v{m-1}`, one row per step at the
    /// left endpoint `t_k`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        path::write_csv(
            w,
            self.dim,
            (0..self.grid.n_steps()).map(|k| (self.grid.step_time(k), self.step_value(k))),
        )
    }

    /// Read a control written by [`Control::write_csv`] onto the given grid.
    /// The file must carry exactly one row per step with matching left
    /// endpoints.
    pub fn read_csv<R: Read>(r: R, grid: TimeGrid) -> Result<Self> {
        let (times, values, dim) = path::read_csv(r)?;
        if times.len() != grid.n_steps() {
            return Err(Error::Csv(format!(
                "control file has {} rows, grid has {} steps",
                times.len(),
                grid.n_steps()
            )));
        }
        for (k, t) in times.iter().enumerate() {
            if (t - grid.step_time(k)).abs() > 1e-9 * grid.step().max(1.0) {
                return Err(Error::Csv(format!("control row {k} at t={t} does not match the grid")));
            }
        }
        Control::new(grid, dim, values)
    }
}

/// The running-integral operator on controls, as a free function.
///
/// `integrate(ctrl)[k*m..]` is the integral at node `t_k`; see
/// [`Control::integral`].
pub fn integrate(ctrl: &Control) -> Vec<f64> {
    ctrl.integral()
}
