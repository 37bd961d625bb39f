//! Uniform time grid on `[-tau, T]` with the delay aligned to the step.
//!
//! Every solver in this crate works on such a grid. Requiring `tau` to be an
//! exact multiple of `h` means a delayed read `t - tau` always lands on a
//! node, so the method of steps needs no interpolation at whole-step lookups
//! and the stochastic integrators need no Brownian bridge.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    delay: f64,
    n_steps: usize,
    n_history: usize,
}

impl TimeGrid {
    /// Build a grid for horizon `T`, step `h` and delay `tau`.
    ///
    /// Both `tau/h` and `T/h` must be integral within `1e-9 / h`.
    pub fn new(horizon: f64, step: f64, delay: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon T = {horizon} must be positive")));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("step h = {step} must be positive")));
        }
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(Error::InvalidArgument(format!("delay tau = {delay} must be positive")));
        }
        let tol = 1e-9 / step;
        let n_history = Self::integral_ratio("tau/h", delay, step, tol)?;
        let n_steps = Self::integral_ratio("T/h", horizon, step, tol)?;
        if n_history == 0 {
            return Err(Error::InvalidArgument("delay tau must be at least one step".into()));
        }
        Ok(Self { horizon, step, delay, n_steps, n_history })
    }

    fn integral_ratio(name: &'static str, num: f64, den: f64, tol: f64) -> Result<usize> {
        let ratio = num / den;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > tol || rounded < 0.0 {
            return Err(Error::Misaligned { name, value: ratio, tol });
        }
        Ok(rounded as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Number of integration steps on `[0, T]`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of steps covered by the delay; equals `tau / h`.
    pub fn n_history(&self) -> usize {
        self.n_history
    }

    /// Total number of nodes on `[-tau, T]`.
    pub fn n_nodes(&self) -> usize {
        self.n_history + self.n_steps + 1
    }

    /// Node index of `t = 0`.
    pub fn origin_index(&self) -> usize {
        self.n_history
    }

    /// Time of node `i`, exact at `t = 0` for `i = origin_index`.
    pub fn node_time(&self, i: usize) -> f64 {
        (i as f64 - self.n_history as f64) * self.step
    }

    /// Time of step `k` counted from zero, i.e. `k * h`.
    pub fn step_time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// True when two grids describe the same discretization.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && self.n_history == other.n_history
            && (self.step - other.step).abs() <= 1e-12 * self.step.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_division() {
        let g = TimeGrid::new(1.0, 0.25, 0.5).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.n_history(), 2);
        assert_eq!(g.n_nodes(), 7);
        assert_eq!(g.node_time(g.origin_index()), 0.0);
        assert!((g.node_time(0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn misaligned_delay_is_rejected() {
        let err = TimeGrid::new(1.0, 0.3, 0.5).unwrap_err();
        match err {
            Error::Misaligned { name, .. } => assert_eq!(name, "tau/h"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fine_grid() {
        let g = TimeGrid::new(2.0, 0.01, 1.0).unwrap();
        assert_eq!(g.n_steps(), 200);
        assert_eq!(g.n_history(), 100);
        assert!((g.n_steps() as f64 * g.step() - g.horizon()).abs() <= f64::EPSILON * 2.0);
    }

    #[test]
    fn misaligned_horizon_is_rejected() {
        let err = TimeGrid::new(1.0, 0.6, 0.6).unwrap_err();
        match err {
            Error::Misaligned { name, .. } => assert_eq!(name, "T/h"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
