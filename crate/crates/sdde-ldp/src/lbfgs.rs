//! Limited-memory quasi-Newton minimizer with Armijo backtracking.

use crate::error::{Error, Result};
use crate::stats::dot;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 500,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientBelowTol,
    MaxIters,
    /// No acceptable step along the search direction.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Minimize `f` starting from `x0`.
///
/// `f(x, need_grad)` returns the value and, when asked, the gradient; line
/// search probes are value-only. Non-finite values during line search just
/// shrink the step; a non-finite value at the starting point is an error.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsResult>
where
    F: FnMut(&[f64], bool) -> Result<(f64, Option<Vec<f64>>)>,
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, grad) = f(&x, true)?;
    let mut grad = grad.expect("gradient requested");
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective);
    }

    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho_hist: VecDeque<f64> = VecDeque::new();

    for iter in 0..opts.max_iters {
        let grad_norm = dot(&grad, &grad).sqrt();
        if grad_norm < opts.grad_tol {
            return Ok(LbfgsResult { x, value: fx, grad_norm, iterations: iter, stop: StopReason::GradientBelowTol });
        }

        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for ((s, y), rho) in s_hist.iter().zip(&y_hist).zip(&rho_hist).rev() {
            let a = rho * dot(s, &dir);
            for (d, yc) in dir.iter_mut().zip(y) {
                *d -= a * yc;
            }
            alphas.push(a);
        }
        if let (Some(s), Some(y)) = (s_hist.back(), y_hist.back()) {
            let scale = dot(s, y) / dot(y, y);
            if scale.is_finite() && scale > 0.0 {
                for d in dir.iter_mut() {
                    *d *= scale;
                }
            }
        }
        for (((s, y), rho), a) in s_hist.iter().zip(&y_hist).zip(&rho_hist).zip(alphas.iter().rev())
        {
            let beta = rho * dot(y, &dir);
            for (d, sc) in dir.iter_mut().zip(s) {
                *d += (a - beta) * sc;
            }
        }

        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            // not a descent direction: fall back to steepest descent
            dir = grad.iter().map(|g| -g).collect();
            slope = -grad_norm * grad_norm;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        let mut step = 1.0;
        let mut accepted = None;
        let mut trial = vec![0.0; n];
        for _ in 0..=opts.max_backtracks {
            for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&dir) {
                *t = xi + step * di;
            }
            let (ft, _) = f(&trial, false)?;
            if ft.is_finite() && ft <= fx + opts.armijo_c1 * step * slope {
                accepted = Some(ft);
                break;
            }
            step *= opts.backtrack_factor;
        }
        let Some(_ft) = accepted else {
            let grad_norm = dot(&grad, &grad).sqrt();
            return Ok(LbfgsResult { x, value: fx, grad_norm, iterations: iter, stop: StopReason::LineSearchFailed });
        };

        let (f_new, g_new) = f(&trial, true)?;
        let g_new = g_new.expect("gradient requested");
        let s_vec: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s_vec, &y_vec);
        // curvature guard: skip the update when s.y is not safely positive
        if sy > 1e-12 * dot(&s_vec, &s_vec).sqrt() * dot(&y_vec, &y_vec).sqrt() {
            s_hist.push_back(s_vec);
            y_hist.push_back(y_vec);
            rho_hist.push_back(1.0 / sy);
            if s_hist.len() > opts.memory {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        x = trial;
        fx = f_new;
        grad = g_new;
    }

    let grad_norm = dot(&grad, &grad).sqrt();
    Ok(LbfgsResult { x, value: fx, grad_norm, iterations: opts.max_iters, stop: StopReason::MaxIters })
}
