//! The variational rate of a path and its minimization over deviation events.
//!
//! A sampled path `f` is charged the cheapest control that reproduces it
//! through the skeleton dynamics,
//!
//! ```text
//! I(f) = (1/2) int_0^T |phi*(s)|^2 ds,
//! phi*(t_k) = sigma(t_k, f_k, f_{k-tau})^+ [ (f_{k+1} - f_k)/h - b(t_k, f_k, f_{k-tau}) ],
//! ```
//!
//! where `+` is the Moore-Penrose pseudo-inverse. The abstract infimum over
//! reproducing controls decomposes pointwise because the constraint is
//! affine in `phi(t)` separately at each time, so the least-norm solve per
//! step is exact, not an approximation. A path whose increment cannot be
//! matched within tolerance by any control (residual left in the cokernel
//! of `sigma`) gets `I = +infinity`.
//!
//! `minimize_rate` computes `inf I` over paths hitting an endpoint event by
//! quadratic-penalty optimal control: minimize
//! `(1/2)|phi|^2 + mu * dist(z^phi(T), event)^2` over piecewise-constant
//! controls, re-solving the skeleton per evaluation, with `mu` escalated
//! geometrically. Gradients come from the discrete adjoint of the
//! fourth-order pass (finite differences remain available as the oracle).

use crate::control::Control;
use crate::error::{Error, Result};
use crate::event::EventSpec;
use crate::grid::TimeGrid;
use crate::lbfgs::{self, LbfgsOptions};
use crate::model::CoefficientModel;
use crate::path::{InitialSegment, Trajectory};
use crate::skeleton::{solve_rk4, validate_inputs, StageRecord};
use crate::stats::{norm, CompensatedSum};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

/// Relative cutoff deciding numerical rank in the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Outcome of evaluating the rate of one path.
#[derive(Debug, Clone)]
pub struct RateCertificate {
    /// `(1/2) h sum |phi*_k|^2`, or `+inf` when the path is infeasible.
    pub value: f64,
    /// The recovered least-norm control.
    pub control: Control,
    /// Per-step defect `|r_k - sigma_k phi*_k|` left after the least-norm solve.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Residual tolerance used; `feasible` iff `max_residual <= tolerance`.
    pub tolerance: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSummary {
    /// `None` encodes `+inf` (infeasible path).
    pub value: Option<f64>,
    pub feasible: bool,
    pub max_residual: f64,
    pub tolerance: f64,
}

impl RateCertificate {
    pub fn summary(&self) -> RateSummary {
        RateSummary {
            value: self.value.is_finite().then_some(self.value),
            feasible: self.feasible,
            max_residual: self.max_residual,
            tolerance: self.tolerance,
        }
    }
}

/// Default residual tolerance: discretization pollutes the step residual at
/// O(h), so a fixed tolerance would misclassify fine-grid feasible paths.
pub fn default_feasibility_tol(grid: &TimeGrid) -> f64 {
    10.0 * grid.step()
}

/// Evaluate the rate of `f` with the default `10 h` residual tolerance.
pub fn evaluate_rate(model: &CoefficientModel, f: &Trajectory, grid: &TimeGrid) -> Result<RateCertificate> {
    evaluate_rate_with_tol(model, f, grid, default_feasibility_tol(grid))
}

pub fn evaluate_rate_with_tol(
    model: &CoefficientModel,
    f: &Trajectory,
    grid: &TimeGrid,
    tolerance: f64,
) -> Result<RateCertificate> {
    if !f.grid().same_as(grid) {
        return Err(Error::GridMismatch("path grid differs from the requested grid".into()));
    }
    if f.dim() != model.state_dim() {
        return Err(Error::GridMismatch(format!(
            "path dimension {} does not match state dimension {}",
            f.dim(),
            model.state_dim()
        )));
    }
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("path has non-finite values".into()));
    }

    let d = model.state_dim();
    let m = model.noise_dim();
    let h = grid.step();
    let origin = grid.origin_index();
    let lag = grid.n_history();

    let mut ctrl_values = vec![0.0; grid.n_steps() * m];
    let mut residuals = Vec::with_capacity(grid.n_steps());
    let mut cost = CompensatedSum::new();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];

    for step in 0..grid.n_steps() {
        let i = origin + step;
        let j = i - lag;
        let t = grid.step_time(step);
        let x = f.node(i);
        let y = f.node(j);
        model.drift_into(t, x, y, &mut b);
        model.diffusion_into(t, x, y, &mut s);

        let next = f.node(i + 1);
        let r: Vec<f64> = (0..d).map(|c| (next[c] - x[c]) / h - b[c]).collect();

        let sigma = DMatrix::from_row_slice(d, m, &s);
        let svd = sigma.clone().svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let phi_star = svd
            .solve(&DVector::from_column_slice(&r), PINV_CUTOFF * smax)
            .map_err(|e| Error::InvalidArgument(format!("pseudo-inverse solve failed: {e}")))?;

        let reproduced = &sigma * &phi_star;
        let defect: Vec<f64> = (0..d).map(|c| r[c] - reproduced[c]).collect();
        residuals.push(norm(&defect));
        for c in 0..m {
            ctrl_values[step * m + c] = phi_star[c];
            cost.add(phi_star[c] * phi_star[c]);
        }
    }

    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let feasible = max_residual <= tolerance;
    let value = if feasible { 0.5 * h * cost.value() } else { f64::INFINITY };
    let control = Control::new(*grid, m, ctrl_values)?;
    Ok(RateCertificate { value, control, residuals, max_residual, tolerance, feasible })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    FiniteDifference,
    Adjoint,
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeConfig {
    pub gradient: GradientMethod,
    pub penalty_init: f64,
    pub penalty_factor: f64,
    pub penalty_rounds: usize,
    pub lbfgs: LbfgsOptions,
    /// Endpoint constraint violation accepted as converged.
    pub violation_tol: f64,
    /// Base relative step of the finite-difference gradient.
    pub fd_step: f64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            gradient: GradientMethod::Adjoint,
            penalty_init: 10.0,
            penalty_factor: 10.0,
            penalty_rounds: 6,
            lbfgs: LbfgsOptions::default(),
            violation_tol: 1e-4,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub control: Control,
    /// `(1/2) |phi*|^2` of the returned control.
    pub value: f64,
    pub trajectory: Trajectory,
    /// Endpoint shortfall of the returned trajectory.
    pub violation: f64,
    /// False when the optimizer stagnated before reaching `violation_tol`;
    /// the fields then hold the best iterate found.
    pub converged: bool,
    pub penalty_rounds_used: usize,
    pub iterations: usize,
}

/// Minimize the rate over controls whose skeleton path realizes the event.
///
/// The control starts at zero. A ball-exterior event whose center coincides
/// with the free endpoint makes that start a symmetry saddle (the penalty
/// gradient vanishes although the shortfall is maximal); when the first
/// round stalls there, a tiny deterministic control along the first noise
/// channel breaks the tie and the round is retried.
pub fn minimize_rate(
    model: &CoefficientModel,
    phi: &InitialSegment,
    event: &EventSpec,
    grid: &TimeGrid,
    cfg: &MinimizeConfig,
) -> Result<MinimizeOutcome> {
    if !event.is_minimizable() {
        return Err(Error::InvalidArgument(
            "tube events are not minimizable (only endpoint events are)".into(),
        ));
    }
    event.validate_for(grid, model.state_dim())?;
    let probe = Control::zeros(*grid, model.noise_dim());
    validate_inputs(model, phi, &probe, grid)?;

    let n = grid.n_steps() * model.noise_dim();
    let h = grid.step();
    let mut x = vec![0.0; n];
    let mut mu = cfg.penalty_init;
    let mut total_iters = 0usize;
    let mut stagnated = false;
    let mut rounds_used = 0usize;
    let mut kicked = false;

    for _round in 0..cfg.penalty_rounds {
        rounds_used += 1;
        let objective = |vals: &[f64], need_grad: bool| -> Result<(f64, Option<Vec<f64>>)> {
            let ctrl = Control::new(*grid, model.noise_dim(), vals.to_vec())?;
            match (need_grad, cfg.gradient) {
                (false, _) => {
                    let (value, _) = penalized_objective(model, phi, &ctrl, grid, event, mu)?;
                    Ok((value, None))
                }
                (true, GradientMethod::Adjoint) => {
                    let (value, grad) = adjoint_value_and_gradient(model, phi, &ctrl, grid, event, mu)?;
                    Ok((value, Some(grad)))
                }
                (true, GradientMethod::FiniteDifference) => {
                    let (value, _) = penalized_objective(model, phi, &ctrl, grid, event, mu)?;
                    let obj = |c: &Control| penalized_objective(model, phi, c, grid, event, mu).map(|(v, _)| v);
                    let grad = fd_gradient(&obj, &ctrl, cfg.fd_step)?;
                    Ok((value, Some(grad)))
                }
            }
        };

        let start_value = objective(&x, false)?.0;
        let result = lbfgs::minimize(objective, x.clone(), &cfg.lbfgs)?;
        total_iters += result.iterations;
        let improved = result.value < start_value - 1e-15 * (1.0 + start_value.abs());
        x = result.x;

        let ctrl = Control::new(*grid, model.noise_dim(), x.clone())?;
        let (_, shortfall) = penalized_objective(model, phi, &ctrl, grid, event, mu)?;
        if !improved && result.iterations == 0 && shortfall > cfg.violation_tol {
            if !kicked && x.iter().all(|v| *v == 0.0) {
                // saddle at the zero control: nudge the first channel and
                // retry this round at the same penalty weight
                kicked = true;
                let m = model.noise_dim();
                for step in 0..grid.n_steps() {
                    x[step * m] = 1e-3;
                }
                continue;
            }
            // a whole penalty round brought no decrease: stagnation
            stagnated = true;
            break;
        }
        mu *= cfg.penalty_factor;
    }

    let control = Control::new(*grid, model.noise_dim(), x)?;
    let trajectory = solve_rk4(model, phi, &control, grid, None)?;
    let violation = event
        .endpoint_shortfall(trajectory.endpoint())
        .expect("endpoint event");
    let mut cost = CompensatedSum::new();
    for v in control.values() {
        cost.add(v * v);
    }
    let value = 0.5 * h * cost.value();
    let converged = !stagnated && violation <= cfg.violation_tol;
    Ok(MinimizeOutcome {
        control,
        value,
        trajectory,
        violation,
        converged,
        penalty_rounds_used: rounds_used,
        iterations: total_iters,
    })
}

/// `J(phi) = (1/2)|phi|^2 + mu * shortfall(z^phi(T))^2`; returns `(J, shortfall)`.
fn penalized_objective(
    model: &CoefficientModel,
    phi: &InitialSegment,
    ctrl: &Control,
    grid: &TimeGrid,
    event: &EventSpec,
    mu: f64,
) -> Result<(f64, f64)> {
    let traj = solve_rk4(model, phi, ctrl, grid, None)?;
    let shortfall = event.endpoint_shortfall(traj.endpoint()).expect("endpoint event");
    let mut cost = CompensatedSum::new();
    for v in ctrl.values() {
        cost.add(v * v);
    }
    Ok((0.5 * grid.step() * cost.value() + mu * shortfall * shortfall, shortfall))
}

/// Central-difference gradient of an arbitrary control functional.
///
/// The step for coordinate `k` is `step * (1 + |phi_k|)`. Coordinates are
/// probed in parallel; this is the ground-truth route the adjoint is tested
/// against.
pub fn fd_gradient<F>(objective: &F, ctrl: &Control, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&Control) -> Result<f64> + Sync,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let n = ctrl.values().len();
    (0..n)
        .into_par_iter()
        .map(|idx| {
            let delta = step * (1.0 + ctrl.values()[idx].abs());
            let mut up = ctrl.clone();
            up.values_mut()[idx] += delta;
            let mut down = ctrl.clone();
            down.values_mut()[idx] -= delta;
            let fu = objective(&up)?;
            let fd = objective(&down)?;
            if !fu.is_finite() || !fd.is_finite() {
                return Err(Error::NonFiniteObjective);
            }
            Ok((fu - fd) / (2.0 * delta))
        })
        .collect()
}

/// Value and gradient of the penalized objective by reverse sweep through
/// the recorded fourth-order pass.
///
/// Each step's update is `z_{i+1} = F(z_i, z_{i-M}, z_{i-M+1}, u_k)` with the
/// delayed reads entering stage 1 at the node, stages 2-3 at the exact
/// half-node average, and stage 4 at the next node. The sweep pushes the
/// endpoint sensitivity back through the four stages per step; coefficient
/// Jacobians are small dense matrices obtained by central differences, and
/// the control picks up `sigma(t_s, x_s, y_s)^T a_s` per stage plus the
/// `h u_k` regularizer term.
fn adjoint_value_and_gradient(
    model: &CoefficientModel,
    phi: &InitialSegment,
    ctrl: &Control,
    grid: &TimeGrid,
    event: &EventSpec,
    mu: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = model.state_dim();
    let m = model.noise_dim();
    let h = grid.step();
    let origin = grid.origin_index();
    let lag = grid.n_history();
    let n_steps = grid.n_steps();

    let mut record = StageRecord::default();
    let traj = solve_rk4(model, phi, ctrl, grid, Some(&mut record))?;
    let shortfall = event.endpoint_shortfall(traj.endpoint()).expect("endpoint event");

    let mut cost = CompensatedSum::new();
    for v in ctrl.values() {
        cost.add(v * v);
    }
    let value = 0.5 * h * cost.value() + mu * shortfall * shortfall;

    // lambda[i] = dJ/dz_i, seeded at the endpoint by the penalty gradient
    let mut lambda = vec![0.0; grid.n_nodes() * d];
    {
        let last = grid.n_nodes() - 1;
        let mut seed = vec![0.0; d];
        event.shortfall_sq_gradient(traj.endpoint(), &mut seed);
        for c in 0..d {
            lambda[last * d + c] = mu * seed[c];
        }
    }

    let mut grad = vec![0.0; n_steps * m];
    let values = traj.values();

    let mut gx: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; d * d]);
    let mut gy: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; d * d]);
    let mut sig: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; d * m]);
    let mut a1 = vec![0.0; d];
    let mut a2 = vec![0.0; d];
    let mut a3 = vec![0.0; d];
    let mut a4 = vec![0.0; d];
    let mut buf_b = vec![0.0; d];
    let mut buf_s = vec![0.0; d * m];
    let mut g_plus = vec![0.0; d];
    let mut g_minus = vec![0.0; d];

    for step in (0..n_steps).rev() {
        let i = origin + step;
        let j = i - lag;
        let t = grid.step_time(step);
        let u = ctrl.step_value(step);
        let k1 = &record.k1[step * d..(step + 1) * d];
        let k2 = &record.k2[step * d..(step + 1) * d];
        let k3 = &record.k3[step * d..(step + 1) * d];

        // rebuild stage states exactly as the forward pass produced them
        let z_i = &values[i * d..(i + 1) * d];
        let x1 = z_i.to_vec();
        let x2: Vec<f64> = (0..d).map(|c| z_i[c] + 0.5 * h * k1[c]).collect();
        let x3: Vec<f64> = (0..d).map(|c| z_i[c] + 0.5 * h * k2[c]).collect();
        let x4: Vec<f64> = (0..d).map(|c| z_i[c] + h * k3[c]).collect();
        let y_node = &values[j * d..(j + 1) * d];
        let y_next = &values[(j + 1) * d..(j + 2) * d];
        let y_mid: Vec<f64> = (0..d).map(|c| 0.5 * (y_node[c] + y_next[c])).collect();
        let stage_x = [&x1, &x2, &x3, &x4];
        let stage_y = [y_node, &y_mid, &y_mid, y_next];
        let stage_t = [t, t + 0.5 * h, t + 0.5 * h, t + h];

        // stage Jacobians of g = b + sigma u, and the raw sigma per stage
        for s_idx in 0..4 {
            let ts = stage_t[s_idx];
            model.diffusion_into(ts, stage_x[s_idx], stage_y[s_idx], &mut buf_s);
            sig[s_idx].copy_from_slice(&buf_s);
            for col in 0..d {
                let base = stage_x[s_idx][col];
                let delta = 1e-6 * (1.0 + base.abs());
                let mut xp = stage_x[s_idx].clone();
                xp[col] = base + delta;
                eval_g(model, ts, &xp, stage_y[s_idx], u, &mut buf_b, &mut buf_s, &mut g_plus);
                xp[col] = base - delta;
                eval_g(model, ts, &xp, stage_y[s_idx], u, &mut buf_b, &mut buf_s, &mut g_minus);
                for row in 0..d {
                    gx[s_idx][row * d + col] = (g_plus[row] - g_minus[row]) / (2.0 * delta);
                }
                let base_y = stage_y[s_idx][col];
                let delta_y = 1e-6 * (1.0 + base_y.abs());
                let mut yp = stage_y[s_idx].to_vec();
                yp[col] = base_y + delta_y;
                eval_g(model, ts, stage_x[s_idx], &yp, u, &mut buf_b, &mut buf_s, &mut g_plus);
                yp[col] = base_y - delta_y;
                eval_g(model, ts, stage_x[s_idx], &yp, u, &mut buf_b, &mut buf_s, &mut g_minus);
                for row in 0..d {
                    gy[s_idx][row * d + col] = (g_plus[row] - g_minus[row]) / (2.0 * delta_y);
                }
            }
        }

        let lam_out: Vec<f64> = lambda[(i + 1) * d..(i + 2) * d].to_vec();
        // sensitivities flowing into each stage slope
        for c in 0..d {
            a4[c] = h / 6.0 * lam_out[c];
        }
        mat_t_vec_add(&gx[3], &a4, d, h, 2.0 * h / 6.0, &lam_out, &mut a3);
        mat_t_vec_add(&gx[2], &a3, d, 0.5 * h, 2.0 * h / 6.0, &lam_out, &mut a2);
        mat_t_vec_add(&gx[1], &a2, d, 0.5 * h, h / 6.0, &lam_out, &mut a1);
        let stages_a = [&a1, &a2, &a3, &a4];

        // accumulate into lambda at the step's read points
        for c in 0..d {
            lambda[i * d + c] += lam_out[c];
        }
        for s_idx in 0..4 {
            for col in 0..d {
                let mut acc = 0.0;
                for row in 0..d {
                    acc += gx[s_idx][row * d + col] * stages_a[s_idx][row];
                }
                lambda[i * d + col] += acc;
            }
        }
        // delayed reads: stage 1 at node j, stages 2-3 half/half, stage 4 at j+1
        for col in 0..d {
            let mut at_j = 0.0;
            let mut at_j1 = 0.0;
            for row in 0..d {
                at_j += gy[0][row * d + col] * a1[row];
                let half = 0.5 * (gy[1][row * d + col] * a2[row] + gy[2][row * d + col] * a3[row]);
                at_j += half;
                at_j1 += half;
                at_j1 += gy[3][row * d + col] * a4[row];
            }
            lambda[j * d + col] += at_j;
            lambda[(j + 1) * d + col] += at_j1;
        }
        // control gradient: sigma^T a per stage, plus the running-cost term
        for c in 0..m {
            let mut acc = h * u[c];
            for s_idx in 0..4 {
                for row in 0..d {
                    acc += sig[s_idx][row * m + c] * stages_a[s_idx][row];
                }
            }
            grad[step * m + c] = acc;
        }
    }

    Ok((value, grad))
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn eval_g(
    model: &CoefficientModel,
    t: f64,
    x: &[f64],
    y: &[f64],
    u: &[f64],
    buf_b: &mut [f64],
    buf_s: &mut [f64],
    out: &mut [f64],
) {
    let d = buf_b.len();
    let m = u.len();
    model.drift_into(t, x, y, buf_b);
    model.diffusion_into(t, x, y, buf_s);
    for r in 0..d {
        let mut acc = buf_b[r];
        for c in 0..m {
            acc += buf_s[r * m + c] * u[c];
        }
        out[r] = acc;
    }
}

/// `out = weight * lam + scale * M^T v` for a row-major `d x d` matrix.
fn mat_t_vec_add(mat: &[f64], v: &[f64], d: usize, scale: f64, weight: f64, lam: &[f64], out: &mut [f64]) {
    for col in 0..d {
        let mut acc = 0.0;
        for row in 0..d {
            acc += mat[row * d + col] * v[row];
        }
        out[col] = weight * lam[col] + scale * acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::HalfspaceSide;
    use crate::model::{CoeffFn, Declared};
    use crate::rng::RngStream;
    use crate::skeleton::{solve_skeleton, SkeletonConfig};
    use std::sync::Arc;

    fn unit_declared() -> Declared {
        Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 }
    }

    fn flat_model(tau: f64, sigma0: f64) -> CoefficientModel {
        let drift: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
        let diff: CoeffFn = Arc::new(move |_t, _x, _y, out| out.fill(sigma0));
        CoefficientModel::new("flat", 1, 1, tau, drift, diff, unit_declared()).unwrap()
    }

    /// Zero history, forward nodes following `f(t)`.
    fn forward_path(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Trajectory {
        let values: Vec<f64> = (0..grid.n_nodes())
            .map(|i| if i < grid.origin_index() { 0.0 } else { f(grid.node_time(i)) })
            .collect();
        Trajectory::new(*grid, 1, values, crate::path::Origin::Skeleton).unwrap()
    }

    #[test]
    fn uncontrolled_skeleton_path_is_nearly_free() {
        let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
        let model = CoefficientModel::cubic_const_sigma(0.5).unwrap();
        let phi = InitialSegment::constant(&grid, &[1.0]).unwrap();
        let ctrl = Control::zeros(grid, 1);
        let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default()).unwrap();
        let cert = evaluate_rate(&model, &z, &grid).unwrap();
        assert!(cert.feasible);
        assert!(cert.value <= 1e-4, "value {}", cert.value);
        let max_phi = cert.control.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_phi <= 0.05, "recovered control should be ~0, got {max_phi}");
    }

    #[test]
    fn straight_line_under_unit_noise_costs_a_half() {
        let grid = TimeGrid::new(1.0, 0.02, 0.5).unwrap();
        let model = flat_model(0.5, 1.0);
        // f(t) = t on [0,1], zero history
        let f = forward_path(&grid, |t| t);
        let cert = evaluate_rate(&model, &f, &grid).unwrap();
        assert!(cert.feasible);
        assert!((cert.value - 0.5).abs() < 1e-12);
        for k in 0..grid.n_steps() {
            assert!((cert.control.step_value(k)[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_noise_makes_off_dynamics_paths_infeasible() {
        let grid = TimeGrid::new(1.0, 0.02, 0.5).unwrap();
        let model = flat_model(0.5, 0.0);
        // f' = 1 but b = 0 and sigma = 0
        let f = forward_path(&grid, |t| t);
        let cert = evaluate_rate(&model, &f, &grid).unwrap();
        assert!(!cert.feasible);
        assert!(cert.value.is_infinite());
        assert!(cert.max_residual > 0.9);
    }

    #[test]
    fn constant_noise_value_matches_the_quadrature_oracle() {
        // For sigma = sigma0 and d = m = 1 the rate is
        // (1/(2 sigma0^2)) int (f' - b)^2 dt; check against Simpson on a
        // smooth curve with known derivative.
        let sigma0 = 0.8;
        let grid = TimeGrid::new(1.0, 0.001, 0.5).unwrap();
        let model = flat_model(0.5, sigma0);
        let f = forward_path(&grid, |t| (std::f64::consts::PI * t).sin() * 0.3);
        let cert = evaluate_rate(&model, &f, &grid).unwrap();
        assert!(cert.feasible);
        // Simpson quadrature of the closed form with the analytic derivative
        let deriv = |t: f64| 0.3 * std::f64::consts::PI * (std::f64::consts::PI * t).cos();
        let n = 10_000;
        let hq = 1.0 / n as f64;
        let mut integral = 0.0;
        for k in 0..n {
            let t0 = k as f64 * hq;
            let tm = t0 + 0.5 * hq;
            let t1 = t0 + hq;
            integral += hq / 6.0
                * (deriv(t0).powi(2) + 4.0 * deriv(tm).powi(2) + deriv(t1).powi(2));
        }
        let oracle = integral / (2.0 * sigma0 * sigma0);
        let rel = (cert.value - oracle).abs() / oracle;
        assert!(rel < 0.02, "value {} vs oracle {oracle}", cert.value);
    }

    #[test]
    fn doubling_sigma_divides_the_value_by_four() {
        let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
        let f = forward_path(&grid, |t| t * (1.0 - t) + 0.2 * t);
        let v1 = evaluate_rate(&flat_model(0.5, 0.7), &f, &grid).unwrap().value;
        let v2 = evaluate_rate(&flat_model(0.5, 1.4), &f, &grid).unwrap().value;
        assert!((v1 / v2 - 4.0).abs() < 1e-6 * 4.0);
    }

    /// Random band-limited control sampled at the step midpoints; bounded
    /// amplitude uniformly in `h`, which is the regime where the node-wise
    /// O(h) recovery claim makes sense.
    fn smooth_random_control(grid: &TimeGrid, rng: &mut RngStream, budget: f64) -> Control {
        let coeffs: Vec<(f64, f64)> = (1..=4)
            .map(|_| (rng.standard_normal(), rng.standard_normal()))
            .collect();
        let values: Vec<f64> = (0..grid.n_steps())
            .map(|k| {
                let t = grid.step_time(k);
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, (a, b))| {
                        let w = (j + 1) as f64 * std::f64::consts::PI;
                        a * (w * t).sin() + b * (w * t).cos()
                    })
                    .sum::<f64>()
                    / 3.0
            })
            .collect();
        let mut ctrl = Control::new(*grid, 1, values).unwrap();
        ctrl.rescale_to(budget);
        ctrl
    }

    #[test]
    fn round_trip_recovers_the_control_cost() {
        let h = 1e-3;
        let grid = TimeGrid::new(1.0, h, 0.1).unwrap();
        let model = CoefficientModel::cubic_const_sigma(0.1).unwrap();
        let phi = InitialSegment::constant(&grid, &[1.0]).unwrap();
        let mut rng = RngStream::new(21, 0);
        for trial in 0..5 {
            let ctrl = smooth_random_control(&grid, &mut rng, 1.0 + 0.2 * trial as f64);
            let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default()).unwrap();
            let cert = evaluate_rate(&model, &z, &grid).unwrap();
            assert!(cert.feasible);
            let expected = 0.5 * ctrl.l2_norm_sq();
            let tol = 0.02 * expected + 10.0 * h;
            assert!(
                (cert.value - expected).abs() <= tol,
                "trial {trial}: {} vs {expected}",
                cert.value
            );
            // with full-rank sigma the recovered control matches node-wise
            let max_dev = cert
                .control
                .values()
                .iter()
                .zip(ctrl.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_dev <= 10.0 * h, "max control deviation {max_dev}");
        }
    }

    #[test]
    fn fd_gradient_of_the_quadratic_cost_is_h_phi() {
        let grid = TimeGrid::new(1.0, 0.1, 0.5).unwrap();
        let ctrl = Control::new(grid, 1, (0..10).map(|k| 0.3 * k as f64 - 1.0).collect()).unwrap();
        let obj = |c: &Control| Ok(0.5 * c.l2_norm_sq());
        let grad = fd_gradient(&obj, &ctrl, 1e-6).unwrap();
        for (g, v) in grad.iter().zip(ctrl.values()) {
            assert!((g - grid.step() * v).abs() < 1e-8, "{g} vs {}", grid.step() * v);
        }
    }

    #[test]
    fn fd_gradient_halving_scales_quadratically() {
        // central differences: error O(step^2), so the difference between
        // the step and step/2 estimates shrinks ~4x when step halves
        let grid = TimeGrid::new(1.0, 0.25, 0.25).unwrap();
        let ctrl = Control::new(grid, 1, vec![0.4, -0.2, 0.9, 0.1]).unwrap();
        let obj = |c: &Control| {
            let s: f64 = c.values().iter().sum();
            Ok(s.sin() + 0.5 * c.l2_norm_sq())
        };
        let exact: Vec<f64> = {
            let s: f64 = ctrl.values().iter().sum();
            ctrl.values().iter().map(|v| s.cos() + grid.step() * v).collect()
        };
        let err = |step: f64| {
            let g = fd_gradient(&obj, &ctrl, step).unwrap();
            g.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let e1 = err(1e-3);
        let e2 = err(5e-4);
        assert!(e2 < e1, "halving the step should reduce the error: {e1} vs {e2}");
        assert!(e1 / e2 > 2.0 && e1 / e2 < 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let grid = TimeGrid::new(1.0, 0.05, 0.5).unwrap();
        let model = CoefficientModel::cubic_const_sigma(0.5).unwrap();
        let phi = InitialSegment::constant(&grid, &[1.0]).unwrap();
        let event =
            EventSpec::EndpointHalfspace { coord: 0, threshold: 2.0, side: HalfspaceSide::Above };
        let mu = 25.0;
        let mut rng = RngStream::new(4, 0);
        let values: Vec<f64> = (0..grid.n_steps()).map(|_| 0.5 * rng.standard_normal()).collect();
        let ctrl = Control::new(grid, 1, values).unwrap();
        let (_, adjoint) =
            adjoint_value_and_gradient(&model, &phi, &ctrl, &grid, &event, mu).unwrap();
        let obj =
            |c: &Control| penalized_objective(&model, &phi, c, &grid, &event, mu).map(|(v, _)| v);
        let fd = fd_gradient(&obj, &ctrl, 1e-6).unwrap();
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in adjoint.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * scale.max(1e-8), "adjoint {a} vs fd {b}");
        }
    }

    #[test]
    fn adjoint_matches_finite_differences_in_two_dimensions() {
        // full coupling: drift mixes components and the delayed state, the
        // diffusion is a state-dependent 2x2 matrix
        let drift: crate::model::CoeffFn = Arc::new(|_t, x, y, out| {
            out[0] = x[1] - x[0] * x[0] * x[0] + 0.5 * y[0];
            out[1] = -x[0] + 0.3 * y[1];
        });
        let diff: crate::model::CoeffFn = Arc::new(|_t, x, _y, out| {
            out.copy_from_slice(&[1.0, 0.2, 0.1 * x[0], 0.9]);
        });
        let declared = unit_declared();
        let model = CoefficientModel::new("coupled", 2, 2, 0.25, drift, diff, declared).unwrap();
        let grid = TimeGrid::new(1.0, 0.05, 0.25).unwrap();
        let phi = InitialSegment::new(&grid, 2, {
            // non-constant history exercises the delayed half-node reads
            (0..=grid.n_history())
                .flat_map(|i| {
                    let t = (i as f64 - grid.n_history() as f64) * grid.step();
                    [0.4 + 0.2 * t, -0.2 * (1.0 + t)]
                })
                .collect()
        })
        .unwrap();
        let event = EventSpec::EndpointBallExterior { center: vec![0.1, -0.1], radius: 1.2 };
        let mu = 30.0;
        let mut rng = RngStream::new(17, 0);
        let values: Vec<f64> =
            (0..grid.n_steps() * 2).map(|_| 0.4 * rng.standard_normal()).collect();
        let ctrl = Control::new(grid, 2, values).unwrap();
        let (_, adjoint) =
            adjoint_value_and_gradient(&model, &phi, &ctrl, &grid, &event, mu).unwrap();
        let obj =
            |c: &Control| penalized_objective(&model, &phi, c, &grid, &event, mu).map(|(v, _)| v);
        let fd = fd_gradient(&obj, &ctrl, 1e-6).unwrap();
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (k, (a, b)) in adjoint.iter().zip(&fd).enumerate() {
            assert!(
                (a - b).abs() <= 1e-4 * scale.max(1e-8),
                "coordinate {k}: adjoint {a} vs fd {b}"
            );
        }
    }

    #[test]
    fn free_event_needs_no_control() {
        let grid = TimeGrid::new(1.0, 0.02, 0.5).unwrap();
        let model = CoefficientModel::cubic_const_sigma(0.5).unwrap();
        let phi = InitialSegment::constant(&grid, &[1.0]).unwrap();
        // z0(T) is ~1.4; a threshold below it is already satisfied
        let event =
            EventSpec::EndpointHalfspace { coord: 0, threshold: 0.5, side: HalfspaceSide::Above };
        let out = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.value <= 1e-6, "value {}", out.value);
        assert_eq!(out.violation, 0.0);
    }

    #[test]
    fn brownian_halfspace_cost_is_threshold_squared_over_two() {
        // b = 0, sigma = 1, zero history, event z(1) >= 1: the optimal path
        // is the straight line with value 1/2.
        let grid = TimeGrid::new(1.0, 0.02, 0.5).unwrap();
        let model = flat_model(0.5, 1.0);
        let phi = InitialSegment::constant(&grid, &[0.0]).unwrap();
        let event =
            EventSpec::EndpointHalfspace { coord: 0, threshold: 1.0, side: HalfspaceSide::Above };
        let out = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
        assert!(out.converged, "violation {}", out.violation);
        assert!((out.value - 0.5).abs() <= 0.005, "value {}", out.value);
        assert!(out.violation <= 1e-4);
        // the certificate of the returned trajectory reproduces the value
        let cert = evaluate_rate(&model, &out.trajectory, &grid).unwrap();
        assert!(cert.feasible);
        assert!((cert.value - out.value).abs() <= 0.01 * out.value.max(1e-9));
    }

    #[test]
    fn raising_the_threshold_never_lowers_the_cost() {
        let grid = TimeGrid::new(1.0, 0.05, 0.5).unwrap();
        let model = flat_model(0.5, 1.0);
        let phi = InitialSegment::constant(&grid, &[0.0]).unwrap();
        let mut last = 0.0;
        for &a in &[0.5, 1.0, 1.5, 2.0] {
            let event =
                EventSpec::EndpointHalfspace { coord: 0, threshold: a, side: HalfspaceSide::Above };
            let out = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
            assert!(out.converged);
            assert!(out.value >= last - 1e-9, "a={a}: {} < {last}", out.value);
            last = out.value;
        }
    }

    #[test]
    fn finite_difference_route_agrees_with_adjoint_route() {
        let grid = TimeGrid::new(1.0, 0.1, 0.5).unwrap();
        let model = flat_model(0.5, 1.0);
        let phi = InitialSegment::constant(&grid, &[0.0]).unwrap();
        let event =
            EventSpec::EndpointHalfspace { coord: 0, threshold: 1.0, side: HalfspaceSide::Above };
        let a = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
        let cfg = MinimizeConfig { gradient: GradientMethod::FiniteDifference, ..Default::default() };
        let b = minimize_rate(&model, &phi, &event, &grid, &cfg).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() <= 1e-4 * a.value.max(1e-12));
    }

    #[test]
    fn impotent_noise_reports_non_convergence() {
        // sigma = 0: no control moves the path, the event is unreachable;
        // the minimizer must hand back its best iterate unconverged instead
        // of pretending success
        let grid = TimeGrid::new(1.0, 0.05, 0.5).unwrap();
        let model = flat_model(0.5, 0.0);
        let phi = InitialSegment::constant(&grid, &[0.0]).unwrap();
        let event =
            EventSpec::EndpointHalfspace { coord: 0, threshold: 1.0, side: HalfspaceSide::Above };
        let out = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
        assert!(!out.converged);
        assert!(out.violation > 0.9, "violation {}", out.violation);
    }

    #[test]
    fn tube_events_are_rejected() {
        let grid = TimeGrid::new(1.0, 0.1, 0.5).unwrap();
        let model = flat_model(0.5, 1.0);
        let phi = InitialSegment::constant(&grid, &[0.0]).unwrap();
        let reference =
            Trajectory::new(grid, 1, vec![0.0; grid.n_nodes()], crate::path::Origin::Skeleton)
                .unwrap();
        let event = EventSpec::TubeExit { reference, radius: 0.5 };
        let err = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
