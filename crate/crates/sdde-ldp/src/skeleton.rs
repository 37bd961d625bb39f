//! Deterministic solver for the controlled skeleton delay ODE
//!
//! ```text
//! z'(t) = b(t, z(t), z(t - tau)) + sigma(t, z(t), z(t - tau)) phi(t),
//! z = phi0 on [-tau, 0]
//! ```
//!
//! Two routes are provided. `StepsRk4` advances with classical fourth-order
//! stages, reading the delayed argument from the already-computed segment
//! (method of steps: the delay is grid-aligned, so delayed stage lookups hit
//! nodes or exact half-nodes). `PicardTruncated` iterates the fixed-point
//! map of the existence construction: the diffusion is truncated at level
//! `n`, the map is swept to its fixed point on subintervals, and the result
//! is accepted only if the truncation never activated along the path.

use crate::control::Control;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{CoeffFn, CoefficientModel};
use crate::path::{InitialSegment, Origin, Trajectory};
use crate::stats::norm;
use std::sync::Arc;

/// Euclidean norm above which a state counts as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkeletonMethod {
    #[default]
    StepsRk4,
    PicardTruncated,
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    /// Truncation level `n`; `None` derives `2 sqrt(apriori_bound)`, a level
    /// at which the truncation is provably inactive on solutions.
    pub truncation_level: Option<f64>,
    /// Sweeps per subinterval before the window is halved.
    pub max_sweeps: usize,
    /// A subinterval converges when the sup-norm update falls below this.
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { truncation_level: None, max_sweeps: 80, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SkeletonConfig {
    pub method: SkeletonMethod,
    pub picard: PicardOptions,
}

/// Sup-norm-squared bound for the skeleton solution:
/// `(|phi(0)|^2 + 2 k4 T) exp(4 k4 T + |phi|_{L2}^2 / eta)`.
///
/// Valid whenever the model's declared coercivity constant `k4` and weight
/// `eta` actually hold; the assumption checker tests exactly that.
pub fn apriori_bound(model: &CoefficientModel, phi: &InitialSegment, ctrl: &Control) -> f64 {
    let k4 = model.declared.k4;
    let eta = model.declared.eta;
    let horizon = ctrl.grid().horizon();
    let x0_sq = phi.at_origin().iter().map(|v| v * v).sum::<f64>();
    (x0_sq + 2.0 * k4 * horizon) * (4.0 * k4 * horizon + ctrl.l2_norm_sq() / eta).exp()
}

/// Replace the diffusion by its level-`n` truncation; the drift is untouched.
///
/// The factor is 1 while `|x| v |y| <= n`, decays linearly in each argument
/// over `(n, 2n]`, and vanishes beyond `2n`, so the truncated diffusion is
/// bounded, globally Lipschitz, and continuous across all case boundaries.
pub fn truncate_sigma(model: &CoefficientModel, n: f64) -> Result<CoefficientModel> {
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::InvalidArgument(format!("truncation level n = {n} must be >= 1")));
    }
    let inner = model.clone();
    let wrapped: CoeffFn = Arc::new(move |t, x, y, out| {
        inner.diffusion_into(t, x, y, out);
        let (nx, ny) = CoefficientModel::arg_norms(x, y);
        let factor = truncation_factor(nx, ny, n);
        if factor != 1.0 {
            for v in out.iter_mut() {
                *v *= factor;
            }
        }
    });
    Ok(model.with_diffusion("_truncated", wrapped))
}

pub(crate) fn truncation_factor(nx: f64, ny: f64, n: f64) -> f64 {
    let hi = nx.max(ny);
    if hi <= n {
        1.0
    } else if hi > 2.0 * n {
        0.0
    } else if nx.min(ny) <= n {
        2.0 - hi / n
    } else {
        (2.0 - nx / n) * (2.0 - ny / n)
    }
}

/// Solve the skeleton equation on the grid.
pub fn solve_skeleton(
    model: &CoefficientModel,
    phi: &InitialSegment,
    ctrl: &Control,
    grid: &TimeGrid,
    cfg: &SkeletonConfig,
) -> Result<Trajectory> {
    validate_inputs(model, phi, ctrl, grid)?;
    match cfg.method {
        SkeletonMethod::StepsRk4 => solve_rk4(model, phi, ctrl, grid, None),
        SkeletonMethod::PicardTruncated => solve_picard(model, phi, ctrl, grid, &cfg.picard),
    }
}

pub(crate) fn validate_inputs(
    model: &CoefficientModel,
    phi: &InitialSegment,
    ctrl: &Control,
    grid: &TimeGrid,
) -> Result<()> {
    if (model.delay() - grid.delay()).abs() > 1e-12 * grid.delay().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "model delay {} does not match grid delay {}",
            model.delay(),
            grid.delay()
        )));
    }
    if phi.dim() != model.state_dim() {
        return Err(Error::GridMismatch(format!(
            "initial segment dimension {} does not match state dimension {}",
            phi.dim(),
            model.state_dim()
        )));
    }
    if phi.n_nodes() != grid.n_history() + 1 {
        return Err(Error::GridMismatch(format!(
            "initial segment has {} nodes, grid history needs {}",
            phi.n_nodes(),
            grid.n_history() + 1
        )));
    }
    if ctrl.dim() != model.noise_dim() {
        return Err(Error::GridMismatch(format!(
            "control dimension {} does not match noise dimension {}",
            ctrl.dim(),
            model.noise_dim()
        )));
    }
    if !ctrl.grid().same_as(grid) {
        return Err(Error::GridMismatch("control grid differs from the solve grid".into()));
    }
    Ok(())
}

/// Recorded stage slopes of the fourth-order pass; lets the discrete adjoint
/// rebuild every stage state exactly.
#[derive(Default)]
pub(crate) struct StageRecord {
    /// Each `n_steps * d`, step-major.
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub k3: Vec<f64>,
}

/// Fourth-order method-of-steps pass. The control is frozen at its step
/// value across the stages of a step, so the integrand stays smooth inside
/// each step even though the control jumps at nodes.
pub(crate) fn solve_rk4(
    model: &CoefficientModel,
    phi: &InitialSegment,
    ctrl: &Control,
    grid: &TimeGrid,
    mut record: Option<&mut StageRecord>,
) -> Result<Trajectory> {
    let d = model.state_dim();
    let m = model.noise_dim();
    let h = grid.step();
    let origin = grid.origin_index();
    let lag = grid.n_history();
    let mut traj = Trajectory::with_history(*grid, phi, Origin::Skeleton)?;

    if let Some(rec) = record.as_deref_mut() {
        rec.k1.resize(grid.n_steps() * d, 0.0);
        rec.k2.resize(grid.n_steps() * d, 0.0);
        rec.k3.resize(grid.n_steps() * d, 0.0);
    }

    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut stage_x = vec![0.0; d];
    let mut y_mid = vec![0.0; d];

    for step in 0..grid.n_steps() {
        let i = origin + step;
        let j = i - lag;
        let t = grid.step_time(step);
        let u = ctrl.step_value(step);
        let values = traj.values_mut();

        for c in 0..d {
            y_mid[c] = 0.5 * (values[j * d + c] + values[(j + 1) * d + c]);
        }

        macro_rules! slope {
            ($t:expr, $x:expr, $y:expr, $out:ident) => {{
                model.drift_into($t, $x, $y, &mut b);
                model.diffusion_into($t, $x, $y, &mut s);
                for r in 0..d {
                    let mut acc = b[r];
                    for c in 0..m {
                        acc += s[r * m + c] * u[c];
                    }
                    $out[r] = acc;
                }
            }};
        }

        slope!(t, &values[i * d..(i + 1) * d], &values[j * d..(j + 1) * d], k1);
        for c in 0..d {
            stage_x[c] = values[i * d + c] + 0.5 * h * k1[c];
        }
        slope!(t + 0.5 * h, &stage_x, &y_mid, k2);
        for c in 0..d {
            stage_x[c] = values[i * d + c] + 0.5 * h * k2[c];
        }
        slope!(t + 0.5 * h, &stage_x, &y_mid, k3);
        for c in 0..d {
            stage_x[c] = values[i * d + c] + h * k3[c];
        }
        slope!(t + h, &stage_x, &values[(j + 1) * d..(j + 2) * d], k4);

        for c in 0..d {
            values[(i + 1) * d + c] =
                values[i * d + c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        let nrm = norm(&values[(i + 1) * d..(i + 2) * d]);
        if !nrm.is_finite() || nrm > BLOWUP_THRESHOLD {
            return Err(Error::BlowUp { step, t: t + h, norm: nrm });
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.k1[step * d..(step + 1) * d].copy_from_slice(&k1);
            rec.k2[step * d..(step + 1) * d].copy_from_slice(&k2);
            rec.k3[step * d..(step + 1) * d].copy_from_slice(&k3);
        }
    }
    Ok(traj)
}

enum SweepOutcome {
    Converged,
    /// Contraction factor at or above 0.9, or sweep budget exhausted.
    NeedSmallerWindow,
}

fn solve_picard(
    model: &CoefficientModel,
    phi: &InitialSegment,
    ctrl: &Control,
    grid: &TimeGrid,
    opts: &PicardOptions,
) -> Result<Trajectory> {
    let bound = apriori_bound(model, phi, ctrl);
    let level = opts.truncation_level.unwrap_or_else(|| (2.0 * bound.sqrt()).max(1.0));
    let truncated = truncate_sigma(model, level)?;
    let d = model.state_dim();
    let origin = grid.origin_index();

    let mut traj = Trajectory::with_history(*grid, phi, Origin::Skeleton)?;
    extend_constant(&mut traj, d, origin, 0, grid.n_steps());

    let mut start = 0usize;
    let mut window = grid.n_steps();
    while start < grid.n_steps() {
        let end = (start + window).min(grid.n_steps());
        match run_sweeps(model, &truncated, ctrl, grid, &mut traj, start, end, opts)? {
            SweepOutcome::Converged => {
                start = end;
                if start < grid.n_steps() {
                    extend_constant(&mut traj, d, origin, start, grid.n_steps());
                }
            }
            SweepOutcome::NeedSmallerWindow => {
                if window == 1 {
                    return Err(Error::PicardDiverged {
                        t_lo: grid.step_time(start),
                        t_hi: grid.step_time(end),
                    });
                }
                window = window.div_ceil(2);
                extend_constant(&mut traj, d, origin, start, grid.n_steps());
            }
        }
    }

    // The construction only solves the original equation when the truncation
    // stayed inactive along the whole path, history included.
    let reached = (0..grid.n_nodes()).map(|i| norm(traj.node(i))).fold(0.0, f64::max);
    if reached > level * (1.0 + 1e-12) {
        return Err(Error::TruncationActive { n: level, reached });
    }
    Ok(traj)
}

/// Freeze the forward part at the value of node `origin + from_step`.
fn extend_constant(traj: &mut Trajectory, d: usize, origin: usize, from_step: usize, to_step: usize) {
    let values = traj.values_mut();
    let anchor: Vec<f64> = values[(origin + from_step) * d..(origin + from_step + 1) * d].to_vec();
    for i in (origin + from_step + 1)..=(origin + to_step) {
        values[i * d..(i + 1) * d].copy_from_slice(&anchor);
    }
}

/// Sweep the fixed-point map on steps `[start, end)` until the update drops
/// below tolerance. Each sweep solves, by the same fourth-order pass as the
/// direct method, the delay ODE for `u` with the diffusion forcing frozen at
/// the previous iterate `zeta`:
/// `u' = b(t, u, u(. - tau)) + sigma_n(t, zeta(t), zeta(t - tau)) phi(t)`.
#[allow(clippy::too_many_arguments)]
fn run_sweeps(
    model: &CoefficientModel,
    truncated: &CoefficientModel,
    ctrl: &Control,
    grid: &TimeGrid,
    traj: &mut Trajectory,
    start: usize,
    end: usize,
    opts: &PicardOptions,
) -> Result<SweepOutcome> {
    let d = model.state_dim();
    let m = model.noise_dim();
    let h = grid.step();
    let origin = grid.origin_index();
    let lag = grid.n_history();

    let mut prev_update = f64::INFINITY;
    let mut grow_streak = 0usize;

    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    let mut force = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut stage_x = vec![0.0; d];
    let mut y_mid = vec![0.0; d];
    let mut zeta_mid = vec![0.0; d];
    let mut zeta_dmid = vec![0.0; d];

    for sweep in 0..opts.max_sweeps {
        let zeta = traj.values().to_vec();
        let values = traj.values_mut();

        for step in start..end {
            let i = origin + step;
            let j = i - lag;
            let t = grid.step_time(step);
            let u = ctrl.step_value(step);

            for c in 0..d {
                zeta_mid[c] = 0.5 * (zeta[i * d + c] + zeta[(i + 1) * d + c]);
                zeta_dmid[c] = 0.5 * (zeta[j * d + c] + zeta[(j + 1) * d + c]);
            }
            let mut forcing = |t: f64, x: &[f64], y: &[f64], out: &mut [f64]| {
                truncated.diffusion_into(t, x, y, &mut s);
                for r in 0..d {
                    let mut acc = 0.0;
                    for c in 0..m {
                        acc += s[r * m + c] * u[c];
                    }
                    out[r] = acc;
                }
            };
            forcing(t, &zeta[i * d..(i + 1) * d], &zeta[j * d..(j + 1) * d], &mut force[0]);
            forcing(t + 0.5 * h, &zeta_mid, &zeta_dmid, &mut force[1]);
            forcing(
                t + h,
                &zeta[(i + 1) * d..(i + 2) * d],
                &zeta[(j + 1) * d..(j + 2) * d],
                &mut force[2],
            );

            for c in 0..d {
                y_mid[c] = 0.5 * (values[j * d + c] + values[(j + 1) * d + c]);
            }
            model.drift_into(t, &values[i * d..(i + 1) * d], &values[j * d..(j + 1) * d], &mut b);
            for c in 0..d {
                k1[c] = b[c] + force[0][c];
            }
            for c in 0..d {
                stage_x[c] = values[i * d + c] + 0.5 * h * k1[c];
            }
            model.drift_into(t + 0.5 * h, &stage_x, &y_mid, &mut b);
            for c in 0..d {
                k2[c] = b[c] + force[1][c];
            }
            for c in 0..d {
                stage_x[c] = values[i * d + c] + 0.5 * h * k2[c];
            }
            model.drift_into(t + 0.5 * h, &stage_x, &y_mid, &mut b);
            for c in 0..d {
                k3[c] = b[c] + force[1][c];
            }
            for c in 0..d {
                stage_x[c] = values[i * d + c] + h * k3[c];
            }
            model.drift_into(t + h, &stage_x, &values[(j + 1) * d..(j + 2) * d], &mut b);
            for c in 0..d {
                k4[c] = b[c] + force[2][c];
            }
            for c in 0..d {
                values[(i + 1) * d + c] =
                    values[i * d + c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            let nrm = norm(&values[(i + 1) * d..(i + 2) * d]);
            if !nrm.is_finite() || nrm > BLOWUP_THRESHOLD {
                return Err(Error::BlowUp { step, t: t + h, norm: nrm });
            }
        }

        let update = (start..end)
            .map(|step| {
                let i = origin + step + 1;
                let mut acc = 0.0f64;
                for c in 0..d {
                    let diff = values[i * d + c] - zeta[i * d + c];
                    acc += diff * diff;
                }
                acc.sqrt()
            })
            .fold(0.0, f64::max);

        if update <= opts.tol {
            return Ok(SweepOutcome::Converged);
        }
        if update > prev_update {
            grow_streak += 1;
            if grow_streak >= 3 {
                return Err(Error::PicardDiverged {
                    t_lo: grid.step_time(start),
                    t_hi: grid.step_time(end),
                });
            }
        } else {
            grow_streak = 0;
        }
        let factor = update / prev_update;
        if sweep >= 2 && factor >= 0.9 {
            return Ok(SweepOutcome::NeedSmallerWindow);
        }
        prev_update = update;
    }
    Ok(SweepOutcome::NeedSmallerWindow)
}
