//! Rare-event Monte Carlo: event probabilities under small noise, Girsanov
//! importance sampling, and the noise sweep that extrapolates the
//! exponential decay rate for comparison with the variational value.
//!
//! Plain estimation counts event hits. Importance estimation simulates the
//! controlled dynamics under a tilting control `u` and averages
//! `1_event * exp(log_weight)`; with the discrete weight of
//! [`crate::sdde::simulate_controlled`] this is unbiased for the plain
//! probability at any step size. The effective sample size
//! `(sum w)^2 / sum w^2` of the weighted indicator sample measures how many
//! plain samples the weighted average is worth.
//!
//! The sweep fits `eps * log p(eps) = -rate + c * eps` by weighted least
//! squares. The linear-in-eps model is a pragmatic choice: the theory gives
//! only the `eps -> 0` limit, and sub-exponential prefactors contribute an
//! `eps log eps` term the fit absorbs imperfectly, which the residual-scaled
//! intercept uncertainty is meant to reflect.

use crate::control::Control;
use crate::error::{Error, Result};
use crate::event::EventSpec;
use crate::grid::TimeGrid;
use crate::model::CoefficientModel;
use crate::path::InitialSegment;
use crate::rate::{minimize_rate, MinimizeConfig};
use crate::rng::derive_stream;
use crate::sdde::{simulate, simulate_controlled, Scheme};
use crate::stats::{compensated_sum, weighted_linear_fit};
use rayon::prelude::*;
use serde::Serialize;

/// Effective sample size below which an importance estimate is flagged.
pub const ESS_WARN_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Plain,
    Importance,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbEstimate {
    pub p_hat: f64,
    /// `ln p_hat`; `None` when no weight landed in the event (`-inf`).
    pub log_p_hat: Option<f64>,
    pub stderr: f64,
    pub n: usize,
    pub method: EstimateMethod,
    /// `(sum w)^2 / sum w^2` over the weighted indicator sample
    /// (importance only).
    pub ess: Option<f64>,
    pub warnings: Vec<String>,
}

/// Estimate the probability that the small-noise path lands in `event`.
///
/// With `is_control` the samples are drawn from the controlled dynamics and
/// reweighted; without it the estimate is the plain hit frequency with Wald
/// standard error. Samples own disjoint streams keyed by index and are
/// reduced sequentially with compensated summation, so the estimate is a
/// pure function of the configuration.
#[allow(clippy::too_many_arguments)]
pub fn estimate_prob(
    model: &CoefficientModel,
    phi: &InitialSegment,
    eps: f64,
    event: &EventSpec,
    n_samples: usize,
    grid: &TimeGrid,
    scheme: Scheme,
    seed: u64,
    is_control: Option<&Control>,
) -> Result<ProbEstimate> {
    estimate_prob_streamed(model, phi, eps, event, n_samples, grid, scheme, seed, 0, is_control)
}

#[allow(clippy::too_many_arguments)]
fn estimate_prob_streamed(
    model: &CoefficientModel,
    phi: &InitialSegment,
    eps: f64,
    event: &EventSpec,
    n_samples: usize,
    grid: &TimeGrid,
    scheme: Scheme,
    seed: u64,
    stream_base: u64,
    is_control: Option<&Control>,
) -> Result<ProbEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("estimate needs n_samples >= 1".into()));
    }
    event.validate_for(grid, model.state_dim())?;
    let mut warnings = Vec::new();

    match is_control {
        None => {
            let hits: Vec<bool> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = derive_stream(seed, stream_base + i as u64);
                    simulate(model, phi, eps, grid, scheme, &mut rng)
                        .map(|traj| event.contains(&traj))
                })
                .collect::<Result<_>>()?;
            let k = hits.iter().filter(|h| **h).count();
            let n = n_samples as f64;
            let p_hat = k as f64 / n;
            let stderr = (p_hat * (1.0 - p_hat) / n).sqrt();
            let log_p_hat = if k > 0 { Some(p_hat.ln()) } else { None };
            if k == 0 {
                warnings.push(
                    "no hits observed; the event is too rare for plain sampling at this n - use importance sampling".into(),
                );
            }
            Ok(ProbEstimate {
                p_hat,
                log_p_hat,
                stderr,
                n: n_samples,
                method: EstimateMethod::Plain,
                ess: None,
                warnings,
            })
        }
        Some(u) => {
            let weighted: Vec<f64> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = derive_stream(seed, stream_base + i as u64);
                    simulate_controlled(model, phi, eps, u, grid, scheme, &mut rng).map(|run| {
                        if event.contains(&run.trajectory) {
                            run.log_weight.exp()
                        } else {
                            0.0
                        }
                    })
                })
                .collect::<Result<_>>()?;
            if weighted.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFiniteObjective);
            }
            let n = n_samples as f64;
            let sum_w = compensated_sum(weighted.iter().copied());
            let sum_w2 = compensated_sum(weighted.iter().map(|w| w * w));
            let p_hat = sum_w / n;
            // sample variance of the weighted indicator
            let var = (sum_w2 - n * p_hat * p_hat).max(0.0) / (n - 1.0).max(1.0);
            let stderr = (var / n).sqrt();
            let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
            let log_p_hat = if p_hat > 0.0 { Some(p_hat.ln()) } else { None };
            if p_hat == 0.0 {
                warnings.push("no weight landed in the event".into());
            }
            if ess < ESS_WARN_THRESHOLD {
                warnings.push(format!(
                    "effective sample size {ess:.2} < {ESS_WARN_THRESHOLD}; the importance estimate is unreliable"
                ));
            }
            Ok(ProbEstimate {
                p_hat,
                log_p_hat,
                stderr,
                n: n_samples,
                method: EstimateMethod::Importance,
                ess: Some(ess),
                warnings,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// Same sample count for every noise level.
    Uniform,
    /// Sample count grows like `eps_0 / eps` (doubling as eps halves).
    Geometric,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n_per_eps: usize,
    pub scheme: Scheme,
    pub seed: u64,
    /// Tilt every estimate by the minimizing control of the event.
    pub use_importance: bool,
    pub budget: BudgetMode,
    /// Settings for the variational minimization attached to the sweep.
    pub minimize: MinimizeConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_per_eps: 10_000,
            scheme: Scheme::TamedEuler,
            seed: 0,
            use_importance: true,
            budget: BudgetMode::Uniform,
            minimize: MinimizeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    #[serde(flatten)]
    pub estimate: ProbEstimate,
    /// `eps * ln p_hat`; `None` when the estimate was zero.
    pub eps_log_p: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `-intercept` of the weighted linear fit of `eps log p` against `eps`:
    /// the extrapolated decay rate, positive for a genuine rare event.
    pub extrapolated_rate: f64,
    /// Fit standard error of the intercept, scaled by the residual
    /// chi-square (absorbs both Monte Carlo noise and model misfit).
    pub rate_stderr: f64,
    /// `inf I` over the event from the variational minimizer, when the
    /// event admits minimization.
    pub variational_value: Option<f64>,
    /// `extrapolated_rate - variational_value`.
    pub gap: Option<f64>,
    pub warnings: Vec<String>,
}

/// Estimate the event probability across decreasing noise levels and
/// extrapolate the decay rate to `eps -> 0`.
///
/// When importance sampling is on, the minimizing control is computed once
/// and reused for every `eps` (the tilt is noise-level independent).
pub fn epsilon_sweep(
    model: &CoefficientModel,
    phi: &InitialSegment,
    eps_list: &[f64],
    event: &EventSpec,
    grid: &TimeGrid,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("sweep needs a nonempty eps list".into()));
    }
    for pair in eps_list.windows(2) {
        if !(pair[1] < pair[0]) {
            return Err(Error::InvalidArgument("eps list must be strictly decreasing".into()));
        }
    }
    if !(eps_list[eps_list.len() - 1] > 0.0) {
        return Err(Error::InvalidArgument("all eps must be positive".into()));
    }
    event.validate_for(grid, model.state_dim())?;

    let mut warnings = Vec::new();
    let (variational_value, tilt) = if event.is_minimizable() {
        let out = minimize_rate(model, phi, event, grid, &cfg.minimize)?;
        if !out.converged {
            warnings.push(format!(
                "variational minimization did not converge (violation {:.3e}); using its best iterate",
                out.violation
            ));
        }
        (Some(out.value), Some(out.control))
    } else {
        (None, None)
    };
    if cfg.use_importance && tilt.is_none() {
        return Err(Error::InvalidArgument(
            "importance sampling needs a minimizable event for the tilting control".into(),
        ));
    }

    let mut rows = Vec::with_capacity(eps_list.len());
    let mut stream_base = 0u64;
    let eps0 = eps_list[0];
    for &eps in eps_list {
        let n = match cfg.budget {
            BudgetMode::Uniform => cfg.n_per_eps,
            BudgetMode::Geometric => ((cfg.n_per_eps as f64) * (eps0 / eps)).round() as usize,
        };
        let estimate = estimate_prob_streamed(
            model,
            phi,
            eps,
            event,
            n,
            grid,
            cfg.scheme,
            cfg.seed,
            stream_base,
            if cfg.use_importance { tilt.as_ref() } else { None },
        )?;
        stream_base += n as u64;
        for w in &estimate.warnings {
            warnings.push(format!("eps={eps}: {w}"));
        }
        let eps_log_p = estimate.log_p_hat.map(|l| eps * l);
        rows.push(SweepRow { eps, estimate, eps_log_p });
    }

    // weighted linear fit of eps*log p against eps; rows with p_hat = 0 are
    // excluded (already warned above)
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sigmas = Vec::new();
    for row in &rows {
        if let Some(y) = row.eps_log_p {
            // delta method: sd(eps ln p) = eps * stderr / p
            let sd = if row.estimate.p_hat > 0.0 {
                (row.eps * row.estimate.stderr / row.estimate.p_hat).max(1e-9)
            } else {
                1e-9
            };
            xs.push(row.eps);
            ys.push(y);
            sigmas.push(sd);
        } else {
            warnings.push(format!("eps={}: excluded from the fit (zero estimate)", row.eps));
        }
    }
    if xs.len() < 3 {
        return Err(Error::FitUnderdetermined(xs.len()));
    }
    let fit = weighted_linear_fit(&xs, &ys, &sigmas).ok_or(Error::FitUnderdetermined(xs.len()))?;
    let extrapolated_rate = -fit.intercept;
    let gap = variational_value.map(|v| extrapolated_rate - v);

    Ok(SweepResult {
        rows,
        extrapolated_rate,
        rate_stderr: fit.intercept_stderr,
        variational_value,
        gap,
        warnings,
    })
}

/// Deterministic CSV rendering of a sweep (`eps,p_hat,stderr,eps_log_p,ess`).
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("eps,p_hat,stderr,eps_log_p,ess\n");
    for row in &result.rows {
        let eps_log_p = row.eps_log_p.map(|v| format!("{v}")).unwrap_or_default();
        let ess = row.estimate.ess.map(|v| format!("{v}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.eps, row.estimate.p_hat, row.estimate.stderr, eps_log_p, ess
        ));
    }
    out
}

/// The machine-readable summary attached to a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub extrapolated_rate: f64,
    pub rate_stderr: f64,
    pub variational_value: Option<f64>,
    pub gap: Option<f64>,
    pub n_rows: usize,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn summary(&self) -> SweepSummary {
        SweepSummary {
            extrapolated_rate: self.extrapolated_rate,
            rate_stderr: self.rate_stderr,
            variational_value: self.variational_value,
            gap: self.gap,
            n_rows: self.rows.len(),
            warnings: self.warnings.clone(),
        }
    }

}
