//! Empirical verification of the structural conditions a model declares.
//!
//! The conditions quantify over all of `R^d`, which is undecidable for
//! black-box coefficients, so the checker samples argument tuples
//! `(t, x1, x2, y1, y2)` uniformly from `[0, t_max] x [-R, R]^{4d}` and
//! compares the worst observed ratio of each condition against the declared
//! constant. Sampling is sequential from one stream, so a longer run extends
//! a shorter one: increasing `n_points` can only raise the observed worst
//! ratios, never turn a fail into a pass.

use crate::error::{Error, Result};
use crate::model::CoefficientModel;
use crate::rng::RngStream;
use crate::stats::{dot, norm_sq};
use serde::Serialize;

/// Relative slack applied when comparing a sampled worst ratio against its
/// declared constant, covering floating-point noise in the ratio itself.
pub const RATIO_SLACK: f64 = 1e-9;

/// Bisection bracket and tolerance for the largest feasible `eta`.
pub const ETA_BRACKET: (f64, f64) = (1.0, 64.0);
pub const ETA_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    /// `|b(t,0,0)| + |sigma(t,0,0)| <= k1`.
    OriginBound,
    /// One-sided monotonicity with the declared `eta` against `k2`.
    Monotonicity,
    /// Polynomial growth of drift differences against `k3`.
    DriftGrowth,
    /// Coercivity `<x, b> + (eta/2)|sigma|^2 <= k4 (1 + |x|^2 + |y|^2)`.
    Coercivity,
    /// Polynomial growth of diffusion differences against `k5`.
    DiffusionGrowth,
    /// Joint superlinear bound `|b| + |sigma| <= k6 (1 + |x|^q + |y|^q)`.
    SuperlinearBound,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionRecord {
    pub condition: ConditionId,
    /// Worst sampled ratio of the condition's left side to its right side
    /// (dropping the declared constant).
    pub worst_ratio: f64,
    pub declared: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub n_points: usize,
    pub radius: f64,
    pub seed: u64,
    pub conditions: Vec<ConditionRecord>,
    /// Largest `eta` in [`ETA_BRACKET`] for which the sampled monotonicity
    /// condition holds with the declared `k2`; clamped to a bracket end when
    /// the condition holds nowhere (lower end) or everywhere (upper end).
    pub largest_feasible_eta: f64,
    pub eta_declared: f64,
    pub q: f64,
    /// `largest_feasible_eta > 2q - 1`, the hypothesis under which the
    /// variational decay-rate description applies.
    pub theorem_gate_pass: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn condition(&self, id: ConditionId) -> &ConditionRecord {
        self.conditions.iter().find(|c| c.condition == id).expect("all conditions are recorded")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub n_points: usize,
    /// Box radius `R`: states are sampled from `[-R, R]^d`.
    pub radius: f64,
    /// Times are sampled from `[0, t_max]`.
    pub t_max: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_points: 100_000, radius: 5.0, t_max: 1.0, seed: 0 }
    }
}

pub fn check_assumptions(model: &CoefficientModel, cfg: &SamplerConfig) -> Result<AssumptionReport> {
    if cfg.n_points == 0 {
        return Err(Error::InvalidArgument("sampler needs n_points >= 1".into()));
    }
    if !(cfg.radius > 0.0) {
        return Err(Error::InvalidArgument("sampler radius must be positive".into()));
    }
    let d = model.state_dim();
    let dm = d * model.noise_dim();
    let q = model.declared.q;
    let eta = model.declared.eta;
    let mut rng = RngStream::new(cfg.seed, 0);

    let mut worst_origin: f64 = 0.0;
    let mut worst_growth_b: f64 = 0.0;
    let mut worst_coercivity: f64 = f64::NEG_INFINITY;
    let mut worst_growth_sigma: f64 = 0.0;
    let mut worst_superlinear: f64 = 0.0;

    // Per-sample pieces of the monotonicity ratio, kept so the eta bisection
    // can re-evaluate the worst case without re-sampling:
    // ratio(eta) = (drift_part + eta * sigma_part) / denom.
    let mut mono_drift = Vec::with_capacity(cfg.n_points);
    let mut mono_sigma = Vec::with_capacity(cfg.n_points);
    let mut mono_denom = Vec::with_capacity(cfg.n_points);

    let mut x1 = vec![0.0; d];
    let mut x2 = vec![0.0; d];
    let mut y1 = vec![0.0; d];
    let mut y2 = vec![0.0; d];
    let zero = vec![0.0; d];
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; dm];
    let mut s2 = vec![0.0; dm];

    let check_finite = |t: f64, x: &[f64], y: &[f64], vals: &[f64]| -> Result<()> {
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoefficient { t, x: x.to_vec(), y: y.to_vec() });
        }
        Ok(())
    };

    for _ in 0..cfg.n_points {
        let t = rng.uniform(0.0, cfg.t_max);
        for v in x1.iter_mut().chain(&mut x2).chain(&mut y1).chain(&mut y2) {
            *v = rng.uniform(-cfg.radius, cfg.radius);
        }

        model.drift_into(t, &x1, &y1, &mut b1);
        model.diffusion_into(t, &x1, &y1, &mut s1);
        check_finite(t, &x1, &y1, &b1)?;
        check_finite(t, &x1, &y1, &s1)?;
        model.drift_into(t, &x2, &y2, &mut b2);
        model.diffusion_into(t, &x2, &y2, &mut s2);
        check_finite(t, &x2, &y2, &b2)?;
        check_finite(t, &x2, &y2, &s2)?;

        // origin bound (depends on t only)
        {
            let mut b0 = vec![0.0; d];
            let mut s0 = vec![0.0; dm];
            model.drift_into(t, &zero, &zero, &mut b0);
            model.diffusion_into(t, &zero, &zero, &mut s0);
            check_finite(t, &zero, &zero, &b0)?;
            check_finite(t, &zero, &zero, &s0)?;
            worst_origin = worst_origin.max(norm_sq(&b0).sqrt() + norm_sq(&s0).sqrt());
        }

        let dx: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a - b).collect();
        let db: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a - b).collect();
        let ds: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a - b).collect();
        let denom = norm_sq(&dx) + norm_sq(&dy);

        if denom > 0.0 {
            mono_drift.push(dot(&dx, &db));
            mono_sigma.push(norm_sq(&ds));
            mono_denom.push(denom);
        }

        // growth conditions share the factor
        // (1 + |x1|^{q-1} + |x2|^{q-1} + |y1|^{q-1} + |y2|^{q-1}) (|dx| + |dy|)
        let growth_den = (1.0
            + norm_sq(&x1).sqrt().powf(q - 1.0)
            + norm_sq(&x2).sqrt().powf(q - 1.0)
            + norm_sq(&y1).sqrt().powf(q - 1.0)
            + norm_sq(&y2).sqrt().powf(q - 1.0))
            * (norm_sq(&dx).sqrt() + norm_sq(&dy).sqrt());
        if growth_den > 0.0 {
            worst_growth_b = worst_growth_b.max(norm_sq(&db).sqrt() / growth_den);
            worst_growth_sigma = worst_growth_sigma.max(norm_sq(&ds).sqrt() / growth_den);
        }

        // single-point conditions, evaluated at (x1, y1)
        let single_den = 1.0 + norm_sq(&x1) + norm_sq(&y1);
        worst_coercivity =
            worst_coercivity.max((dot(&x1, &b1) + 0.5 * eta * norm_sq(&s1)) / single_den);
        let super_den = 1.0 + norm_sq(&x1).sqrt().powf(q) + norm_sq(&y1).sqrt().powf(q);
        worst_superlinear =
            worst_superlinear.max((norm_sq(&b1).sqrt() + norm_sq(&s1).sqrt()) / super_den);
    }

    let worst_mono = |eta: f64| -> f64 {
        mono_drift
            .iter()
            .zip(&mono_sigma)
            .zip(&mono_denom)
            .map(|((b, s), den)| (b + eta * s) / den)
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let declared = &model.declared;
    let passes = |worst: f64, bound: f64| worst <= bound * (1.0 + RATIO_SLACK) + RATIO_SLACK;

    let worst_mono_declared = worst_mono(eta);
    let conditions = vec![
        ConditionRecord {
            condition: ConditionId::OriginBound,
            worst_ratio: worst_origin,
            declared: declared.k1,
            pass: passes(worst_origin, declared.k1),
        },
        ConditionRecord {
            condition: ConditionId::Monotonicity,
            worst_ratio: worst_mono_declared,
            declared: declared.k2,
            pass: passes(worst_mono_declared, declared.k2),
        },
        ConditionRecord {
            condition: ConditionId::DriftGrowth,
            worst_ratio: worst_growth_b,
            declared: declared.k3,
            pass: passes(worst_growth_b, declared.k3),
        },
        ConditionRecord {
            condition: ConditionId::Coercivity,
            worst_ratio: worst_coercivity,
            declared: declared.k4,
            pass: passes(worst_coercivity, declared.k4),
        },
        ConditionRecord {
            condition: ConditionId::DiffusionGrowth,
            worst_ratio: worst_growth_sigma,
            declared: declared.k5,
            pass: passes(worst_growth_sigma, declared.k5),
        },
        ConditionRecord {
            condition: ConditionId::SuperlinearBound,
            worst_ratio: worst_superlinear,
            declared: declared.k6,
            pass: passes(worst_superlinear, declared.k6),
        },
    ];

    // The monotonicity ratio is nondecreasing in eta (the sigma part is a
    // squared norm), so feasibility is an interval and bisection applies.
    let feasible = |eta: f64| passes(worst_mono(eta), declared.k2);
    let (mut lo, mut hi) = ETA_BRACKET;
    let largest_feasible_eta = if !feasible(lo) {
        lo
    } else if feasible(hi) {
        hi
    } else {
        while hi - lo > ETA_TOL {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let theorem_gate_pass = largest_feasible_eta > 2.0 * q - 1.0;

    Ok(AssumptionReport {
        model: model.name().to_string(),
        n_points: cfg.n_points,
        radius: cfg.radius,
        seed: cfg.seed,
        conditions,
        largest_feasible_eta,
        eta_declared: eta,
        q,
        theorem_gate_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientModel, Declared};
    use std::sync::Arc;

    fn cfg(n: usize, seed: u64) -> SamplerConfig {
        SamplerConfig { n_points: n, radius: 5.0, t_max: 1.0, seed }
    }

    #[test]
    fn cubic_with_constant_noise_passes_everything() {
        let model = CoefficientModel::cubic_const_sigma(1.0).unwrap();
        let report = check_assumptions(&model, &cfg(20_000, 1)).unwrap();
        assert!(report.all_pass(), "{report:?}");
        // the diffusion difference vanishes, so every eta in the bracket works
        assert_eq!(report.largest_feasible_eta, ETA_BRACKET.1);
        assert!(report.theorem_gate_pass);
        // analytic worst monotonicity ratio is (1 + sqrt 2)/2 ~ 1.2071
        let mono = report.condition(ConditionId::Monotonicity);
        assert!(mono.worst_ratio <= 1.2071067811865476 + 1e-9);
        assert!(mono.worst_ratio > 1.0, "sampling should get close to the optimum");
    }

    #[test]
    fn quadratic_noise_fails_monotonicity_with_large_eta() {
        let model = CoefficientModel::cubic_quadratic_sigma(1.0).unwrap();
        let report = check_assumptions(&model, &cfg(20_000, 1)).unwrap();
        let mono = report.condition(ConditionId::Monotonicity);
        assert!(!mono.pass, "eta = 6 should fail: {mono:?}");
        assert!(report.largest_feasible_eta <= 1.1);
        assert!(!report.theorem_gate_pass);
        // everything except monotonicity still passes
        for c in &report.conditions {
            if c.condition != ConditionId::Monotonicity {
                assert!(c.pass, "{c:?}");
            }
        }
    }

    #[test]
    fn zero_coefficients_pass_with_any_constants() {
        let zero: crate::model::CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
        let declared =
            Declared { q: 2.0, eta: 5.0, k1: 0.0, k2: 0.0, k3: 0.0, k4: 0.0, k5: 0.0, k6: 0.0 };
        let model =
            CoefficientModel::new("zero", 1, 1, 1.0, zero.clone(), zero, declared).unwrap();
        let report = check_assumptions(&model, &cfg(2_000, 3)).unwrap();
        assert!(report.all_pass());
    }

    #[test]
    fn deterministic_and_prefix_monotone() {
        let model = CoefficientModel::cubic_quadratic_sigma(1.0).unwrap();
        let a = check_assumptions(&model, &cfg(4_000, 7)).unwrap();
        let b = check_assumptions(&model, &cfg(4_000, 7)).unwrap();
        for (ca, cb) in a.conditions.iter().zip(&b.conditions) {
            assert_eq!(ca.worst_ratio.to_bits(), cb.worst_ratio.to_bits());
        }
        // a longer run under the same seed can only increase worst ratios
        let c = check_assumptions(&model, &cfg(8_000, 7)).unwrap();
        for (ca, cc) in a.conditions.iter().zip(&c.conditions) {
            assert!(cc.worst_ratio >= ca.worst_ratio);
            if !ca.pass {
                assert!(!cc.pass, "a fail must never become a pass with more points");
            }
        }
    }

    #[test]
    fn non_finite_coefficients_are_reported_with_the_point() {
        let bad: crate::model::CoeffFn = Arc::new(|_t, x, _y, out| {
            out[0] = if x[0] > 4.9 { f64::NAN } else { 0.0 };
        });
        let ok: crate::model::CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
        let declared =
            Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 };
        let model = CoefficientModel::new("bad", 1, 1, 1.0, bad, ok, declared).unwrap();
        let err = check_assumptions(&model, &cfg(10_000, 0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCoefficient { .. }));
    }

    #[test]
    fn gate_equals_the_inequality_exactly() {
        let model = CoefficientModel::linear_ou(1.0).unwrap();
        let report = check_assumptions(&model, &cfg(5_000, 2)).unwrap();
        assert_eq!(report.theorem_gate_pass, report.largest_feasible_eta > 2.0 * report.q - 1.0);
        assert!(report.all_pass());
    }
}
