//! Acceptance suite: one test per gate criterion, each printing a PASS line
//! with the measured quantities (run with `--nocapture` to see them).
//!
//! Oracle values used below and their provenance:
//! - delay example z(2) = 3.5: method of steps by hand (z = 1 + t on [0,1],
//!   then z' = t), confirmed by an independent fine-grid Euler integration;
//! - Brownian halfspace rate a^2/2 and mean-reverting rate
//!   1/(1 - e^{-2}) = 1.1565176427496657: Gaussian endpoint laws
//!   (X(1) ~ N(0, eps (1-e^{-2})/2) for the mean-reverting model), matching
//!   the variational path computed analytically;
//! - explicit-scheme witness values -10.5 and 568.3125: two hand iterations
//!   of x + h b(x).

use sdde_ldp::check::{check_assumptions, ConditionId, SamplerConfig};
use sdde_ldp::control::Control;
use sdde_ldp::event::{EventSpec, HalfspaceSide};
use sdde_ldp::mc::{epsilon_sweep, estimate_prob, SweepConfig};
use sdde_ldp::model::{CoeffFn, Declared};
use sdde_ldp::rate::{evaluate_rate, minimize_rate, MinimizeConfig};
use sdde_ldp::sdde::{moment_sweep, simulate, Scheme};
use sdde_ldp::skeleton::{apriori_bound, solve_skeleton, SkeletonConfig};
use sdde_ldp::{CoefficientModel, InitialSegment, RngStream, TimeGrid};
use std::sync::Arc;
use std::time::Instant;

const OU_RATE: f64 = 1.1565176427496657; // 1 / (1 - e^{-2})

fn constant_phi(grid: &TimeGrid, v: f64) -> InitialSegment {
    InitialSegment::constant(grid, &[v]).unwrap()
}

fn halfspace_above(a: f64) -> EventSpec {
    EventSpec::EndpointHalfspace { coord: 0, threshold: a, side: HalfspaceSide::Above }
}

fn white_noise_control(grid: &TimeGrid, rng: &mut RngStream, budget: f64) -> Control {
    let values: Vec<f64> = (0..grid.n_steps()).map(|_| rng.standard_normal()).collect();
    let mut ctrl = Control::new(*grid, 1, values).unwrap();
    ctrl.rescale_to(budget);
    ctrl
}

/// Criterion 1: the constant-noise cubic model passes every declared
/// condition with the theorem gate open; the quadratic-noise variant fails
/// monotonicity at eta = 6 with largest feasible eta at the bracket floor.
#[test]
fn criterion_01_assumption_gate() {
    let start = Instant::now();
    let cfg = SamplerConfig { n_points: 100_000, radius: 5.0, t_max: 1.0, seed: 2026 };

    let good = CoefficientModel::cubic_const_sigma(1.0).unwrap();
    let report = check_assumptions(&good, &cfg).unwrap();
    assert!(report.all_pass(), "constant-noise cubic must pass everything: {report:?}");
    assert!(report.theorem_gate_pass);

    let paper = CoefficientModel::cubic_quadratic_sigma(1.0).unwrap();
    let report2 = check_assumptions(&paper, &cfg).unwrap();
    let mono = report2.condition(ConditionId::Monotonicity);
    assert!(!mono.pass, "quadratic-noise monotonicity must fail at eta = 6: {mono:?}");
    assert!(
        report2.largest_feasible_eta <= 1.1,
        "largest feasible eta {}",
        report2.largest_feasible_eta
    );
    assert!(!report2.theorem_gate_pass);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "PASS criterion 1 (assumption gate): const-sigma all pass, gate open (eta* = {:.1}); \
         quadratic-sigma monotonicity worst ratio {:.2} > {} with eta* = {:.4} <= 1.1; {:?}",
        report.largest_feasible_eta,
        mono.worst_ratio,
        mono.declared,
        report2.largest_feasible_eta,
        elapsed
    );
}

/// Criterion 2: delayed-drift example hits z(2) = 3.5 to 1e-6 at h = 1e-3,
/// and the exponential-decay example converges at fourth order.
#[test]
fn criterion_02_skeleton_correctness() {
    let declared = Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 };
    let delay_drift: CoeffFn = Arc::new(|_t, _x, y, out| out[0] = y[0]);
    let no_noise: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let model =
        CoefficientModel::new("delayed", 1, 1, 1.0, delay_drift, no_noise.clone(), declared)
            .unwrap();
    let grid = TimeGrid::new(2.0, 1e-3, 1.0).unwrap();
    let phi = constant_phi(&grid, 1.0);
    let ctrl = Control::zeros(grid, 1);
    let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default()).unwrap();
    let z2 = z.endpoint()[0];
    assert!((z2 - 3.5).abs() < 1e-6, "z(2) = {z2}");

    let decay: CoeffFn = Arc::new(|_t, x, _y, out| out[0] = -x[0]);
    let model = CoefficientModel::new("decay", 1, 1, 0.25, decay, no_noise, declared).unwrap();
    let mut errors = Vec::new();
    for &h in &[0.05, 0.025, 0.0125, 0.00625] {
        let grid = TimeGrid::new(1.0, h, 0.25).unwrap();
        let phi = constant_phi(&grid, 1.0);
        let ctrl = Control::zeros(grid, 1);
        let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default()).unwrap();
        let err = (grid.origin_index()..grid.n_nodes())
            .map(|i| (z.node(i)[0] - (-grid.node_time(i)).exp()).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    for r in &ratios {
        assert!((12.0..=20.0).contains(r), "convergence ratios {ratios:?}");
    }
    println!(
        "PASS criterion 2 (skeleton): z(2) = {z2:.9}; error ratios per halving {:?}",
        ratios.iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
}

/// Criterion 3: the sup-norm-squared of the controlled skeleton stays below
/// the a priori bound (1% slack) for 100 random controls of budget <= 4.
#[test]
fn criterion_03_apriori_bound() {
    let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
    let model = CoefficientModel::cubic_const_sigma(0.5).unwrap();
    let phi = constant_phi(&grid, 1.0);
    let mut rng = RngStream::new(31, 0);
    let mut worst_margin = f64::INFINITY;
    for trial in 0..100 {
        let budget = 4.0 * (0.1 + 0.9 * (trial as f64 / 99.0));
        let ctrl = white_noise_control(&grid, &mut rng, budget);
        let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default()).unwrap();
        let sup = (0..grid.n_nodes())
            .map(|i| z.node(i)[0].abs())
            .fold(0.0, f64::max);
        let bound = apriori_bound(&model, &phi, &ctrl);
        assert!(
            sup * sup <= bound * 1.01,
            "trial {trial}: sup^2 = {} exceeds bound {bound}",
            sup * sup
        );
        worst_margin = worst_margin.min(bound * 1.01 / (sup * sup));
    }
    println!("PASS criterion 3 (a priori bound): 100/100 controls, worst margin factor {worst_margin:.2e}");
}

/// Criterion 4: the running integral of a budget-4 control has modulus of
/// continuity at most sqrt(4 |t - s|) over all node pairs.
#[test]
fn criterion_04_integral_modulus() {
    let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
    let alpha = 4.0;
    let mut rng = RngStream::new(41, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let ctrl = white_noise_control(&grid, &mut rng, alpha);
        let path = ctrl.integral();
        for i in 0..=grid.n_steps() {
            for j in (i + 1)..=grid.n_steps() {
                let dt = (j - i) as f64 * grid.step();
                let ratio = (path[j] - path[i]).abs() / dt.sqrt();
                worst = worst.max(ratio);
            }
        }
    }
    assert!(worst <= alpha.sqrt() + 1e-9, "worst modulus ratio {worst}");
    println!(
        "PASS criterion 4 (integral modulus): worst |I(t)-I(s)|/sqrt(t-s) = {worst:.6} <= {:.6}",
        alpha.sqrt()
    );
}

/// Criterion 5: explicit stepping reproduces the hand-computed explosion
/// exactly; the tamed step stays in [-3, 3] for ten thousand steps.
#[test]
fn criterion_05_taming() {
    let declared = Declared { q: 3.0, eta: 6.0, k1: 1.0, k2: 1.0, k3: 4.0, k4: 1.0, k5: 1.0, k6: 2.0 };
    let drift: CoeffFn = Arc::new(|_t, x, _y, out| out[0] = -x[0] * x[0] * x[0]);
    let no_noise: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let model = CoefficientModel::new("cubic_decay", 1, 1, 0.5, drift, no_noise, declared).unwrap();

    let grid = TimeGrid::new(1.0, 0.5, 0.5).unwrap();
    let phi = constant_phi(&grid, 3.0);
    let mut rng = RngStream::new(0, 0);
    let x = simulate(&model, &phi, 0.0, &grid, Scheme::Euler, &mut rng).unwrap();
    let o = grid.origin_index();
    assert_eq!(x.node(o + 1)[0], -10.5);
    assert_eq!(x.node(o + 2)[0].abs(), 568.3125);

    let long = TimeGrid::new(5_000.0, 0.5, 0.5).unwrap();
    let phi = constant_phi(&long, 3.0);
    let mut rng = RngStream::new(0, 0);
    let x = simulate(&model, &phi, 0.0, &long, Scheme::TamedEuler, &mut rng).unwrap();
    assert_eq!(long.n_steps(), 10_000);
    let max_abs = x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_abs <= 3.0, "tamed path reached {max_abs}");
    println!(
        "PASS criterion 5 (taming): explicit x1 = -10.5, |x2| = 568.3125 exactly; \
         tamed stays within [-3, 3] for 10^4 steps (max |x| = {max_abs:.6})"
    );
}

/// Criterion 6: the sup-moment estimates stay uniformly bounded as the noise
/// vanishes (max <= 2 min over the eps grid).
#[test]
fn criterion_06_moment_uniformity() {
    let start = Instant::now();
    let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
    let model = CoefficientModel::cubic_const_sigma(0.5).unwrap();
    let phi = constant_phi(&grid, 1.0);
    let sweep = moment_sweep(
        &model,
        &phi,
        &[0.4, 0.2, 0.1, 0.05, 0.01],
        4.0,
        10_000,
        &grid,
        Scheme::TamedEuler,
        61,
    )
    .unwrap();
    let max = sweep.rows.iter().map(|r| r.estimate).fold(f64::NEG_INFINITY, f64::max);
    let min = sweep.rows.iter().map(|r| r.estimate).fold(f64::INFINITY, f64::min);
    assert!(
        max <= 2.0 * min,
        "estimates not uniform: {:?}",
        sweep.rows.iter().map(|r| (r.eps, r.estimate)).collect::<Vec<_>>()
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "PASS criterion 6 (moment uniformity): estimates in [{min:.4}, {max:.4}], \
         max/min = {:.3} <= 2; {elapsed:?}",
        max / min
    );
}

/// Criterion 7: rate evaluation inverts the skeleton solve; value within
/// max(2%, 10 h) of the control cost, feasible every time.
#[test]
fn criterion_07_rate_round_trip() {
    let h = 1e-3;
    let grid = TimeGrid::new(1.0, h, 0.1).unwrap();
    let model = CoefficientModel::cubic_const_sigma(0.1).unwrap();
    let phi = constant_phi(&grid, 1.0);
    let mut rng = RngStream::new(71, 0);
    let mut worst_rel = 0.0f64;
    for trial in 0..50 {
        let budget = 0.5 + 3.5 * (trial as f64 / 49.0);
        let ctrl = white_noise_control(&grid, &mut rng, budget);
        let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default()).unwrap();
        let cert = evaluate_rate(&model, &z, &grid).unwrap();
        assert!(cert.feasible, "trial {trial} infeasible");
        let expected = 0.5 * ctrl.l2_norm_sq();
        let tol = (0.02 * expected).max(10.0 * h);
        assert!(
            (cert.value - expected).abs() <= tol,
            "trial {trial}: value {} vs expected {expected}",
            cert.value
        );
        worst_rel = worst_rel.max((cert.value - expected).abs() / expected);
    }
    println!(
        "PASS criterion 7 (rate round-trip): 50/50 feasible, worst relative deviation {:.3e}",
        worst_rel
    );
}

/// Criterion 8: the minimizer reproduces the two Gaussian variational
/// oracles to 1%.
#[test]
fn criterion_08_variational_oracles() {
    let start = Instant::now();
    let declared = Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 };
    let zero_drift: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let unit_noise: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(1.0));
    let brownian =
        CoefficientModel::new("flat", 1, 1, 0.5, zero_drift, unit_noise, declared).unwrap();
    let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
    let phi = constant_phi(&grid, 0.0);
    let event = halfspace_above(1.0);

    let out = minimize_rate(&brownian, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
    assert!(out.converged, "brownian case violation {}", out.violation);
    let rel_a = (out.value - 0.5).abs() / 0.5;
    assert!(rel_a <= 0.01, "brownian value {} vs 0.5", out.value);
    let t_a = start.elapsed();
    assert!(t_a.as_secs_f64() < 60.0);

    let t0 = Instant::now();
    let ou = CoefficientModel::linear_ou(0.5).unwrap();
    let out2 = minimize_rate(&ou, &phi, &event, &grid, &MinimizeConfig::default()).unwrap();
    assert!(out2.converged, "mean-reverting case violation {}", out2.violation);
    let rel_b = (out2.value - OU_RATE).abs() / OU_RATE;
    assert!(rel_b <= 0.01, "mean-reverting value {} vs {OU_RATE}", out2.value);
    let t_b = t0.elapsed();
    assert!(t_b.as_secs_f64() < 60.0);

    println!(
        "PASS criterion 8 (variational oracles): 0.5 within {:.3e} ({t_a:?}), \
         {OU_RATE:.4} within {:.3e} ({t_b:?})",
        rel_a, rel_b
    );
}

/// Criterion 9: the importance-sampled estimate under the optimal tilt
/// agrees with plain counting within 3 combined standard errors.
#[test]
fn criterion_09_girsanov_unbiasedness() {
    let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
    let model = CoefficientModel::linear_ou(0.5).unwrap();
    let phi = constant_phi(&grid, 0.0);
    let event = halfspace_above(0.5);
    let eps = 0.5;
    let n = 100_000;

    let plain = estimate_prob(
        &model, &phi, eps, &event, n, &grid, Scheme::TamedEuler, 91, None,
    )
    .unwrap();
    let tilt = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default())
        .unwrap()
        .control;
    let is = estimate_prob(
        &model, &phi, eps, &event, n, &grid, Scheme::TamedEuler, 92, Some(&tilt),
    )
    .unwrap();
    let gap = (plain.p_hat - is.p_hat).abs();
    let band = 3.0 * (plain.stderr.powi(2) + is.stderr.powi(2)).sqrt();
    assert!(
        gap <= band,
        "plain {} +- {} vs importance {} +- {}",
        plain.p_hat,
        plain.stderr,
        is.p_hat,
        is.stderr
    );
    println!(
        "PASS criterion 9 (Girsanov unbiasedness): plain {:.5} vs importance {:.5}, \
         gap {:.2e} <= band {:.2e}, ESS {:.0}",
        plain.p_hat,
        is.p_hat,
        gap,
        band,
        is.ess.unwrap()
    );
}

fn criterion_10_sweep() -> sdde_ldp::mc::SweepResult {
    let grid = TimeGrid::new(1.0, 0.01, 0.5).unwrap();
    let model = CoefficientModel::linear_ou(0.5).unwrap();
    let phi = constant_phi(&grid, 0.0);
    let event = halfspace_above(1.0);
    let cfg = SweepConfig {
        n_per_eps: 100_000,
        scheme: Scheme::TamedEuler,
        seed: 101,
        use_importance: true,
        ..Default::default()
    };
    epsilon_sweep(&model, &phi, &[0.2, 0.1, 0.05, 0.02], &event, &grid, &cfg).unwrap()
}

/// Criterion 10: the extrapolated decay rate lands within 15% of the
/// variational oracle and every row respects the upper-bound direction with
/// the stated slack.
#[test]
fn criterion_10_end_to_end_decay_rate() {
    let start = Instant::now();
    let sweep = criterion_10_sweep();
    let rel = (sweep.extrapolated_rate - OU_RATE).abs() / OU_RATE;
    assert!(
        rel <= 0.15,
        "extrapolated {} vs oracle {OU_RATE} ({:.1}%)",
        sweep.extrapolated_rate,
        rel * 100.0
    );
    for row in &sweep.rows {
        let y = row.eps_log_p.expect("importance rows must be nonzero");
        let sd_y = row.eps * row.estimate.stderr / row.estimate.p_hat;
        let bound = -OU_RATE + 3.0 * sd_y + 0.25 * row.eps;
        assert!(
            y <= bound,
            "eps = {}: eps log p = {y} above the bound {bound}",
            row.eps
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    println!(
        "PASS criterion 10 (end-to-end decay rate): extrapolated {:.4} vs {OU_RATE:.4} \
         ({:.1}% off, fit stderr {:.4}); all {} rows below the upper bound; {elapsed:?}",
        sweep.extrapolated_rate,
        rel * 100.0,
        sweep.rate_stderr,
        sweep.rows.len()
    );
}

/// Criterion 11: the full criterion-10 configuration is bit-reproducible.
#[test]
fn criterion_11_reproducibility() {
    let a = criterion_10_sweep();
    let b = criterion_10_sweep();
    let ja = serde_json::to_string_pretty(&a.summary()).unwrap();
    let jb = serde_json::to_string_pretty(&b.summary()).unwrap();
    assert_eq!(ja, jb, "summaries differ between identical runs");
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.estimate.p_hat.to_bits(), rb.estimate.p_hat.to_bits());
        assert_eq!(ra.estimate.stderr.to_bits(), rb.estimate.stderr.to_bits());
    }
    println!("PASS criterion 11 (reproducibility): identical JSON summaries and bit-identical rows");
}
