//! Evaluate the variational rate of explicit paths: a free path costs
//! nothing, a straight ramp against pure noise costs a^2/2, a path that the
//! noise cannot produce at all is infinitely expensive, and reconstructing
//! a controlled solve returns the control's cost.
//!
//! Run with: `cargo run --release --example rate_of_a_path`

use sdde_ldp::model::{CoeffFn, Declared};
use sdde_ldp::rate::evaluate_rate;
use sdde_ldp::skeleton::{solve_skeleton, SkeletonConfig};
use sdde_ldp::{CoefficientModel, Control, InitialSegment, Origin, TimeGrid, Trajectory};
use std::sync::Arc;

fn main() -> sdde_ldp::Result<()> {
    let grid = TimeGrid::new(1.0, 0.002, 0.5)?;
    let declared = Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 };
    let zero_drift: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let unit_noise: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(1.0));
    let no_noise: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let brownian =
        CoefficientModel::new("flat", 1, 1, 0.5, zero_drift.clone(), unit_noise, declared)?;

    // straight ramp t -> t against pure unit noise: cost 1/2
    let values: Vec<f64> = (0..grid.n_nodes())
        .map(|i| grid.node_time(i).max(0.0))
        .collect();
    let ramp = Trajectory::new(grid, 1, values, Origin::Skeleton)?;
    let cert = evaluate_rate(&brownian, &ramp, &grid)?;
    println!(
        "ramp under unit noise:      I = {:.6} (expect 0.5), feasible = {}",
        cert.value, cert.feasible
    );

    // the same ramp with the noise switched off: no control can produce it
    let deaf = CoefficientModel::new("deaf", 1, 1, 0.5, zero_drift, no_noise, declared)?;
    let cert = evaluate_rate(&deaf, &ramp, &grid)?;
    println!(
        "ramp with zero noise:       I = {} (max residual {:.3}): unreachable",
        cert.value, cert.max_residual
    );

    // round trip through the cubic model: drive with a control, recover it
    let model = CoefficientModel::cubic_const_sigma(0.5)?;
    let phi = InitialSegment::constant(&grid, &[1.0])?;
    let ctrl = Control::constant(grid, &[0.6]);
    let z = solve_skeleton(&model, &phi, &ctrl, &grid, &SkeletonConfig::default())?;
    let cert = evaluate_rate(&model, &z, &grid)?;
    println!(
        "controlled cubic solve:     I = {:.6} vs control cost {:.6}",
        cert.value,
        0.5 * ctrl.l2_norm_sq()
    );

    // free flow of the cubic model: cost vanishes with the step size
    let zero = Control::zeros(grid, 1);
    let free = solve_skeleton(&model, &phi, &zero, &grid, &SkeletonConfig::default())?;
    let cert = evaluate_rate(&model, &free, &grid)?;
    println!("uncontrolled cubic flow:    I = {:.2e} (discretization floor)", cert.value);
    Ok(())
}
