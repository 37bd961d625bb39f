//! Solve the controlled skeleton delay ODE by both routes.
//!
//! First the classic hand-checkable case (drift equal to the delayed state,
//! constant history): the solution is piecewise polynomial with z(1) = 2 and
//! z(2) = 3.5. Then a controlled cubic solve, comparing the direct
//! fourth-order pass with the truncated fixed-point construction.
//!
//! Run with: `cargo run --release --example skeleton_solve`

use sdde_ldp::model::{CoeffFn, Declared};
use sdde_ldp::skeleton::{solve_skeleton, SkeletonConfig, SkeletonMethod};
use sdde_ldp::{CoefficientModel, Control, InitialSegment, TimeGrid};
use std::sync::Arc;

fn main() -> sdde_ldp::Result<()> {
    // delayed-drift example: z' = z(t - 1), z = 1 on [-1, 0]
    let declared = Declared { q: 1.0, eta: 2.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 1.0 };
    let drift: CoeffFn = Arc::new(|_t, _x, y, out| out[0] = y[0]);
    let silent: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let model = CoefficientModel::new("delayed", 1, 1, 1.0, drift, silent, declared)?;
    let grid = TimeGrid::new(2.0, 1e-3, 1.0)?;
    let phi = InitialSegment::constant(&grid, &[1.0])?;
    let zero = Control::zeros(grid, 1);
    let z = solve_skeleton(&model, &phi, &zero, &grid, &SkeletonConfig::default())?;
    println!(
        "delayed drift: z(1) = {:.9} (expect 2), z(2) = {:.9} (expect 3.5)",
        z.eval_vec(1.0)?[0],
        z.eval_vec(2.0)?[0]
    );

    // controlled cubic model, both solution routes
    let model = CoefficientModel::cubic_const_sigma(0.5)?;
    let grid = TimeGrid::new(1.0, 0.01, 0.5)?;
    let phi = InitialSegment::constant(&grid, &[1.0])?;
    let ctrl = Control::constant(grid, &[0.8]);
    let direct = solve_skeleton(
        &model,
        &phi,
        &ctrl,
        &grid,
        &SkeletonConfig { method: SkeletonMethod::StepsRk4, ..Default::default() },
    )?;
    let fixed_point = solve_skeleton(
        &model,
        &phi,
        &ctrl,
        &grid,
        &SkeletonConfig { method: SkeletonMethod::PicardTruncated, ..Default::default() },
    )?;
    let max_diff = (0..grid.n_nodes())
        .map(|i| (direct.node(i)[0] - fixed_point.node(i)[0]).abs())
        .fold(0.0, f64::max);
    println!(
        "cubic with constant control: endpoint {:.6} (rk4) vs {:.6} (fixed point), sup diff {max_diff:.2e}",
        direct.endpoint()[0],
        fixed_point.endpoint()[0]
    );
    Ok(())
}
