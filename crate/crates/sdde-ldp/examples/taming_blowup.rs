//! Why the tamed scheme is the default: the plain explicit step explodes on
//! a super-linear drift at any fixed step size once the state is large,
//! while the tamed step contracts.
//!
//! Run with: `cargo run --release --example taming_blowup`

use sdde_ldp::model::{CoeffFn, Declared};
use sdde_ldp::sdde::{simulate, Scheme};
use sdde_ldp::{CoefficientModel, InitialSegment, RngStream, TimeGrid};
use std::sync::Arc;

fn main() -> sdde_ldp::Result<()> {
    let declared = Declared { q: 3.0, eta: 6.0, k1: 1.0, k2: 1.0, k3: 4.0, k4: 1.0, k5: 1.0, k6: 2.0 };
    let drift: CoeffFn = Arc::new(|_t, x, _y, out| out[0] = -x[0] * x[0] * x[0]);
    let silent: CoeffFn = Arc::new(|_t, _x, _y, out| out.fill(0.0));
    let model = CoefficientModel::new("cubic_decay", 1, 1, 0.5, drift, silent, declared)?;

    // two explicit steps from x0 = 3 at h = 0.5 (noise off)
    let grid = TimeGrid::new(1.0, 0.5, 0.5)?;
    let phi = InitialSegment::constant(&grid, &[3.0])?;
    let mut rng = RngStream::new(0, 0);
    let x = simulate(&model, &phi, 0.0, &grid, Scheme::Euler, &mut rng)?;
    let o = grid.origin_index();
    println!(
        "explicit euler, h = 0.5, x0 = 3:  x1 = {}, x2 = {}  (overshoot squares each step)",
        x.node(o + 1)[0],
        x.node(o + 2)[0]
    );

    // a few more explicit steps end in a detected blow-up
    let longer = TimeGrid::new(3.0, 0.5, 0.5)?;
    let phi6 = InitialSegment::constant(&longer, &[3.0])?;
    let mut rng = RngStream::new(0, 0);
    match simulate(&model, &phi6, 0.0, &longer, Scheme::Euler, &mut rng) {
        Err(e) => println!("explicit euler, 6 steps:          {e}"),
        Ok(_) => println!("explicit euler, 6 steps:          unexpectedly survived"),
    }

    // the tamed step from the same state contracts and stays bounded forever
    let long = TimeGrid::new(5_000.0, 0.5, 0.5)?;
    let phi = InitialSegment::constant(&long, &[3.0])?;
    let mut rng = RngStream::new(0, 0);
    let x = simulate(&model, &phi, 0.0, &long, Scheme::TamedEuler, &mut rng)?;
    let max_abs = x.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!(
        "tamed euler, 10^4 steps:          x1 = {:.6}, max |x| = {max_abs:.6}, final {:.2e}",
        x.node(long.origin_index() + 1)[0],
        x.endpoint()[0]
    );
    Ok(())
}
