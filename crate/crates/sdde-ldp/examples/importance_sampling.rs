//! Girsanov importance sampling for rare events: tilt the dynamics by the
//! minimizing control, reweight by the exact discrete likelihood ratio, and
//! compare with plain counting where counting still works.
//!
//! Run with: `cargo run --release --example importance_sampling`

use sdde_ldp::event::{EventSpec, HalfspaceSide};
use sdde_ldp::mc::estimate_prob;
use sdde_ldp::rate::{minimize_rate, MinimizeConfig};
use sdde_ldp::sdde::Scheme;
use sdde_ldp::{CoefficientModel, InitialSegment, TimeGrid};

fn main() -> sdde_ldp::Result<()> {
    let grid = TimeGrid::new(1.0, 0.01, 0.5)?;
    let model = CoefficientModel::linear_ou(0.5)?;
    let phi = InitialSegment::constant(&grid, &[0.0])?;
    let event =
        EventSpec::EndpointHalfspace { coord: 0, threshold: 0.5, side: HalfspaceSide::Above };

    let tilt = minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default())?.control;
    println!("tilting control cost: {:.4}\n", 0.5 * tilt.l2_norm_sq());

    println!(
        "{:>8} {:>13} {:>13} {:>10} {:>12}",
        "eps", "plain p", "importance p", "ESS", "plain hits"
    );
    let n = 50_000;
    for &eps in &[0.5, 0.2, 0.1, 0.05, 0.02] {
        let plain =
            estimate_prob(&model, &phi, eps, &event, n, &grid, Scheme::TamedEuler, 11, None)?;
        let tilted = estimate_prob(
            &model,
            &phi,
            eps,
            &event,
            n,
            &grid,
            Scheme::TamedEuler,
            12,
            Some(&tilt),
        )?;
        println!(
            "{eps:>8} {:>13.6e} {:>13.6e} {:>10.0} {:>12.0}",
            plain.p_hat,
            tilted.p_hat,
            tilted.ess.unwrap(),
            plain.p_hat * n as f64
        );
    }
    println!(
        "\nplain counting dies with the event; the tilted estimator keeps a \
         healthy effective sample size at every noise level"
    );
    Ok(())
}
