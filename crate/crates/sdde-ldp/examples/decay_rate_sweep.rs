//! The full loop: estimate a rare-event probability across shrinking noise
//! levels, extrapolate the exponential decay rate, and compare with the
//! variational value computed by trajectory optimization.
//!
//! For the mean-reverting model and the event X(1) >= 1 the Gaussian closed
//! form gives rate 1/(1 - e^{-2}) ~ 1.1565, so both numbers can be judged
//! against truth.
//!
//! Run with: `cargo run --release --example decay_rate_sweep`

use sdde_ldp::event::{EventSpec, HalfspaceSide};
use sdde_ldp::mc::{epsilon_sweep, SweepConfig};
use sdde_ldp::sdde::Scheme;
use sdde_ldp::{CoefficientModel, InitialSegment, TimeGrid};

fn main() -> sdde_ldp::Result<()> {
    let grid = TimeGrid::new(1.0, 0.01, 0.5)?;
    let model = CoefficientModel::linear_ou(0.5)?;
    let phi = InitialSegment::constant(&grid, &[0.0])?;
    let event =
        EventSpec::EndpointHalfspace { coord: 0, threshold: 1.0, side: HalfspaceSide::Above };
    let cfg = SweepConfig {
        n_per_eps: 100_000,
        scheme: Scheme::TamedEuler,
        seed: 101,
        use_importance: true,
        ..Default::default()
    };

    let sweep = epsilon_sweep(&model, &phi, &[0.2, 0.1, 0.05, 0.02], &event, &grid, &cfg)?;
    println!("{:>8} {:>13} {:>11} {:>12} {:>10}", "eps", "p_hat", "stderr", "eps ln p", "ESS");
    for row in &sweep.rows {
        println!(
            "{:>8} {:>13.6e} {:>11.2e} {:>12.5} {:>10.0}",
            row.eps,
            row.estimate.p_hat,
            row.estimate.stderr,
            row.eps_log_p.unwrap(),
            row.estimate.ess.unwrap()
        );
    }
    let oracle = 1.0 / (1.0 - (-2.0f64).exp());
    println!(
        "\nextrapolated rate:  {:.4} +- {:.4}",
        sweep.extrapolated_rate, sweep.rate_stderr
    );
    println!("variational value:  {:.4}", sweep.variational_value.unwrap());
    println!("gap:                {:+.4}", sweep.gap.unwrap());
    println!("Gaussian oracle:    {oracle:.4}");
    println!(
        "\nevery row sits below -inf I + o(1), and the extrapolation closes \
         the gap up to the sub-exponential prefactor the linear fit absorbs"
    );
    Ok(())
}
