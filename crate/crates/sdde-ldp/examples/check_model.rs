//! Sample-check the structural conditions of the builtin models.
//!
//! The constant-noise cubic model passes everything and the theorem gate
//! (largest feasible eta above 2q - 1) is open; the quadratic-noise variant
//! fails monotonicity at its declared eta = 6, and the report says so
//! instead of trusting the declaration.
//!
//! Run with: `cargo run --release --example check_model`

use sdde_ldp::check::{check_assumptions, SamplerConfig};
use sdde_ldp::CoefficientModel;

fn main() -> sdde_ldp::Result<()> {
    let cfg = SamplerConfig { n_points: 100_000, radius: 5.0, t_max: 1.0, seed: 1 };
    for id in ["cubic_const_sigma", "cubic_quadratic_sigma", "linear_ou"] {
        let model = CoefficientModel::builtin(id, 0.5)?;
        let report = check_assumptions(&model, &cfg)?;
        println!("model {id} (q = {}, declared eta = {}):", report.q, report.eta_declared);
        for c in &report.conditions {
            println!(
                "  {:<18} worst ratio {:>10.4}  declared {:>6.2}  {}",
                format!("{:?}", c.condition),
                c.worst_ratio,
                c.declared,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        println!(
            "  largest feasible eta {:.4}, gate eta > {}: {}\n",
            report.largest_feasible_eta,
            2.0 * report.q - 1.0,
            if report.theorem_gate_pass { "open" } else { "CLOSED" }
        );
    }
    Ok(())
}
