//! One control with eps1 = 1 - eps0, compared with the best alternating-pulse
//! schedule of the same duration.
//!
//!     cargo run --release --example single_control -- 0.6

use qanneal::model::{build_teleportation, InputQubit};
use qanneal::propagate::TimeGrid;
use qanneal::qaoa::{pso_optimize, PsoConfig};
use qanneal::tbqcp::{tbqcp_iterate, Scheme, TbqcpConfig};

fn main() -> qanneal::error::Result<()> {
    let t: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let spec = build_teleportation(InputQubit::default());

    let single = tbqcp_iterate(&spec, &TbqcpConfig::with_scheme(Scheme::LimitedSingle), TimeGrid::standard(t)?)?;
    println!("single control: F = {:.6} ({} iterations)", single.final_fidelity(), single.iterations_run);

    // where the optimized control switches between the bounds
    let eps0 = &single.controls.eps0;
    let grid = single.controls.grid();
    let mut last = eps0[0];
    println!("  eps0 starts at {last:.3}");
    for (i, &e) in eps0.iter().enumerate().skip(1) {
        if (e - last).abs() > 0.5 {
            println!("  jump {last:.3} -> {e:.3} at t = {:.4}", grid.midpoint(i));
        }
        last = e;
    }

    let pulses = pso_optimize(&spec, t, 1, &PsoConfig::default())?;
    println!(
        "one H1 pulse + one H0 pulse: F = {:.6} (gamma = {:.4}, beta = {:.4})",
        pulses.fidelity, pulses.params.gammas[0], pulses.params.betas[0]
    );
    Ok(())
}
