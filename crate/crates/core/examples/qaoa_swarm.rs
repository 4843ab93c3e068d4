//! Particle-swarm search over alternating H1/H0 pulse durations for several
//! depths, then the winning schedule sampled onto a time grid.
//!
//!     cargo run --release --example qaoa_swarm -- 1.8

use qanneal::model::{build_teleportation, InputQubit};
use qanneal::propagate::{final_fidelity, TimeGrid};
use qanneal::qaoa::{pso_over_depths, qaoa_to_controls, PsoConfig};

fn main() -> qanneal::error::Result<()> {
    let t: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.8);
    let spec = build_teleportation(InputQubit::default());
    let cfg = PsoConfig {
        rng_seed: 2024,
        ..PsoConfig::default()
    };

    let (runs, best) = pso_over_depths(&spec, t, &[1, 2, 3, 4, 5], &cfg)?;
    for (p, r) in &runs {
        let collapsed = if r.collapsed_restarts.is_empty() { "" } else { " (some swarms collapsed)" };
        println!("p = {p}: F = {:.8}{collapsed}", r.fidelity);
    }

    let (p, winner) = &runs[best];
    println!("best depth {p}");
    for (j, (g, b)) in winner.params.gammas.iter().zip(&winner.params.betas).enumerate() {
        println!("  block {}: gamma = {g:.5}, beta = {b:.5}", j + 1);
    }

    let sampled = qaoa_to_controls(&winner.params, TimeGrid::standard(t)?)?;
    for m in &sampled.merged {
        println!("  pulse {} of length {:.2e} is shorter than a grid step, merged", m.index, m.duration);
    }
    println!("F on the time grid = {:.8}", final_fidelity(&spec, &sampled.controls, None)?);
    Ok(())
}
