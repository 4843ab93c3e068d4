//! Two independent controls limited to [0, 1], optimized with the monotonic
//! iteration from a linear ramp.
//!
//!     cargo run --release --example bounded_control -- 1.0

use qanneal::model::{build_teleportation, InputQubit};
use qanneal::propagate::TimeGrid;
use qanneal::tbqcp::{tbqcp_iterate, Scheme, TbqcpConfig};

fn main() -> qanneal::error::Result<()> {
    let t: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let spec = build_teleportation(InputQubit::default());
    let config = TbqcpConfig::with_scheme(Scheme::Limited2);
    let result = tbqcp_iterate(&spec, &config, TimeGrid::standard(t)?)?;

    for (i, f) in result.fidelity_trace.iter().enumerate().step_by(100) {
        println!("iter {i:>5}  F = {f:.6}");
    }
    println!(
        "final F = {:.6} after {} iterations (converged: {})",
        result.final_fidelity(),
        result.iterations_run,
        result.converged
    );

    let c = &result.controls;
    let at_top = |e: &[f64]| e.iter().filter(|&&x| x == 1.0).count();
    println!(
        "samples pinned at 1: eps0 {}/{n}, eps1 {}/{n}",
        at_top(&c.eps0),
        at_top(&c.eps1),
        n = c.eps0.len()
    );
    c.write_csv(std::fs::File::create("bounded_controls.csv")?)?;
    println!("controls written to bounded_controls.csv");
    Ok(())
}
