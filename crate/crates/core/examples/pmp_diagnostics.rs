//! Switching functions, control Hamiltonian and commutator term along an
//! optimized schedule, plus the optimality residuals.
//!
//!     cargo run --release --example pmp_diagnostics -- 1.2

use qanneal::model::{build_teleportation, InputQubit};
use qanneal::pmp::{diagnose, pmp_residuals, RESIDUAL_TOL};
use qanneal::propagate::TimeGrid;
use qanneal::tbqcp::{tbqcp_iterate, Scheme, TbqcpConfig};

fn main() -> qanneal::error::Result<()> {
    let t: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.2);
    let spec = build_teleportation(InputQubit::default());
    let opt = tbqcp_iterate(&spec, &TbqcpConfig::with_scheme(Scheme::Limited2), TimeGrid::standard(t)?)?;
    let d = diagnose(&spec, &opt.controls)?;

    println!("{:>7} {:>7} {:>7} {:>11} {:>11} {:>11}", "t", "eps0", "eps1", "phi0", "phi1", "xi");
    for i in (0..d.times.len()).step_by(d.times.len() / 12) {
        println!(
            "{:>7.4} {:>7.4} {:>7.4} {:>11.3e} {:>11.3e} {:>11.3e}",
            d.times[i], opt.controls.eps0[i], opt.controls.eps1[i], d.phi0[i], d.phi1[i], d.xi[i]
        );
    }

    let r = pmp_residuals(&d, &opt.controls, RESIDUAL_TOL);
    println!("F = {:.9}", opt.final_fidelity());
    println!("Phi0(0) = {:.2e}, Phi1(T) = {:.2e}", r.phi0_initial, r.phi1_final);
    println!("control Hamiltonian {:.3e} +/- {:.1e}", r.cham_mean, r.cham_std);
    println!("pairing drift {:.1e}", r.max_pairing_drift);
    Ok(())
}
