//! The optimizer is not tied to teleportation: a two-qubit swap of an
//! excitation between two couplings, built from explicit Hamiltonians.
//!
//!     cargo run --release --example custom_protocol

use qanneal::linalg::{pauli_embed, Axis, StateVector, C64};
use qanneal::model::ProtocolSpec;
use qanneal::propagate::TimeGrid;
use qanneal::tbqcp::{tbqcp_iterate, Scheme, TbqcpConfig};

fn main() -> qanneal::error::Result<()> {
    let x1 = pauli_embed(Axis::X, 1, 2)?;
    let z1 = pauli_embed(Axis::Z, 1, 2)?;
    let z2 = pauli_embed(Axis::Z, 2, 2)?;
    let zz = &z1 * &z2;
    // driving: transverse field on qubit 1; problem: Ising coupling plus bias
    let h0 = x1.scale(-1.0);
    let h1 = &zz.scale(-1.0) + &z2.scale(-0.5);

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64| C64::new(re, 0.0);
    let psi0 = StateVector::from_amplitudes(vec![c(s), c(0.0), c(s), c(0.0)]);
    let target = StateVector::basis(4, 0);
    let spec = ProtocolSpec::new(h0, h1, psi0, target)?;

    for t in [0.5, 1.0, 2.0] {
        let cfg = TbqcpConfig {
            max_iters: 500,
            ..TbqcpConfig::with_scheme(Scheme::Limited2)
        };
        let r = tbqcp_iterate(&spec, &cfg, TimeGrid::with_density(t, 400)?)?;
        println!("T = {t}: F = {:.6} after {} iterations", r.final_fidelity(), r.iterations_run);
    }
    Ok(())
}
