//! Optimized controls re-run with a static field `alpha * sigma` on each
//! qubit; prints the worst case over all nine single-qubit terms.
//!
//!     cargo run --release --example robustness

use qanneal::metrics::{robustness_scan, run_scheme, EvolutionScheme, SchemeSettings};
use qanneal::model::{build_teleportation, InputQubit};

fn main() -> qanneal::error::Result<()> {
    let spec = build_teleportation(InputQubit::default());
    let alphas: Vec<f64> = (0..=5).map(|k| 0.02 * k as f64).collect();
    for scheme in [EvolutionScheme::Limited2, EvolutionScheme::Lae] {
        let run = run_scheme(&spec, scheme, 1.6, &SchemeSettings::default())?;
        let report = robustness_scan(&spec, &run.controls, &alphas)?;
        println!("{scheme} at T = 1.6 (F = {:.6})", run.fidelity);
        for ((a, row), w) in report.alphas.iter().zip(&report.table).zip(&report.worst) {
            let k = row.iter().position(|f| f == w).unwrap_or(0);
            let (axis, qubit) = report.columns[k];
            println!("  alpha {a:.2}: worst F = {w:.5} (sigma_{axis} on qubit {qubit})");
        }
    }
    Ok(())
}
