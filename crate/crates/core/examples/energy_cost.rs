//! Time-averaged Hamiltonian norm of every scheme over a few final times.
//! Short iteration budgets keep the run to about a minute; fidelities are
//! therefore not fully converged.
//!
//!     cargo run --release --example energy_cost

use qanneal::metrics::{run_sweep, EvolutionScheme, SchemeSettings};
use qanneal::model::{build_teleportation, InputQubit};
use qanneal::qaoa::PsoConfig;
use qanneal::tbqcp::TbqcpConfig;

fn main() -> qanneal::error::Result<()> {
    let spec = build_teleportation(InputQubit::default());
    let settings = SchemeSettings {
        steps_per_tau: 500,
        tbqcp: TbqcpConfig {
            max_iters: 300,
            ..TbqcpConfig::default()
        },
        pso: PsoConfig {
            restarts: 2,
            ..PsoConfig::default()
        },
        qaoa_depths: vec![1, 2, 3],
    };
    let ts = [0.6, 1.0, 1.4, 1.8];
    let sweep = run_sweep(&spec, &ts, &EvolutionScheme::ALL, &settings)?;

    print!("{:>5}", "T");
    for s in EvolutionScheme::ALL {
        print!(" {:>14}", s.to_string());
    }
    println!();
    for (i, t) in ts.iter().enumerate() {
        print!("{t:>5.2}");
        for s in EvolutionScheme::ALL {
            print!(" {:>14.5}", sweep.costs(s)[i]);
        }
        println!();
    }
    sweep.write_cost_csv(std::io::stdout().lock())?;
    Ok(())
}
