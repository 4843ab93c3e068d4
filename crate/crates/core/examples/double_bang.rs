//! Both controls held at 1: the critical time and the fidelity curve against
//! `0.25 + 0.75 sin^2(pi T / 2Tc)`.
//!
//!     cargo run --release --example double_bang

use qanneal::metrics::{double_bang_curve, find_critical_time, DoubleBang};
use qanneal::model::{build_teleportation, InputQubit};

fn main() -> qanneal::error::Result<()> {
    let spec = build_teleportation(InputQubit::default());
    let tc = find_critical_time(&spec, 0.01, 10.0)?;
    println!("critical time Tc = {tc:.4} tau0");

    let db = DoubleBang::new(&spec)?;
    println!("{:>6} {:>10} {:>10}", "T", "F", "formula");
    for k in 0..=20 {
        let t = 2.0 * tc * k as f64 / 20.0;
        println!("{t:>6.3} {:>10.6} {:>10.6}", db.fidelity(t), double_bang_curve(t, tc));
    }
    Ok(())
}
