//! End-to-end acceptance checks on the teleportation benchmark.
//!
//! Runs without the libtest harness so that the one-line verdict for each
//! criterion is always printed. Expensive optimizations are memoized and
//! shared between criteria.

use std::collections::BTreeMap;
use std::time::Instant;

use qanneal::cli::{run_with_workers, Command, ExperimentConfig, SweepConfig};
use qanneal::metrics::{
    double_bang_curve, find_critical_time, robustness_scan, run_scheme, DoubleBang, EvolutionScheme, RunDetail,
    SchemeRun, SchemeSettings,
};
use qanneal::model::{build_teleportation, InputQubit, ProtocolSpec};
use qanneal::pmp::diagnose;
use qanneal::propagate::{final_fidelity, ControlField, TimeGrid};
use qanneal::qaoa::PsoConfig;
use qanneal::tbqcp::{TbqcpConfig, MONOTONIC_SLACK};

use EvolutionScheme::{Limited2, LimitedSingle, Qaoa, Unlimited2};

struct Runs {
    spec: ProtocolSpec,
    settings: SchemeSettings,
    cache: BTreeMap<(usize, u64), SchemeRun>,
}

impl Runs {
    fn get(&mut self, scheme: EvolutionScheme, t: f64) -> &SchemeRun {
        let key = (scheme.number(), t.to_bits());
        if !self.cache.contains_key(&key) {
            let start = Instant::now();
            let run = run_scheme(&self.spec, scheme, t, &self.settings).expect("scheme run");
            eprintln!("  ran {scheme} at T={t} in {:.1?}", start.elapsed());
            self.cache.insert(key, run);
        }
        &self.cache[&key]
    }

    fn fidelity(&mut self, scheme: EvolutionScheme, t: f64) -> f64 {
        self.get(scheme, t).fidelity
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1_critical_time(spec: &ProtocolSpec) -> Verdict {
    let tc = find_critical_time(spec, 0.01, 10.0).unwrap();
    verdict((tc - 1.11).abs() <= 0.02, format!("Tc = {tc:.4}, expected 1.11 +/- 0.02"))
}

fn c2_double_bang(spec: &ProtocolSpec) -> Verdict {
    let tc = find_critical_time(spec, 0.01, 10.0).unwrap();
    let db = DoubleBang::new(spec).unwrap();
    // time-stepped simulation on the standard grid
    let sim = |t: f64| {
        let grid = TimeGrid::standard(t).unwrap();
        final_fidelity(spec, &ControlField::constant(grid, 1.0, 1.0), None).unwrap()
    };
    let ts: Vec<f64> = (1..=20).map(|k| 2.0 * tc * k as f64 / 20.0).collect();
    let sq: f64 = ts.iter().map(|&t| (sim(t) - double_bang_curve(t, tc)).powi(2)).sum();
    let rms = (sq / ts.len() as f64).sqrt();
    let at_2tc = sim(2.0 * tc);
    let exact_gap = ts.iter().map(|&t| (sim(t) - db.fidelity(t)).abs()).fold(0.0, f64::max);
    verdict(
        rms <= 0.02 && (at_2tc - 0.25).abs() <= 0.01,
        format!("RMS = {rms:.2e} (limit 0.02), F(2Tc) = {at_2tc:.5}; stepped vs exact max gap {exact_gap:.1e}"),
    )
}

fn c3_endpoints(runs: &mut Runs) -> Verdict {
    let l2 = runs.get(Limited2, 1.0);
    let (f2, it2, c2) = (l2.fidelity, iterations(l2), l2.converged());
    let ls = runs.get(LimitedSingle, 1.0);
    let (fs, its, cs) = (ls.fidelity, iterations(ls), ls.converged());
    verdict(
        (f2 - 0.9763).abs() <= 0.005 && (fs - 0.729).abs() <= 0.01,
        format!(
            "Limited2 F = {f2:.6} ({it2} iters, converged {c2}); LimitedSingle F = {fs:.6} ({its} iters, converged {cs})"
        ),
    )
}

fn c4_thresholds(runs: &mut Runs) -> Verdict {
    let limited: Vec<(f64, f64)> = [1.15, 1.3, 1.5, 1.6].iter().map(|&t| (t, runs.fidelity(Limited2, t))).collect();
    let s13 = runs.fidelity(LimitedSingle, 1.3);
    let s15 = runs.fidelity(LimitedSingle, 1.5);
    let q13 = runs.fidelity(Qaoa, 1.3);
    let q15 = runs.fidelity(Qaoa, 1.5);
    let pass = limited.iter().all(|&(_, f)| f >= 0.999) && s15 >= 0.99 && s13 < 0.99 && q15 >= 0.99 && q13 < 0.99;
    let lim: Vec<String> = limited.iter().map(|(t, f)| format!("{t}:{f:.7}")).collect();
    verdict(
        pass,
        format!(
            "Limited2 [{}]; LimitedSingle 1.3:{s13:.4} 1.5:{s15:.4}; QAOA 1.3:{q13:.4} 1.5:{q15:.4}",
            lim.join(" ")
        ),
    )
}

fn c5_energy_cost(runs: &mut Runs) -> Verdict {
    let sqrt32 = 32f64.sqrt();
    let mut pass = true;
    let mut notes = Vec::new();
    // Samples next to t = 0 (eps0) and t = T (eps1) see a vanishing gradient
    // and creep to the bound long after |dF| drops below the stopping
    // tolerance, so the saturated optimum is checked over the full budget.
    let full_budget = SchemeSettings {
        tbqcp: TbqcpConfig {
            convergence_tol: 0.0,
            ..runs.settings.tbqcp.clone()
        },
        ..runs.settings.clone()
    };
    for t in [0.6, 1.0] {
        let early = runs.get(Limited2, t).energy_cost;
        let c2 = run_scheme(&runs.spec, Limited2, t, &full_budget).unwrap().energy_cost;
        let c1 = runs.get(Unlimited2, t).energy_cost;
        pass &= (c2 - sqrt32).abs() <= 1e-6 && c1 >= c2;
        notes.push(format!(
            "T={t}: S1 {c1:.6} S2 {c2:.9} (early stop {early:.9}, sqrt32 {sqrt32:.9})"
        ));
    }
    for t in [1.3, 1.6] {
        let c2 = runs.get(Limited2, t).energy_cost;
        let c1 = runs.get(Unlimited2, t).energy_cost;
        pass &= (c1 - c2).abs() <= 1e-3;
        notes.push(format!("T={t}: |S1-S2| {:.1e}", (c1 - c2).abs()));
    }
    verdict(pass, notes.join("; "))
}

fn c6_robustness(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for scheme in [Unlimited2, Limited2] {
        let spec = runs.spec.clone();
        let run = runs.get(scheme, 1.6);
        let report = robustness_scan(&spec, &run.controls, &[0.0, 0.1]).unwrap();
        let drop = 100.0 * report.relative_drop(report.worst[0])[1];
        pass &= (drop - 1.7).abs() <= 0.5;
        notes.push(format!("scheme {} drop {drop:.3}%", scheme.number()));
    }
    verdict(pass, notes.join("; "))
}

fn c7_monotonicity(runs: &mut Runs) -> Verdict {
    let combos = [
        (Unlimited2, 0.6),
        (Unlimited2, 1.0),
        (Unlimited2, 1.3),
        (Unlimited2, 1.6),
        (Limited2, 0.6),
        (Limited2, 1.0),
        (Limited2, 1.15),
        (Limited2, 1.5),
        (LimitedSingle, 0.6),
        (LimitedSingle, 1.0),
        (LimitedSingle, 1.3),
        (LimitedSingle, 1.5),
    ];
    let mut failures = Vec::new();
    for (scheme, t) in combos {
        let run = runs.get(scheme, t);
        let RunDetail::Tbqcp(r) = &run.detail else { unreachable!() };
        let monotone = r.fidelity_trace.windows(2).all(|w| w[1] >= w[0] - MONOTONIC_SLACK);
        let c = &r.controls;
        let feasible = scheme == Unlimited2 || c.eps0.iter().chain(&c.eps1).all(|e| (0.0..=1.0).contains(e));
        let sum_ok = scheme != LimitedSingle || c.eps0.iter().zip(&c.eps1).all(|(a, b)| a + b == 1.0);
        if !(monotone && feasible && sum_ok) {
            failures.push(format!("{scheme}@{t} (monotone {monotone}, bounds {feasible}, sum {sum_ok})"));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} runs monotone within {MONOTONIC_SLACK:e}, bounds and sum constraint exact", combos.len())
        } else {
            failures.join(", ")
        },
    )
}

fn c8_pmp(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut drift: f64 = 0.0;
    let mut boundary: f64 = 0.0;
    for (scheme, t) in [(Limited2, 1.0), (Limited2, 1.6), (Unlimited2, 0.6), (LimitedSingle, 1.0)] {
        let run = runs.get(scheme, t);
        let RunDetail::Tbqcp(r) = &run.detail else { unreachable!() };
        let d = &r.diagnostics;
        drift = drift.max(d.pairing_drift());
        boundary = boundary.max(d.phi1_final.abs()).max(d.phi0_initial.abs());
    }
    pass &= drift <= 1e-8 && boundary <= 1e-6;

    let spec = runs.spec.clone();
    let mut cham_std: f64 = 0.0;
    for t in [0.4, 0.8, 1.05] {
        let d = diagnose(&spec, &ControlField::constant(TimeGrid::standard(t).unwrap(), 1.0, 1.0)).unwrap();
        let n = d.cham.len() as f64;
        let mean = d.cham.iter().sum::<f64>() / n;
        cham_std = cham_std.max((d.cham.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt());
    }
    pass &= cham_std <= 1e-4;

    let controls = ControlField::linear_ramp(TimeGrid::standard(1.0).unwrap());
    let d = diagnose(&spec, &controls).unwrap();
    let base = final_fidelity(&spec, &controls, None).unwrap();
    let dt = controls.grid().dt();
    let delta = 1e-4;
    let mut worst_rel: f64 = 0.0;
    for i in [150, 700, 1300, 1850] {
        for k in 0..2 {
            let mut bumped = controls.clone();
            let phi = if k == 0 {
                bumped.eps0[i] += delta;
                d.phi0[i]
            } else {
                bumped.eps1[i] += delta;
                d.phi1[i]
            };
            let fd = (final_fidelity(&spec, &bumped, None).unwrap() - base) / (delta * dt);
            worst_rel = worst_rel.max((fd - phi).abs() / phi.abs());
        }
    }
    pass &= worst_rel < 1e-3;
    verdict(
        pass,
        format!(
            "pairing drift {drift:.1e}; max |Phi1(T)|,|Phi0(0)| {boundary:.1e}; double-bang H std {cham_std:.1e}; FD gradient rel err {worst_rel:.1e}"
        ),
    )
}

fn c9_dominance(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for t in [0.6, 1.0, 1.3, 1.5] {
        let f2 = runs.fidelity(Limited2, t);
        let f3 = runs.fidelity(LimitedSingle, t);
        let f4 = runs.fidelity(Qaoa, t);
        pass &= f3 <= f2 + 1e-6 && f4 <= f2 + 1e-6;
        notes.push(format!("T={t}: {f2:.4}/{f3:.4}/{f4:.4}"));
    }
    verdict(pass, format!("F Limited2/LimitedSingle/QAOA {}", notes.join(", ")))
}

fn c10_determinism() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let base = ExperimentConfig {
        steps_per_tau: 200,
        tbqcp: TbqcpConfig {
            max_iters: 40,
            ..TbqcpConfig::default()
        },
        pso: PsoConfig {
            swarm_size: 16,
            iterations: 60,
            restarts: 2,
            rng_seed: 11,
            ..PsoConfig::default()
        },
        qaoa_depths: vec![1, 2, 3],
        sweep: SweepConfig {
            t_values: vec![0.5, 1.2],
            schemes: EvolutionScheme::ALL.to_vec(),
        },
        ..ExperimentConfig::default()
    };
    for (dir, workers) in dirs.iter().zip([1, 2]) {
        let cfg = ExperimentConfig {
            output_dir: dir.path().to_path_buf(),
            ..base.clone()
        };
        run_with_workers(Command::Sweep, &cfg, Some(workers)).unwrap();
    }
    let mut mismatched = Vec::new();
    for name in ["sweep.csv", "cost.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        if a != b || a.is_empty() {
            mismatched.push(name);
        }
    }
    verdict(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "sweep.csv and cost.csv byte-identical across two runs (1 and 2 workers)".into()
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    )
}

fn iterations(run: &SchemeRun) -> usize {
    match &run.detail {
        RunDetail::Tbqcp(r) => r.iterations_run,
        _ => 0,
    }
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture; `--list` must not run anything
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let spec = build_teleportation(InputQubit::default());
    let mut runs = Runs {
        spec: spec.clone(),
        settings: SchemeSettings::default(),
        cache: BTreeMap::new(),
    };
    let results: Vec<(usize, &str, Verdict)> = vec![
        (1, "critical time", c1_critical_time(&spec)),
        (2, "double-bang curve", c2_double_bang(&spec)),
        (3, "TBQCP endpoint values", c3_endpoints(&mut runs)),
        (4, "threshold times", c4_thresholds(&mut runs)),
        (5, "energy cost", c5_energy_cost(&mut runs)),
        (6, "robustness", c6_robustness(&mut runs)),
        (7, "monotonicity", c7_monotonicity(&mut runs)),
        (8, "PMP properties", c8_pmp(&mut runs)),
        (9, "scheme dominance", c9_dominance(&mut runs)),
        (10, "determinism", c10_determinism()),
    ];

    println!();
    for (n, name, v) in &results {
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = results.iter().filter(|(_, _, v)| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed in {:.0?}", results.len() - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
