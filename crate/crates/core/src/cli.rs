//! Config-driven experiment runner behind the `qanneal` binary.
//!
//! Every command writes plot-ready CSV files and a `manifest.json` holding
//! the resolved configuration and its SHA-256 hash into the output directory.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::metrics::{
    cubic_fit_report, robustness_scan, run_scheme, run_sweep, EvolutionScheme, RunDetail, SchemeRun,
    SchemeSettings,
};
use crate::model::{build_teleportation, InputQubit, ProtocolSpec};
use crate::output::{config_hash, create_file, write_json};
use crate::pmp::{diagnose, pmp_residuals, RESIDUAL_TOL};
use crate::propagate::{ControlField, STEPS_PER_TAU};
use crate::qaoa::{PsoConfig, MAX_DEPTH};
use crate::tbqcp::TbqcpConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub t_values: Vec<f64>,
    pub schemes: Vec<EvolutionScheme>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        // 0.1..=2.0 plus a finer mesh around the two transitions
        let mut t: Vec<f64> = (1..=20).map(|k| k as f64 / 10.0).collect();
        t.extend((108..=114).chain(146..=154).map(|k| k as f64 / 100.0));
        t.sort_by(f64::total_cmp);
        t.dedup();
        Self {
            t_values: t,
            schemes: EvolutionScheme::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub t_final: f64,
    pub alphas: Vec<f64>,
    pub schemes: Vec<EvolutionScheme>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            t_final: 1.6,
            alphas: (0..=5).map(|k| k as f64 * 0.02).collect(),
            schemes: EvolutionScheme::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputQubit,
    /// Scheme for `optimize` and `diagnose`.
    pub scheme: EvolutionScheme,
    /// Final time for `optimize`, `qaoa` and `diagnose`.
    pub t_final: f64,
    pub steps_per_tau: usize,
    pub qaoa_depths: Vec<usize>,
    pub tbqcp: TbqcpConfig,
    pub pso: PsoConfig,
    pub sweep: SweepConfig,
    pub robustness: RobustnessConfig,
    /// Controls CSV to analyse instead of optimizing (`diagnose`, `robustness`).
    pub controls: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: InputQubit::default(),
            scheme: EvolutionScheme::Limited2,
            t_final: 1.0,
            steps_per_tau: STEPS_PER_TAU,
            qaoa_depths: (1..=MAX_DEPTH).collect(),
            tbqcp: TbqcpConfig::default(),
            pso: PsoConfig::default(),
            sweep: SweepConfig::default(),
            robustness: RobustnessConfig::default(),
            controls: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, t: f64| {
            if t.is_finite() && t > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a positive time, got {t}")))
            }
        };
        positive("t_final", self.t_final)?;
        positive("robustness.t_final", self.robustness.t_final)?;
        if self.sweep.t_values.is_empty() || self.sweep.schemes.is_empty() {
            return Err(Error::Config("sweep needs at least one T value and one scheme".into()));
        }
        for &t in &self.sweep.t_values {
            positive("sweep.t_values entry", t)?;
        }
        if self.robustness.alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("robustness.alphas must be finite".into()));
        }
        if self.qaoa_depths.iter().any(|&p| p > MAX_DEPTH) {
            return Err(Error::Config(format!("qaoa_depths entries must not exceed {MAX_DEPTH}")));
        }
        self.settings().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn settings(&self) -> SchemeSettings {
        SchemeSettings {
            steps_per_tau: self.steps_per_tau,
            tbqcp: self.tbqcp.clone(),
            pso: self.pso.clone(),
            qaoa_depths: self.qaoa_depths.clone(),
        }
    }

    pub fn spec(&self) -> ProtocolSpec {
        build_teleportation(self.input)
    }
}

#[derive(Debug, Parser)]
#[command(name = "qanneal", version, about = "Two-control quantum annealing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Swarm RNG seed (overrides `pso.rng_seed`).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run one scheme at one final time.
    Optimize,
    /// Fidelity and energy cost of all schemes over a range of final times.
    Sweep,
    /// Worst-case fidelity under static single-qubit fields.
    Robustness,
    /// Particle-swarm search over alternating-pulse schedules.
    Qaoa,
    /// Pontryagin diagnostics of a control schedule.
    Diagnose,
}

/// Whether every iterative run finished inside its budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Completion {
    Converged,
    BudgetExhausted,
}

impl Completion {
    fn of(runs: &[&SchemeRun]) -> Self {
        if runs.iter().all(|r| r.converged()) {
            Completion::Converged
        } else {
            Completion::BudgetExhausted
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Completion::Converged => EXIT_OK,
            Completion::BudgetExhausted => EXIT_BUDGET,
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let config = match resolve_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match run_with_workers(cli.command, &config, cli.common.workers) {
        Ok(done) => done.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output_dir.clone_from(out);
    }
    if let Some(seed) = args.seed {
        cfg.pso.rng_seed = seed;
    }
    Ok(cfg)
}

pub fn run_with_workers(command: Command, config: &ExperimentConfig, workers: Option<usize>) -> Result<Completion> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(command, config))
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<Completion> {
    config.validate()?;
    match command {
        Command::Optimize => cmd_optimize(config),
        Command::Sweep => cmd_sweep(config),
        Command::Robustness => cmd_robustness(config),
        Command::Qaoa => cmd_qaoa(config),
        Command::Diagnose => cmd_diagnose(config),
    }
}

fn manifest(command: &str, config: &ExperimentConfig, results: serde_json::Value) -> Result<serde_json::Value> {
    Ok(json!({
        "command": command,
        "config_hash": config_hash(config)?,
        "config": config,
        "results": results,
    }))
}

fn run_summary(run: &SchemeRun) -> serde_json::Value {
    let mut v = json!({
        "scheme": run.scheme,
        "T": run.t_final,
        "fidelity": run.fidelity,
        "energy_cost": run.energy_cost,
        "converged": run.converged(),
    });
    match &run.detail {
        RunDetail::Tbqcp(r) => {
            v["iterations_run"] = json!(r.iterations_run);
        }
        RunDetail::Qaoa {
            per_depth,
            best_depth,
            best,
            merged,
        } => {
            v["qaoa"] = json!({
                "p": best_depth,
                "gammas": best.params.gammas,
                "betas": best.params.betas,
                "seed": best.seed,
                "per_depth": per_depth.iter().map(|(p, f)| json!({"p": p, "fidelity": f})).collect::<Vec<_>>(),
                "collapsed_restarts": best.collapsed_restarts,
                "merged_blocks": merged,
            });
        }
        RunDetail::Lae => {}
    }
    v
}

fn write_controls(path: &Path, controls: &ControlField) -> Result<()> {
    controls.write_csv(create_file(path)?)
}

pub fn cmd_optimize(config: &ExperimentConfig) -> Result<Completion> {
    let spec = config.spec();
    let out = &config.output_dir;
    let run = run_scheme(&spec, config.scheme, config.t_final, &config.settings())?;
    write_controls(&out.join("controls.csv"), &run.controls)?;
    let diagnostics = match &run.detail {
        RunDetail::Tbqcp(r) => {
            r.write_trace_csv(create_file(&out.join("trace.csv"))?)?;
            for (iter, snap) in &r.snapshots {
                write_controls(&out.join("snapshots").join(format!("controls_{iter:05}.csv")), snap)?;
            }
            r.diagnostics.clone()
        }
        _ => diagnose(&spec, &run.controls)?,
    };
    diagnostics.write_csv(create_file(&out.join("diagnostics.csv"))?)?;
    let results = json!({
        "run": run_summary(&run),
        "pmp": pmp_residuals(&diagnostics, &run.controls, RESIDUAL_TOL),
        "cubic_fit": cubic_fit_report(&run.controls),
    });
    write_json(&out.join("manifest.json"), &manifest("optimize", config, results)?)?;
    Ok(Completion::of(&[&run]))
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Completion> {
    let spec = config.spec();
    let out = &config.output_dir;
    let sweep = run_sweep(&spec, &config.sweep.t_values, &config.sweep.schemes, &config.settings())?;
    sweep.write_fidelity_csv(create_file(&out.join("sweep.csv"))?)?;
    sweep.write_cost_csv(create_file(&out.join("cost.csv"))?)?;
    let all: Vec<&SchemeRun> = sweep.runs.iter().flatten().collect();
    let results = json!({
        "critical_time": sweep.critical_time,
        "runs": all.iter().map(|r| run_summary(r)).collect::<Vec<_>>(),
    });
    write_json(&out.join("manifest.json"), &manifest("sweep", config, results)?)?;
    Ok(Completion::of(&all))
}

/// Controls from `config.controls` when given, otherwise a fresh run.
fn controls_for(
    spec: &ProtocolSpec,
    config: &ExperimentConfig,
    scheme: EvolutionScheme,
    t_final: f64,
) -> Result<(ControlField, Option<SchemeRun>)> {
    match &config.controls {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot open controls {}: {e}", path.display())))?;
            Ok((ControlField::read_csv(file)?, None))
        }
        None => {
            let run = run_scheme(spec, scheme, t_final, &config.settings())?;
            Ok((run.controls.clone(), Some(run)))
        }
    }
}

fn read_cached_controls(path: &Path) -> Result<ControlField> {
    let c: ControlField = serde_json::from_reader(BufReader::new(fs::File::open(path)?))?;
    ControlField::new(*c.grid(), c.eps0, c.eps1, c.bounded)
}

pub fn cmd_robustness(config: &ExperimentConfig) -> Result<Completion> {
    let spec = config.spec();
    let out = &config.output_dir;
    let rc = &config.robustness;
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    for &scheme in &rc.schemes {
        // full-precision cache so a rerun reproduces the table bit for bit
        let cached = out.join(format!("controls_scheme{}.json", scheme.number()));
        let (controls, run) = if config.controls.is_none() && cached.exists() {
            (read_cached_controls(&cached)?, None)
        } else {
            controls_for(&spec, config, scheme, rc.t_final)?
        };
        if run.is_some() {
            write_json(&cached, &controls)?;
            write_controls(&out.join(format!("controls_scheme{}.csv", scheme.number())), &controls)?;
        }
        let report = robustness_scan(&spec, &controls, &rc.alphas)?;
        report.write_csv(create_file(&out.join(format!("robustness_scheme{}.csv", scheme.number())))?)?;
        entries.push(json!({
            "scheme": scheme,
            "T": report.t_final,
            "alphas": report.alphas,
            "worst": report.worst,
            "run": run.as_ref().map(run_summary),
        }));
        runs.extend(run);
        if config.controls.is_some() {
            break;
        }
    }
    write_json(&out.join("manifest.json"), &manifest("robustness", config, json!(entries))?)?;
    Ok(Completion::of(&runs.iter().collect::<Vec<_>>()))
}

pub fn cmd_qaoa(config: &ExperimentConfig) -> Result<Completion> {
    let spec = config.spec();
    let out = &config.output_dir;
    let run = run_scheme(&spec, EvolutionScheme::Qaoa, config.t_final, &config.settings())?;
    write_controls(&out.join("controls.csv"), &run.controls)?;
    if let RunDetail::Qaoa { best, best_depth, .. } = &run.detail {
        write_json(
            &out.join("qaoa_params.json"),
            &json!({
                "p": best_depth,
                "gammas": best.params.gammas,
                "betas": best.params.betas,
                "F": best.fidelity,
                "seed": best.seed,
            }),
        )?;
    }
    write_json(&out.join("manifest.json"), &manifest("qaoa", config, run_summary(&run))?)?;
    Ok(Completion::Converged)
}

pub fn cmd_diagnose(config: &ExperimentConfig) -> Result<Completion> {
    let spec = config.spec();
    let out = &config.output_dir;
    let (controls, run) = controls_for(&spec, config, config.scheme, config.t_final)?;
    let diagnostics = diagnose(&spec, &controls)?;
    diagnostics.write_csv(create_file(&out.join("diagnostics.csv"))?)?;
    let results = json!({
        "pmp": pmp_residuals(&diagnostics, &controls, RESIDUAL_TOL),
        "run": run.as_ref().map(run_summary),
    });
    write_json(&out.join("manifest.json"), &manifest("diagnose", config, results)?)?;
    Ok(run.as_ref().map_or(Completion::Converged, |r| Completion::of(&[r])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "scheme = \"LimitedSingle\"\nt_final = 1.3\n[tbqcp]\neta = 0.01\n[input]\na = [0.6, 0.0]\nb = [0.0, 0.8]\n",
        )
        .unwrap();
        assert_eq!(cfg.scheme, EvolutionScheme::LimitedSingle);
        assert_eq!(cfg.tbqcp.eta, 0.01);
        assert_eq!(cfg.tbqcp.max_iters, 2000);
        assert_eq!(cfg.steps_per_tau, STEPS_PER_TAU);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::from_toml("t_final = 1.0\n[tbqcp]\netta = 0.01\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("etta"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "t_final = -1.0",
            "[tbqcp]\neta = 0.0",
            "[pso]\nswarm_size = 1",
            "qaoa_depths = [7]",
            "[sweep]\nt_values = []",
            "[input]\na = [1.0, 0.0]\nb = [1.0, 0.0]",
            "scheme = \"Limited3\"",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn default_sweep_grid_is_sorted_and_refined() {
        let t = SweepConfig::default().t_values;
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.contains(&1.11) && t.contains(&1.5) && t.contains(&2.0));
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["qanneal", "qaoa", "--out", "/tmp/x", "--seed", "9", "--workers", "1"]).unwrap();
        assert_eq!(cli.command, Command::Qaoa);
        let cfg = resolve_config(&cli.common).unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.pso.rng_seed, 9);
    }

    #[test]
    fn bad_invocations_exit_with_invalid_code() {
        assert_eq!(main_with_args(["qanneal", "frobnicate"]), EXIT_INVALID);
        assert_eq!(
            main_with_args(["qanneal", "optimize", "--config", "/nonexistent/config.toml"]),
            EXIT_INVALID
        );
    }
}
