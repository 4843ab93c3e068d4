//! Experiment-level observables: fidelity sweeps over the final time, the
//! double-bang reference curve, energy cost, robustness against static
//! single-qubit fields and cubic fits of optimized controls.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, pauli_embed, Axis};
use crate::model::ProtocolSpec;
use crate::output::{write_csv, Cell};
use crate::propagate::{fidelity, final_fidelity, ControlField, TimeGrid, STEPS_PER_TAU};
use crate::qaoa::{pso_over_depths, qaoa_to_controls, MergedBlock, PsoConfig, PsoOutcome};
use crate::tbqcp::{tbqcp_iterate, OptimizationResult, Scheme, TbqcpConfig};

/// Fidelity threshold that defines the critical time.
pub const CRITICAL_FIDELITY: f64 = 1.0 - 1e-4;

/// The five temporal evolution schemes, numbered as in the sweep output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvolutionScheme {
    Unlimited2,
    Limited2,
    LimitedSingle,
    Qaoa,
    /// Linear ramp, evaluated without optimization.
    Lae,
}

impl EvolutionScheme {
    pub const ALL: [EvolutionScheme; 5] = [
        EvolutionScheme::Unlimited2,
        EvolutionScheme::Limited2,
        EvolutionScheme::LimitedSingle,
        EvolutionScheme::Qaoa,
        EvolutionScheme::Lae,
    ];

    pub fn number(self) -> usize {
        match self {
            EvolutionScheme::Unlimited2 => 1,
            EvolutionScheme::Limited2 => 2,
            EvolutionScheme::LimitedSingle => 3,
            EvolutionScheme::Qaoa => 4,
            EvolutionScheme::Lae => 5,
        }
    }

    pub fn tbqcp_scheme(self) -> Option<Scheme> {
        match self {
            EvolutionScheme::Unlimited2 => Some(Scheme::Unlimited2),
            EvolutionScheme::Limited2 => Some(Scheme::Limited2),
            EvolutionScheme::LimitedSingle => Some(Scheme::LimitedSingle),
            EvolutionScheme::Qaoa | EvolutionScheme::Lae => None,
        }
    }
}

impl fmt::Display for EvolutionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Everything needed to run any scheme at a given final time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSettings {
    pub steps_per_tau: usize,
    /// The `scheme` field is overridden per run.
    pub tbqcp: TbqcpConfig,
    pub pso: PsoConfig,
    pub qaoa_depths: Vec<usize>,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        Self {
            steps_per_tau: STEPS_PER_TAU,
            tbqcp: TbqcpConfig::default(),
            pso: PsoConfig::default(),
            qaoa_depths: (1..=crate::qaoa::MAX_DEPTH).collect(),
        }
    }
}

impl SchemeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_tau == 0 {
            return Err(Error::InvalidParams("steps_per_tau must be positive".into()));
        }
        if self.qaoa_depths.is_empty() || self.qaoa_depths.contains(&0) {
            return Err(Error::InvalidParams("qaoa_depths must be a non-empty list of positive depths".into()));
        }
        self.tbqcp.validate()?;
        self.pso.validate()
    }

    pub fn grid(&self, t_final: f64) -> Result<TimeGrid> {
        TimeGrid::with_density(t_final, self.steps_per_tau)
    }
}

#[derive(Clone, Debug)]
pub enum RunDetail {
    Tbqcp(Box<OptimizationResult>),
    Qaoa {
        /// Best fidelity found at each depth.
        per_depth: Vec<(usize, f64)>,
        best_depth: usize,
        best: PsoOutcome,
        merged: Vec<MergedBlock>,
    },
    Lae,
}

#[derive(Clone, Debug)]
pub struct SchemeRun {
    pub scheme: EvolutionScheme,
    pub t_final: f64,
    pub fidelity: f64,
    pub energy_cost: f64,
    /// Controls on the time grid; QAOA schedules are sampled onto it.
    pub controls: ControlField,
    pub detail: RunDetail,
}

impl SchemeRun {
    /// Budget exhaustion only applies to the iterative optimizer.
    pub fn converged(&self) -> bool {
        match &self.detail {
            RunDetail::Tbqcp(r) => r.converged,
            _ => true,
        }
    }
}

pub fn run_scheme(
    spec: &ProtocolSpec,
    scheme: EvolutionScheme,
    t_final: f64,
    settings: &SchemeSettings,
) -> Result<SchemeRun> {
    let grid = settings.grid(t_final)?;
    let (fidelity, controls, detail) = match scheme.tbqcp_scheme() {
        Some(s) => {
            let cfg = TbqcpConfig {
                scheme: s,
                ..settings.tbqcp.clone()
            };
            let r = tbqcp_iterate(spec, &cfg, grid)?;
            (r.final_fidelity(), r.controls.clone(), RunDetail::Tbqcp(Box::new(r)))
        }
        None if scheme == EvolutionScheme::Qaoa => {
            let (runs, best) = pso_over_depths(spec, t_final, &settings.qaoa_depths, &settings.pso)?;
            let per_depth = runs.iter().map(|(p, r)| (*p, r.fidelity)).collect();
            let (best_depth, best) = runs.into_iter().nth(best).expect("index from the same list");
            let sampled = qaoa_to_controls(&best.params, grid)?;
            let detail = RunDetail::Qaoa {
                per_depth,
                best_depth,
                merged: sampled.merged,
                best: best.clone(),
            };
            (best.fidelity, sampled.controls, detail)
        }
        None => {
            let controls = ControlField::linear_ramp(grid);
            (final_fidelity(spec, &controls, None)?, controls, RunDetail::Lae)
        }
    };
    Ok(SchemeRun {
        scheme,
        t_final,
        fidelity,
        energy_cost: energy_cost(spec, &controls),
        controls,
        detail,
    })
}

/// Time average of `||eps0 H0 + eps1 H1||_F` over the grid (midpoint rule).
pub fn energy_cost(spec: &ProtocolSpec, controls: &ControlField) -> f64 {
    // ||a H0 + b H1||^2 = a^2 Tr H0^2 + b^2 Tr H1^2 + 2ab Re Tr H0 H1
    let t00 = (&spec.h0 * &spec.h0).trace().re;
    let t11 = (&spec.h1 * &spec.h1).trace().re;
    let t01 = (&spec.h0 * &spec.h1).trace().re;
    let n = controls.eps0.len();
    let sum: f64 = controls
        .eps0
        .iter()
        .zip(&controls.eps1)
        .map(|(&a, &b)| (a * a * t00 + b * b * t11 + 2.0 * a * b * t01).max(0.0).sqrt())
        .sum();
    sum / n as f64
}

/// `0.25 + 0.75 sin^2(pi T / (2 Tc))`.
pub fn double_bang_curve(t: f64, tc: f64) -> f64 {
    0.25 + 0.75 * (PI * t / (2.0 * tc)).sin().powi(2)
}

/// Fidelities with both controls held at 1, evaluated exactly (one
/// diagonalization, no time stepping).
pub struct DoubleBang {
    eig: crate::linalg::EigenDecomposition,
    spec: ProtocolSpec,
}

impl DoubleBang {
    pub fn new(spec: &ProtocolSpec) -> Result<Self> {
        Ok(Self {
            eig: eig_hermitian(&(&spec.h0 + &spec.h1))?,
            spec: spec.clone(),
        })
    }

    pub fn fidelity(&self, t: f64) -> f64 {
        let psi = self.eig.apply_propagator(&self.eig.phases(t), &self.spec.psi0);
        fidelity(&psi, &self.spec.target)
    }
}

/// Smallest `T` at which the double bang reaches [`CRITICAL_FIDELITY`]:
/// scan in steps of `resolution`, then bisect the bracketing step.
pub fn find_critical_time(spec: &ProtocolSpec, resolution: f64, t_max: f64) -> Result<f64> {
    if !(resolution > 0.0 && resolution <= 0.01) {
        return Err(Error::InvalidParams(format!("resolution must lie in (0, 0.01], got {resolution}")));
    }
    let db = DoubleBang::new(spec)?;
    if db.fidelity(0.0) >= CRITICAL_FIDELITY {
        return Ok(0.0);
    }
    let n = (t_max / resolution).ceil() as usize;
    let hit = (1..=n).find(|&k| db.fidelity(k as f64 * resolution) >= CRITICAL_FIDELITY);
    let Some(k) = hit else {
        return Err(Error::InvalidParams(format!(
            "double bang never reaches F >= {CRITICAL_FIDELITY} for T <= {t_max}"
        )));
    };
    let (mut lo, mut hi) = ((k - 1) as f64 * resolution, k as f64 * resolution);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if db.fidelity(mid) >= CRITICAL_FIDELITY {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Worst-case sensitivity of fixed controls to a static field `alpha * sigma`
/// on one qubit.
#[derive(Clone, Debug, Serialize)]
pub struct RobustnessReport {
    pub t_final: f64,
    pub alphas: Vec<f64>,
    /// `(axis, qubit)` of each table column.
    pub columns: Vec<(Axis, usize)>,
    /// One row per alpha.
    pub table: Vec<Vec<f64>>,
    pub worst: Vec<f64>,
}

impl RobustnessReport {
    pub fn column_labels(&self) -> Vec<String> {
        self.columns.iter().map(|(a, q)| format!("F_{a}{q}")).collect()
    }

    /// `1 - worst / F(alpha = 0)` for each alpha, as a fraction.
    pub fn relative_drop(&self, baseline: f64) -> Vec<f64> {
        self.worst.iter().map(|w| 1.0 - w / baseline).collect()
    }

    /// CSV: `alpha`, one column per `(axis, qubit)`, `worst`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let labels = self.column_labels();
        let mut header = vec!["alpha"];
        header.extend(labels.iter().map(String::as_str));
        header.push("worst");
        let rows = self.alphas.iter().zip(&self.table).zip(&self.worst).map(|((&a, row), &w)| {
            let mut cells = vec![Cell::Float(a)];
            cells.extend(row.iter().map(|&f| Cell::Float(f)));
            cells.push(Cell::Float(w));
            cells
        });
        write_csv(out, &header, rows)
    }
}

pub fn robustness_scan(spec: &ProtocolSpec, controls: &ControlField, alphas: &[f64]) -> Result<RobustnessReport> {
    let columns: Vec<(Axis, usize)> = Axis::ALL
        .iter()
        .flat_map(|&a| (1..=spec.n_qubits).map(move |q| (a, q)))
        .collect();
    let jobs: Vec<(f64, Axis, usize)> = alphas
        .iter()
        .flat_map(|&alpha| columns.iter().map(move |&(a, q)| (alpha, a, q)))
        .collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(alpha, axis, qubit)| {
            let he = pauli_embed(axis, qubit, spec.n_qubits)?.scale(alpha);
            final_fidelity(spec, controls, Some(&he))
        })
        .collect::<Result<_>>()?;
    let table: Vec<Vec<f64>> = values.chunks(columns.len()).map(<[f64]>::to_vec).collect();
    let worst = table.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    Ok(RobustnessReport {
        t_final: controls.grid().t_final(),
        alphas: alphas.to_vec(),
        columns,
        table,
        worst,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubicFit {
    /// Sample range `[start, end)` of the fitted interval.
    pub start: usize,
    pub end: usize,
    /// `c0 + c1 t + c2 t^2 + c3 t^3`.
    pub coefficients: [f64; 4],
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum FitOutcome {
    Fitted(CubicFit),
    Skipped(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubicFitReport {
    pub eps0: FitOutcome,
    pub eps1: FitOutcome,
}

/// Least-squares cubic fit of each control on its longest run of samples
/// strictly inside `(0, 1)`.
pub fn cubic_fit_report(controls: &ControlField) -> CubicFitReport {
    let times: Vec<f64> = controls.grid().midpoints().collect();
    CubicFitReport {
        eps0: fit_free_interval(&times, &controls.eps0),
        eps1: fit_free_interval(&times, &controls.eps1),
    }
}

fn fit_free_interval(times: &[f64], values: &[f64]) -> FitOutcome {
    let (mut best, mut run_start) = ((0, 0), None);
    for i in 0..=values.len() {
        let free = i < values.len() && values[i] > 0.0 && values[i] < 1.0;
        match (free, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    let (start, end) = best;
    if end - start < 5 {
        return FitOutcome::Skipped(format!(
            "longest interval inside the bounds has {} samples, need at least 5",
            end - start
        ));
    }
    let t = &times[start..end];
    let y = DVector::from_column_slice(&values[start..end]);
    let a = DMatrix::from_fn(t.len(), 4, |i, k| t[i].powi(k as i32));
    let c = match a.clone().svd(true, true).solve(&y, 1e-14) {
        Ok(c) => c,
        Err(e) => return FitOutcome::Skipped(format!("least-squares solve failed: {e}")),
    };
    let residual = (&a * &c - &y).norm_squared();
    let mean = y.mean();
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if total > 0.0 {
        1.0 - residual / total
    } else {
        1.0
    };
    FitOutcome::Fitted(CubicFit {
        start,
        end,
        coefficients: [c[0], c[1], c[2], c[3]],
        r_squared,
    })
}

/// Fidelity and energy cost of every scheme over a list of final times.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub t_values: Vec<f64>,
    pub schemes: Vec<EvolutionScheme>,
    /// `runs[i][k]` is scheme `schemes[k]` at `t_values[i]`.
    pub runs: Vec<Vec<SchemeRun>>,
    pub double_bang_sim: Vec<f64>,
    pub double_bang_formula: Vec<f64>,
    pub critical_time: f64,
}

impl SweepResult {
    pub fn fidelities(&self, scheme: EvolutionScheme) -> Vec<f64> {
        self.column(scheme, |r| r.fidelity)
    }

    pub fn costs(&self, scheme: EvolutionScheme) -> Vec<f64> {
        self.column(scheme, |r| r.energy_cost)
    }

    fn column(&self, scheme: EvolutionScheme, f: impl Fn(&SchemeRun) -> f64) -> Vec<f64> {
        let Some(k) = self.schemes.iter().position(|&s| s == scheme) else {
            return vec![f64::NAN; self.t_values.len()];
        };
        self.runs.iter().map(|row| f(&row[k])).collect()
    }

    /// CSV: `T, F_scheme1..5, F_doublebang_sim, F_doublebang_formula`.
    /// Schemes left out of the sweep print as `nan`.
    pub fn write_fidelity_csv(&self, out: impl Write) -> Result<()> {
        let cols: Vec<Vec<f64>> = EvolutionScheme::ALL.iter().map(|&s| self.fidelities(s)).collect();
        let rows = (0..self.t_values.len()).map(|i| {
            let mut row = vec![Cell::Float(self.t_values[i])];
            row.extend(cols.iter().map(|c| Cell::Float(c[i])));
            row.push(Cell::Float(self.double_bang_sim[i]));
            row.push(Cell::Float(self.double_bang_formula[i]));
            row
        });
        write_csv(
            out,
            &[
                "T",
                "F_scheme1",
                "F_scheme2",
                "F_scheme3",
                "F_scheme4",
                "F_scheme5",
                "F_doublebang_sim",
                "F_doublebang_formula",
            ],
            rows,
        )
    }

    /// CSV: `T, Sigma_scheme1..5`.
    pub fn write_cost_csv(&self, out: impl Write) -> Result<()> {
        let cols: Vec<Vec<f64>> = EvolutionScheme::ALL.iter().map(|&s| self.costs(s)).collect();
        let rows = (0..self.t_values.len()).map(|i| {
            let mut row = vec![Cell::Float(self.t_values[i])];
            row.extend(cols.iter().map(|c| Cell::Float(c[i])));
            row
        });
        write_csv(
            out,
            &["T", "Sigma_scheme1", "Sigma_scheme2", "Sigma_scheme3", "Sigma_scheme4", "Sigma_scheme5"],
            rows,
        )
    }
}

/// Runs every `(T, scheme)` pair on the current rayon pool. Output order
/// follows the inputs regardless of scheduling.
pub fn run_sweep(
    spec: &ProtocolSpec,
    t_values: &[f64],
    schemes: &[EvolutionScheme],
    settings: &SchemeSettings,
) -> Result<SweepResult> {
    settings.validate()?;
    let tc = find_critical_time(spec, 0.01, 10.0)?;
    let db = DoubleBang::new(spec)?;
    let jobs: Vec<(f64, EvolutionScheme)> = t_values
        .iter()
        .flat_map(|&t| schemes.iter().map(move |&s| (t, s)))
        .collect();
    let flat: Vec<SchemeRun> = jobs
        .par_iter()
        .map(|&(t, s)| run_scheme(spec, s, t, settings))
        .collect::<Result<_>>()?;
    let mut flat = flat.into_iter();
    let runs = t_values
        .iter()
        .map(|_| flat.by_ref().take(schemes.len()).collect())
        .collect();
    Ok(SweepResult {
        t_values: t_values.to_vec(),
        schemes: schemes.to_vec(),
        runs,
        double_bang_sim: t_values.iter().map(|&t| db.fidelity(t)).collect(),
        double_bang_formula: t_values.iter().map(|&t| double_bang_curve(t, tc)).collect(),
        critical_time: tc,
    })
}
