//! Monotonic two-point boundary-value optimizer with amplitude clamping.
//!
//! One iteration evolves the target observable backwards under the current
//! controls, then sweeps the state forwards, updating the controls step by
//! step from the freshly propagated state before advancing it. The update at
//! each step is `εk += η fk`, where `fk` is the rate of change of
//! `<ψ(t)|O(t)|ψ(t)>` with respect to `εk` over that step. In the continuum
//! limit `fk = 2 Im <ψ|O(t) Hk|ψ>`; here it is evaluated exactly for the
//! discrete step so every iteration increases the fidelity.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, EigenDecomposition, StateVector, C64};
use crate::model::{total_hamiltonian, ProtocolSpec};
use crate::output::{write_csv, Cell};
use crate::pmp::{switching_functions_with, PmpDiagnostics};
use crate::propagate::{
    fidelity, propagate_states, propagate_states_backward, step_propagators, ControlField,
    TimeGrid,
};

/// Allowed per-iteration fidelity decrease before the run is aborted.
pub const MONOTONIC_SLACK: f64 = 1e-10;

/// Consecutive small-change iterations required to declare convergence.
pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Two independent controls without amplitude limits.
    Unlimited2,
    /// Two independent controls, each limited to `[0, 1]`.
    Limited2,
    /// One control in `[0, 1]`, with `ε1 = 1 - ε0`.
    LimitedSingle,
}

impl Scheme {
    pub fn is_bounded(self) -> bool {
        !matches!(self, Scheme::Unlimited2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClampMode {
    /// Project onto `[0, 1]` after every update.
    #[default]
    Project,
    /// Once a step crosses a bound it stays pinned there for the rest of the run.
    FreezeOnCross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SeedSchedule {
    /// `ε0 = 1 - t/T`, `ε1 = t/T`.
    #[default]
    LinearRamp,
}

impl SeedSchedule {
    pub fn controls(self, grid: TimeGrid, scheme: Scheme) -> ControlField {
        let mut c = match self {
            SeedSchedule::LinearRamp => ControlField::linear_ramp(grid),
        };
        c.bounded = scheme.is_bounded();
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TbqcpConfig {
    pub eta: f64,
    pub max_iters: usize,
    pub scheme: Scheme,
    pub clamp_mode: ClampMode,
    pub convergence_tol: f64,
    pub seed_schedule: SeedSchedule,
    /// Keep a copy of the controls every this many iterations.
    pub snapshot_every: usize,
}

impl Default for TbqcpConfig {
    fn default() -> Self {
        Self {
            eta: 5e-3,
            max_iters: 2000,
            scheme: Scheme::Limited2,
            clamp_mode: ClampMode::Project,
            convergence_tol: 1e-9,
            seed_schedule: SeedSchedule::LinearRamp,
            snapshot_every: 100,
        }
    }
}

impl TbqcpConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidParams(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParams("max_iters must be at least 1".into()));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(Error::InvalidParams("convergence_tol must be non-negative".into()));
        }
        if self.snapshot_every < 1 {
            return Err(Error::InvalidParams("snapshot_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Bound a step's control has been pinned to under [`ClampMode::FreezeOnCross`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Pin {
    #[default]
    Free,
    Lower,
    Upper,
}

/// Enforces `0 <= eps <= 1`.
pub fn clamp(eps: f64, mode: ClampMode, pin: &mut Pin) -> f64 {
    match mode {
        ClampMode::Project => eps.clamp(0.0, 1.0),
        ClampMode::FreezeOnCross => match *pin {
            Pin::Upper => 1.0,
            Pin::Lower => 0.0,
            Pin::Free if eps > 1.0 => {
                *pin = Pin::Upper;
                1.0
            }
            Pin::Free if eps < 0.0 => {
                *pin = Pin::Lower;
                0.0
            }
            Pin::Free => eps,
        },
    }
}

/// Control increments for one step given the two corrections.
///
/// With a single control the constraint `δε1 = -δε0` projects the update onto
/// `f0 - f1`.
pub fn apply_scheme_coupling(f0: f64, f1: f64, scheme: Scheme, eta: f64) -> (f64, f64) {
    match scheme {
        Scheme::Unlimited2 | Scheme::Limited2 => (eta * f0, eta * f1),
        Scheme::LimitedSingle => {
            let d = eta * (f0 - f1);
            (d, -d)
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub controls: ControlField,
    /// Fidelity of the seed controls followed by one entry per iteration.
    pub fidelity_trace: Vec<f64>,
    pub final_state: StateVector,
    pub iterations_run: usize,
    pub converged: bool,
    pub diagnostics: PmpDiagnostics,
    /// `(iteration, controls)` pairs, every `snapshot_every` iterations.
    pub snapshots: Vec<(usize, ControlField)>,
    /// Corrections `(f0, f1)` from the last sweep.
    pub last_corrections: (Vec<f64>, Vec<f64>),
}

impl OptimizationResult {
    pub fn final_fidelity(&self) -> f64 {
        *self.fidelity_trace.last().expect("trace is never empty")
    }

    /// CSV with columns `iter, F`.
    pub fn write_trace_csv(&self, out: impl Write) -> Result<()> {
        let rows = self
            .fidelity_trace
            .iter()
            .enumerate()
            .map(|(i, &f)| vec![Cell::Int(i as i64), Cell::Float(f)]);
        write_csv(out, &["iter", "F"], rows)
    }
}

/// Runs the optimizer from the configured seed schedule.
pub fn tbqcp_iterate(
    spec: &ProtocolSpec,
    config: &TbqcpConfig,
    grid: TimeGrid,
) -> Result<OptimizationResult> {
    let seed = config.seed_schedule.controls(grid, config.scheme);
    tbqcp_from(spec, config, seed)
}

/// Nonzero entries of a control Hamiltonian, for cheap contractions.
struct SparseTerms(Vec<(usize, usize, C64)>);

impl SparseTerms {
    fn new(m: &ComplexMatrix) -> Self {
        let n = m.dim();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let z = m.get(i, j);
                if z != C64::new(0.0, 0.0) {
                    terms.push((i, j, z));
                }
            }
        }
        Self(terms)
    }

    /// `sum_ij H_ij Y_ij` with `Y = conj(V) Z`, touching only the needed entries of `Y`.
    fn contract(&self, v: &DMatrix<C64>, z: &DMatrix<C64>) -> C64 {
        let n = v.nrows();
        self.0
            .iter()
            .map(|&(i, j, h)| {
                let yij: C64 = (0..n).map(|a| v[(i, a)].conj() * z[(a, j)]).sum();
                h * yij
            })
            .sum()
    }
}

/// Observable as `sum_m o_m |q_m><q_m|`, evolved backwards vector by vector.
struct SpectralObservable {
    weights: Vec<f64>,
    vectors: Vec<StateVector>,
}

impl SpectralObservable {
    fn new(o: &ComplexMatrix) -> Result<Self> {
        let eig = crate::linalg::eig_hermitian(o)?;
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let mut weights = Vec::new();
        let mut vectors = Vec::new();
        for (k, &w) in eig.eigenvalues.iter().enumerate() {
            if w.abs() > 1e-14 * scale.max(1.0) {
                weights.push(w);
                let col = eig.eigenvectors.as_inner().column(k).into_owned();
                vectors.push(StateVector::from_amplitudes(col.as_slice().to_vec()));
            }
        }
        Ok(Self { weights, vectors })
    }

    /// `q_m(t_i)` for every node `i` and component `m`, indexed `[i][m]`.
    fn backward(&self, steps: &[EigenStep]) -> Vec<Vec<StateVector>> {
        let mut nodes = vec![self.vectors.clone(); steps.len() + 1];
        for (i, step) in steps.iter().enumerate().rev() {
            let next: Vec<StateVector> = nodes[i + 1]
                .iter()
                .map(|q| step.eig.apply_propagator_adjoint(&step.phases, q))
                .collect();
            nodes[i] = next;
        }
        nodes
    }

    fn apply(&self, components: &[StateVector], x: &StateVector) -> StateVector {
        let mut out = StateVector::zeros(x.dim());
        for (w, q) in self.weights.iter().zip(components) {
            out = out.add(&q.scale(q.inner(x) * *w));
        }
        out
    }
}

/// Spectrum of one step Hamiltonian together with its propagator phases.
struct EigenStep {
    eig: EigenDecomposition,
    phases: Vec<C64>,
}

impl EigenStep {
    fn new(h: &ComplexMatrix, dt: f64) -> Result<Self> {
        let eig = crate::linalg::eig_hermitian(h)?;
        let phases = eig.phases(dt);
        Ok(Self { eig, phases })
    }

    /// Divided differences of `exp(-i w dt)` over the spectrum; the
    /// eigenbasis kernel of the derivative of `exp(-i H dt)`.
    fn divided_differences(&self, dt: f64) -> DMatrix<C64> {
        let w = &self.eig.eigenvalues;
        let e = &self.phases;
        DMatrix::from_fn(w.len(), w.len(), |a, b| {
            let gap = w[a] - w[b];
            if gap.abs() > 1e-9 {
                (e[a] - e[b]) / gap
            } else {
                C64::new(0.0, -dt) * (e[a] + e[b]) * 0.5
            }
        })
    }
}

/// Exact derivatives of `<ψ|U^dagger O_next U|ψ>` with respect to the two
/// controls of a step, divided by `dt`. `o_next_x` maps `x` to `O_next x`.
fn step_corrections(
    step: &EigenStep,
    h: &[SparseTerms; 2],
    o_next_x: impl Fn(&StateVector) -> StateVector,
    psi: &StateVector,
    dt: f64,
) -> (f64, f64) {
    let v = step.eig.eigenvectors.as_inner();
    let c: DVector<C64> = v.ad_mul(psi.as_inner());
    let a = DVector::from_fn(c.len(), |j, _| step.phases[j] * c[j]);
    let x = StateVector::from_amplitudes((v * a).as_slice().to_vec());
    let a_prime: DVector<C64> = v.ad_mul(o_next_x(&x).as_inner());
    let gamma = step.divided_differences(dt);
    let w = DMatrix::from_fn(c.len(), c.len(), |p, q| a_prime[p].conj() * gamma[(p, q)] * c[q]);
    let z = w * v.transpose();
    let g0 = 2.0 * h[0].contract(v, &z).re / dt;
    let g1 = 2.0 * h[1].contract(v, &z).re / dt;
    (g0, g1)
}

/// Runs the optimizer from explicit initial controls.
pub fn tbqcp_from(
    spec: &ProtocolSpec,
    config: &TbqcpConfig,
    initial: ControlField,
) -> Result<OptimizationResult> {
    config.validate()?;
    let grid = *initial.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let bounded = config.scheme.is_bounded();
    let mut controls = initial;
    controls.bounded = bounded;
    if bounded {
        for i in 0..n {
            controls.eps0[i] = controls.eps0[i].clamp(0.0, 1.0);
            controls.eps1[i] = if config.scheme == Scheme::LimitedSingle {
                1.0 - controls.eps0[i]
            } else {
                controls.eps1[i].clamp(0.0, 1.0)
            };
        }
    }

    let h = [SparseTerms::new(&spec.h0), SparseTerms::new(&spec.h1)];
    let observable = SpectralObservable::new(&spec.observable)?;
    let mut pins = vec![[Pin::Free; 2]; n];
    let mut steps = controls
        .eps0
        .iter()
        .zip(&controls.eps1)
        .map(|(&e0, &e1)| EigenStep::new(&total_hamiltonian(spec, e0, e1, None)?, dt))
        .collect::<Result<Vec<_>>>()?;
    let mut psi_final = steps
        .iter()
        .fold(spec.psi0.clone(), |psi, s| s.eig.apply_propagator(&s.phases, &psi));
    let mut trace = vec![fidelity(&psi_final, &spec.target)];
    let mut snapshots = vec![(0, controls.clone())];
    let mut corrections = (vec![0.0; n], vec![0.0; n]);
    let mut quiet = 0usize;
    let mut converged = false;
    let mut iterations_run = 0;

    for iter in 1..=config.max_iters {
        let components = observable.backward(&steps);
        let mut psi = spec.psi0.clone();
        for i in 0..n {
            let next = &components[i + 1];
            let (f0, f1) =
                step_corrections(&steps[i], &h, |x| observable.apply(next, x), &psi, dt);
            corrections.0[i] = f0;
            corrections.1[i] = f1;
            let (d0, d1) = apply_scheme_coupling(f0, f1, config.scheme, config.eta);
            let [pin0, pin1] = &mut pins[i];
            match config.scheme {
                Scheme::Unlimited2 => {
                    controls.eps0[i] += d0;
                    controls.eps1[i] += d1;
                }
                Scheme::Limited2 => {
                    controls.eps0[i] = clamp(controls.eps0[i] + d0, config.clamp_mode, pin0);
                    controls.eps1[i] = clamp(controls.eps1[i] + d1, config.clamp_mode, pin1);
                }
                Scheme::LimitedSingle => {
                    controls.eps0[i] = clamp(controls.eps0[i] + d0, config.clamp_mode, pin0);
                    controls.eps1[i] = 1.0 - controls.eps0[i];
                }
            }
            let hi = total_hamiltonian(spec, controls.eps0[i], controls.eps1[i], None)?;
            steps[i] = EigenStep::new(&hi, dt)?;
            psi = steps[i].eig.apply_propagator(&steps[i].phases, &psi);
        }
        let f = fidelity(&psi, &spec.target);
        let previous = *trace.last().unwrap();
        trace.push(f);
        psi_final = psi;
        iterations_run = iter;
        if f < previous - MONOTONIC_SLACK {
            return Err(Error::NonMonotonic {
                iteration: iter,
                previous,
                current: f,
            });
        }
        if iter % config.snapshot_every == 0 {
            snapshots.push((iter, controls.clone()));
        }
        if (f - previous).abs() < config.convergence_tol {
            quiet += 1;
            if quiet >= CONVERGENCE_WINDOW {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if snapshots.last().map(|s| s.0) != Some(iterations_run) {
        snapshots.push((iterations_run, controls.clone()));
    }

    let full_steps = step_propagators(spec, &controls, None)?;
    let psi_traj = propagate_states(grid, &full_steps, &spec.psi0);
    let lambda = propagate_states_backward(grid, &full_steps, &spec.observable.apply(&psi_final));
    let diagnostics = switching_functions_with(spec, &controls, &full_steps, &psi_traj, &lambda)?;
    Ok(OptimizationResult {
        controls,
        fidelity_trace: trace,
        final_state: psi_final,
        iterations_run,
        converged,
        diagnostics,
        snapshots,
        last_corrections: corrections,
    })
}
