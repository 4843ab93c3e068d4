//! Piecewise-constant propagation on a uniform time grid.
//!
//! Step `i` covers `[i*dt, (i+1)*dt)` and uses the controls sampled at the
//! step midpoint. The same step unitaries drive the forward Schrödinger sweep,
//! the backward costate sweep and the backward Heisenberg evolution of the
//! observable, so pairings between them are conserved at the discrete level.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, ComplexMatrix, EigenDecomposition, StateVector};
use crate::model::{total_hamiltonian, ProtocolSpec};
use crate::output::{write_csv, Cell};

/// Default number of time steps per unit of `tau0`.
pub const STEPS_PER_TAU: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidGrid(format!("final time must be positive, got {t_final}")));
        }
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 steps, got {n_steps}")));
        }
        Ok(Self { t_final, n_steps })
    }

    /// Grid with `steps_per_tau` steps per unit time (at least 2 steps).
    pub fn with_density(t_final: f64, steps_per_tau: usize) -> Result<Self> {
        let n = (t_final * steps_per_tau as f64).round().max(2.0) as usize;
        Self::new(t_final, n)
    }

    /// Grid at the default density of [`STEPS_PER_TAU`].
    pub fn standard(t_final: f64) -> Result<Self> {
        Self::with_density(t_final, STEPS_PER_TAU)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Time of grid node `i` (`0..=n_steps`).
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Midpoint of step `i` (`0..n_steps`).
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt()
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(|i| self.midpoint(i))
    }
}

/// Two control schedules, one sample per time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    grid: TimeGrid,
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
    /// Whether the samples are constrained to `[0, 1]`.
    pub bounded: bool,
}

impl ControlField {
    pub fn new(grid: TimeGrid, eps0: Vec<f64>, eps1: Vec<f64>, bounded: bool) -> Result<Self> {
        for len in [eps0.len(), eps1.len()] {
            if len != grid.n_steps() {
                return Err(Error::DimensionMismatch {
                    expected: grid.n_steps(),
                    found: len,
                });
            }
        }
        let field = Self {
            grid,
            eps0,
            eps1,
            bounded,
        };
        if bounded && !field.within_bounds() {
            return Err(Error::InvalidParams("bounded controls outside [0, 1]".into()));
        }
        Ok(field)
    }

    /// Samples `f(t)` at every step midpoint.
    pub fn from_fn(grid: TimeGrid, bounded: bool, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (eps0, eps1) = grid.midpoints().map(f).unzip();
        Self::new(grid, eps0, eps1, bounded)
    }

    pub fn constant(grid: TimeGrid, eps0: f64, eps1: f64) -> Self {
        let bounded = (0.0..=1.0).contains(&eps0) && (0.0..=1.0).contains(&eps1);
        Self {
            grid,
            eps0: vec![eps0; grid.n_steps()],
            eps1: vec![eps1; grid.n_steps()],
            bounded,
        }
    }

    /// Linear adiabatic ramp: `eps0 = 1 - t/T`, `eps1 = t/T`.
    pub fn linear_ramp(grid: TimeGrid) -> Self {
        let t_final = grid.t_final();
        Self::from_fn(grid, true, |t| (1.0 - t / t_final, t / t_final))
            .expect("ramp samples lie in [0, 1]")
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn within_bounds(&self) -> bool {
        self.eps0
            .iter()
            .chain(&self.eps1)
            .all(|e| (0.0..=1.0).contains(e))
    }

    /// CSV with columns `t, eps0, eps1` at step midpoints.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let rows = (0..self.grid.n_steps()).map(|i| {
            vec![
                Cell::Float(self.grid.midpoint(i)),
                Cell::Float(self.eps0[i]),
                Cell::Float(self.eps1[i]),
            ]
        });
        write_csv(out, &["t", "eps0", "eps1"], rows)
    }

    /// Reads the format written by [`ControlField::write_csv`]. The grid is
    /// recovered from the first midpoint and the row count.
    pub fn read_csv(input: impl Read) -> Result<Self> {
        let bad = |e: csv::Error| Error::Config(format!("controls file: {e}"));
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers().map_err(bad)?;
        if header != vec!["t", "eps0", "eps1"] {
            return Err(Error::Config(format!("unexpected controls header {header:?}")));
        }
        let (mut t0, mut eps0, mut eps1) = (None, Vec::new(), Vec::new());
        for row in reader.deserialize::<(f64, f64, f64)>() {
            let (t, e0, e1) = row.map_err(bad)?;
            t0.get_or_insert(t);
            eps0.push(e0);
            eps1.push(e1);
        }
        let t0 = t0.ok_or_else(|| Error::Config("controls file has no rows".into()))?;
        let grid = TimeGrid::new(2.0 * t0 * eps0.len() as f64, eps0.len())?;
        let bounded = eps0.iter().chain(&eps1).all(|e| (0.0..=1.0).contains(e));
        Self::new(grid, eps0, eps1, bounded)
    }
}

/// Spectral data and unitary of one time step.
#[derive(Clone, Debug)]
pub struct StepPropagator {
    pub eig: EigenDecomposition,
    pub unitary: ComplexMatrix,
}

impl StepPropagator {
    pub fn new(h: &ComplexMatrix, dt: f64) -> Result<Self> {
        let eig = eig_hermitian(h)?;
        let unitary = eig.propagator(dt);
        Ok(Self { eig, unitary })
    }
}

/// Step unitaries for a control field, optionally with an added error term.
pub fn step_propagators(
    spec: &ProtocolSpec,
    controls: &ControlField,
    err: Option<&ComplexMatrix>,
) -> Result<Vec<StepPropagator>> {
    let dt = controls.grid().dt();
    controls
        .eps0
        .iter()
        .zip(&controls.eps1)
        .map(|(&e0, &e1)| StepPropagator::new(&total_hamiltonian(spec, e0, e1, err)?, dt))
        .collect()
}

/// States at every grid node, `n_steps + 1` of them.
#[derive(Clone, Debug)]
pub struct StateTrajectory {
    pub grid: TimeGrid,
    pub states: Vec<StateVector>,
}

impl StateTrajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with columns `t`, then `re_k, im_k` for every amplitude.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let dim = self.states[0].dim();
        let mut header = vec!["t".to_string()];
        for k in 0..dim {
            header.push(format!("re{k}"));
            header.push(format!("im{k}"));
        }
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.states.iter().enumerate().map(|(i, s)| {
            let mut row = vec![Cell::Float(self.grid.node(i))];
            for z in s.amplitudes() {
                row.push(Cell::Float(z.re));
                row.push(Cell::Float(z.im));
            }
            row
        });
        write_csv(out, &header_refs, rows)
    }
}

/// Observables at every grid node, `n_steps + 1` of them.
#[derive(Clone, Debug)]
pub struct ObservableTrajectory {
    pub grid: TimeGrid,
    pub observables: Vec<ComplexMatrix>,
}

/// `states[i+1] = U_i states[i]` starting from `psi0`.
pub fn propagate_states(
    grid: TimeGrid,
    steps: &[StepPropagator],
    psi0: &StateVector,
) -> StateTrajectory {
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push(psi0.clone());
    for step in steps {
        let next = step.unitary.apply(states.last().unwrap());
        states.push(next);
    }
    StateTrajectory { grid, states }
}

/// `states[i] = U_i^dagger states[i+1]` ending at `final_state`.
pub fn propagate_states_backward(
    grid: TimeGrid,
    steps: &[StepPropagator],
    final_state: &StateVector,
) -> StateTrajectory {
    let mut states = vec![final_state.clone(); steps.len() + 1];
    for (i, step) in steps.iter().enumerate().rev() {
        states[i] = step.unitary.adjoint().apply(&states[i + 1]);
    }
    StateTrajectory { grid, states }
}

/// Forward Schrödinger evolution of `spec.psi0` under `controls` (plus `err`).
pub fn evolve_forward(
    spec: &ProtocolSpec,
    controls: &ControlField,
    err: Option<&ComplexMatrix>,
) -> Result<StateTrajectory> {
    let steps = step_propagators(spec, controls, err)?;
    Ok(propagate_states(*controls.grid(), &steps, &spec.psi0))
}

/// Final state only; avoids storing the trajectory.
pub fn final_state(
    spec: &ProtocolSpec,
    controls: &ControlField,
    err: Option<&ComplexMatrix>,
) -> Result<StateVector> {
    let dt = controls.grid().dt();
    let mut psi = spec.psi0.clone();
    for (&e0, &e1) in controls.eps0.iter().zip(&controls.eps1) {
        let h = total_hamiltonian(spec, e0, e1, err)?;
        psi = eig_hermitian(&h)?.propagator(dt).apply(&psi);
    }
    Ok(psi)
}

/// Fidelity of the final state with the protocol target.
pub fn final_fidelity(
    spec: &ProtocolSpec,
    controls: &ControlField,
    err: Option<&ComplexMatrix>,
) -> Result<f64> {
    Ok(fidelity(&final_state(spec, controls, err)?, &spec.target))
}

/// Heisenberg-picture evolution of `o_final` from `T` back to `0`:
/// `O_i = U_i^dagger O_{i+1} U_i`.
pub fn evolve_observable_backward(
    spec: &ProtocolSpec,
    o_final: &ComplexMatrix,
    controls: &ControlField,
) -> Result<ObservableTrajectory> {
    if o_final.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: o_final.dim(),
        });
    }
    let deviation = o_final.hermitian_deviation();
    if deviation > crate::linalg::HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let steps = step_propagators(spec, controls, None)?;
    Ok(propagate_observable_backward(*controls.grid(), &steps, o_final))
}

pub fn propagate_observable_backward(
    grid: TimeGrid,
    steps: &[StepPropagator],
    o_final: &ComplexMatrix,
) -> ObservableTrajectory {
    let mut observables = vec![o_final.clone(); steps.len() + 1];
    for (i, step) in steps.iter().enumerate().rev() {
        observables[i] = observables[i + 1].conjugate_by(&step.unitary);
    }
    ObservableTrajectory { grid, observables }
}

/// `|<target|state>|^2`.
pub fn fidelity(state: &StateVector, target: &StateVector) -> f64 {
    target.inner(state).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Axis, C64};
    use crate::model::{build_teleportation, InputQubit};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn teleport() -> ProtocolSpec {
        build_teleportation(InputQubit::default())
    }

    fn random_bounded(grid: TimeGrid, seed: u64) -> ControlField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.n_steps();
        let eps0 = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let eps1 = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        ControlField::new(grid, eps0, eps1, true).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(f64::NAN, 10).is_err());
        let g = TimeGrid::standard(1.2).unwrap();
        assert_eq!(g.n_steps(), 2400);
        assert_relative_eq!(g.dt(), 0.0005, epsilon = 1e-15);
    }

    #[test]
    fn control_field_validation() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert!(ControlField::new(g, vec![0.5; 3], vec![0.5; 4], false).is_err());
        assert!(ControlField::new(g, vec![1.5; 4], vec![0.5; 4], true).is_err());
        assert!(ControlField::new(g, vec![1.5; 4], vec![0.5; 4], false).is_ok());
        let ramp = ControlField::linear_ramp(g);
        assert_relative_eq!(ramp.eps0[0], 0.875);
        assert_relative_eq!(ramp.eps1[3], 0.875);
    }

    #[test]
    fn zero_controls_leave_state_unchanged() {
        let spec = teleport();
        let g = TimeGrid::new(1.7, 50).unwrap();
        let traj = evolve_forward(&spec, &ControlField::constant(g, 0.0, 0.0), None).unwrap();
        assert!(traj.final_state().sub(&spec.psi0).norm() < 1e-14);
    }

    #[test]
    fn driving_eigenstate_only_picks_up_phase() {
        let spec = teleport();
        let t = 0.9;
        let g = TimeGrid::new(t, 100).unwrap();
        let traj = evolve_forward(&spec, &ControlField::constant(g, 1.0, 0.0), None).unwrap();
        let last = traj.final_state();
        assert_relative_eq!(fidelity(last, &spec.psi0), 1.0, epsilon = 1e-12);
        // E = -2, so the phase is exp(+2iT)
        let phase = spec.psi0.inner(last);
        assert!((phase - C64::from_polar(1.0, 2.0 * t)).norm() < 1e-12);
    }

    #[test]
    fn fidelity_cases() {
        let spec = teleport();
        assert_relative_eq!(fidelity(&spec.psi0, &spec.psi0), 1.0, epsilon = 1e-15);
        // oracle: only |000> is shared, amplitude 1/√2 each, overlap 1/2
        assert_relative_eq!(fidelity(&spec.psi0, &spec.target), 0.25, epsilon = 1e-15);
        let a = StateVector::basis(8, 0);
        let b = StateVector::basis(8, 5);
        assert_eq!(fidelity(&a, &b), 0.0);
    }

    #[test]
    fn norm_is_conserved_under_random_controls() {
        let spec = teleport();
        let g = TimeGrid::new(1.3, 400).unwrap();
        for seed in 0..5 {
            let traj = evolve_forward(&spec, &random_bounded(g, seed), None).unwrap();
            let worst = traj
                .states
                .iter()
                .map(|s| (s.norm() - 1.0).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-10, "norm drift {worst}");
        }
    }

    #[test]
    fn identity_observable_is_static() {
        let spec = teleport();
        let g = TimeGrid::new(1.0, 40).unwrap();
        let traj =
            evolve_observable_backward(&spec, &ComplexMatrix::identity(8), &random_bounded(g, 3))
                .unwrap();
        for o in &traj.observables {
            assert!(o.distance(&ComplexMatrix::identity(8)) < 1e-12);
        }
    }

    #[test]
    fn zero_controls_keep_observable_fixed() {
        let spec = teleport();
        let g = TimeGrid::new(1.0, 40).unwrap();
        let traj = evolve_observable_backward(
            &spec,
            &spec.observable,
            &ControlField::constant(g, 0.0, 0.0),
        )
        .unwrap();
        for o in &traj.observables {
            assert!(o.distance(&spec.observable) < 1e-14);
        }
    }

    #[test]
    fn backward_projector_stays_rank_one() {
        let spec = teleport();
        let g = TimeGrid::new(1.4, 200).unwrap();
        let traj =
            evolve_observable_backward(&spec, &spec.observable, &random_bounded(g, 11)).unwrap();
        for o in &traj.observables {
            assert!(o.is_hermitian() || o.hermitian_deviation() < 1e-12);
            assert_relative_eq!(o.trace().re, 1.0, epsilon = 1e-8);
            assert_relative_eq!((o * o).trace().re, 1.0, epsilon = 1e-8);
            let spectrum = eig_hermitian(&o.symmetrized()).unwrap().eigenvalues;
            let rank = spectrum.iter().filter(|w| w.abs() > 1e-8).count();
            assert_eq!(rank, 1);
        }
    }

    #[test]
    fn observable_rejects_bad_dimension() {
        let spec = teleport();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let res = evolve_observable_backward(&spec, &ComplexMatrix::identity(4), &ControlField::constant(g, 1.0, 1.0));
        assert!(matches!(res, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn heisenberg_and_schrodinger_pictures_agree() {
        let spec = teleport();
        let g = TimeGrid::new(1.1, 300).unwrap();
        let controls = random_bounded(g, 5);
        let states = evolve_forward(&spec, &controls, None).unwrap();
        let obs = evolve_observable_backward(&spec, &spec.observable, &controls).unwrap();
        let reference = spec.observable.expectation(states.final_state()).re;
        for (psi, o) in states.states.iter().zip(&obs.observables) {
            assert!((o.expectation(psi).re - reference).abs() <= 1e-8);
        }
    }

    #[test]
    fn time_reversal_returns_initial_state() {
        let spec = teleport();
        let g = TimeGrid::new(1.5, 300).unwrap();
        let controls = random_bounded(g, 9);
        let steps = step_propagators(&spec, &controls, None).unwrap();
        let fwd = propagate_states(g, &steps, &spec.psi0);
        let back = propagate_states_backward(g, &steps, fwd.final_state());
        assert!(back.states[0].sub(&spec.psi0).norm() < 1e-10);
    }

    #[test]
    fn grid_doubling_changes_fidelity_negligibly() {
        let spec = teleport();
        let t = 1.3;
        let ramp = |t_final: f64| move |t: f64| (1.0 - t / t_final, t / t_final);
        let coarse = ControlField::from_fn(TimeGrid::standard(t).unwrap(), true, ramp(t)).unwrap();
        let fine = ControlField::from_fn(
            TimeGrid::with_density(t, 2 * STEPS_PER_TAU).unwrap(),
            true,
            ramp(t),
        )
        .unwrap();
        let f1 = final_fidelity(&spec, &coarse, None).unwrap();
        let f2 = final_fidelity(&spec, &fine, None).unwrap();
        assert!((f1 - f2).abs() <= 1e-6, "{f1} vs {f2}");
    }

    #[test]
    fn error_term_enters_propagation() {
        let spec = teleport();
        let g = TimeGrid::new(1.0, 100).unwrap();
        let controls = ControlField::constant(g, 1.0, 1.0);
        let he = crate::model::build_error_hamiltonian(Axis::X, 1, 0.3).unwrap();
        let f0 = final_fidelity(&spec, &controls, None).unwrap();
        let f1 = final_fidelity(&spec, &controls, Some(&he)).unwrap();
        assert!((f0 - f1).abs() > 1e-4);
    }

    #[test]
    fn trajectory_csv_has_all_amplitudes() {
        let spec = teleport();
        let g = TimeGrid::new(0.5, 4).unwrap();
        let traj = evolve_forward(&spec, &ControlField::constant(g, 1.0, 1.0), None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0].split(',').count(), 17);
        assert!(lines[0].starts_with("t,re0,im0"));
    }

    #[test]
    fn controls_csv_round_trip() {
        let g = TimeGrid::new(1.3, 26).unwrap();
        let c = ControlField::from_fn(g, true, |t| (1.0 - t / 1.3, (t / 1.3).powi(2))).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = ControlField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.grid().n_steps(), 26);
        assert!((back.grid().t_final() - 1.3).abs() < 1e-10);
        assert!(back.bounded);
        for (a, b) in back.eps0.iter().zip(&c.eps0).chain(back.eps1.iter().zip(&c.eps1)) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!(ControlField::read_csv("t,x\n".as_bytes()).is_err());
        assert!(ControlField::read_csv("t,eps0,eps1\n0.1,a,0\n".as_bytes()).is_err());
    }
}
