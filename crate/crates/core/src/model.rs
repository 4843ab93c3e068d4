//! The three-qubit teleportation protocol and its error Hamiltonians.
//!
//! Units: hbar = omega0 = 1, so energies are in hbar*omega0 and times in
//! tau0 = 1/omega0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pauli_embed, Axis, ComplexMatrix, StateVector, C64};

const NORM_TOL: f64 = 1e-12;

/// The unknown single-qubit state `a|0> + b|1>` carried by qubit 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InputQubitRepr", into = "InputQubitRepr")]
pub struct InputQubit {
    a: C64,
    b: C64,
}

/// `[re, im]` pairs, the on-disk form of an input qubit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputQubitRepr {
    a: [f64; 2],
    b: [f64; 2],
}

impl TryFrom<InputQubitRepr> for InputQubit {
    type Error = Error;
    fn try_from(r: InputQubitRepr) -> Result<Self> {
        InputQubit::new(C64::new(r.a[0], r.a[1]), C64::new(r.b[0], r.b[1]))
    }
}

impl From<InputQubit> for InputQubitRepr {
    fn from(q: InputQubit) -> Self {
        InputQubitRepr {
            a: [q.a.re, q.a.im],
            b: [q.b.re, q.b.im],
        }
    }
}

impl Default for InputQubit {
    fn default() -> Self {
        Self {
            a: C64::new(1.0, 0.0),
            b: C64::new(0.0, 0.0),
        }
    }
}

impl InputQubit {
    pub fn new(a: C64, b: C64) -> Result<Self> {
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Unnormalized { norm });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn b(&self) -> C64 {
        self.b
    }

    pub fn state(&self) -> StateVector {
        StateVector::from_amplitudes(vec![self.a, self.b])
    }
}

/// Hamiltonians, boundary states and target observable of a two-control
/// annealing problem.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    pub n_qubits: usize,
    /// Driving Hamiltonian; `psi0` is one of its ground states.
    pub h0: ComplexMatrix,
    /// Problem Hamiltonian; `target` is one of its ground states.
    pub h1: ComplexMatrix,
    pub psi0: StateVector,
    pub target: StateVector,
    /// `|target><target|`.
    pub observable: ComplexMatrix,
}

impl ProtocolSpec {
    /// Assembles a protocol from explicit parts; the observable is the
    /// projector onto `target`.
    pub fn new(
        h0: ComplexMatrix,
        h1: ComplexMatrix,
        psi0: StateVector,
        target: StateVector,
    ) -> Result<Self> {
        let dim = h0.dim();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::InvalidParams(format!(
                "register dimension {dim} is not a power of two"
            )));
        }
        for d in [h1.dim(), psi0.dim(), target.dim()] {
            if d != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d,
                });
            }
        }
        for h in [&h0, &h1] {
            let deviation = h.hermitian_deviation();
            if deviation > crate::linalg::HERMITIAN_TOL {
                return Err(Error::NotHermitian { deviation });
            }
        }
        for v in [&psi0, &target] {
            if (v.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::Unnormalized { norm: v.norm() });
            }
        }
        let observable = ComplexMatrix::outer(&target, &target);
        Ok(Self {
            n_qubits: dim.trailing_zeros() as usize,
            h0,
            h1,
            psi0,
            target,
            observable,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }
}

fn bell_phi() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::from_amplitudes(vec![
        C64::new(s, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(s, 0.0),
    ])
}

/// `-(sigma_x^i sigma_x^j + sigma_z^i sigma_z^j)` on a three-qubit register.
fn xx_plus_zz_coupling(i: usize, j: usize) -> ComplexMatrix {
    let xx = &pauli_embed(Axis::X, i, 3).unwrap() * &pauli_embed(Axis::X, j, 3).unwrap();
    let zz = &pauli_embed(Axis::Z, i, 3).unwrap() * &pauli_embed(Axis::Z, j, 3).unwrap();
    (&xx + &zz).scale(-1.0)
}

/// Driving Hamiltonian of the teleportation protocol, coupling qubits 2 and 3.
pub fn teleportation_h0() -> ComplexMatrix {
    xx_plus_zz_coupling(2, 3)
}

/// Problem Hamiltonian of the teleportation protocol, coupling qubits 1 and 2.
pub fn teleportation_h1() -> ComplexMatrix {
    xx_plus_zz_coupling(1, 2)
}

/// Teleportation of `input` from qubit 1 to qubit 3.
///
/// The initial state is `input ⊗ |Φ>` and the target `|Φ> ⊗ input`, with
/// `|Φ> = (|00> + |11>)/√2`.
pub fn build_teleportation(input: InputQubit) -> ProtocolSpec {
    let q = input.state();
    let phi = bell_phi();
    ProtocolSpec::new(
        teleportation_h0(),
        teleportation_h1(),
        q.kron(&phi),
        phi.kron(&q),
    )
    .expect("teleportation protocol is well formed")
}

/// Systematic error term `alpha * sigma_axis` on one qubit of the three-qubit register.
pub fn build_error_hamiltonian(axis: Axis, qubit: usize, alpha: f64) -> Result<ComplexMatrix> {
    Ok(pauli_embed(axis, qubit, 3)?.scale(alpha))
}

/// `eps0 * H0 + eps1 * H1 (+ He)`.
pub fn total_hamiltonian(
    spec: &ProtocolSpec,
    eps0: f64,
    eps1: f64,
    err: Option<&ComplexMatrix>,
) -> Result<ComplexMatrix> {
    let mut h = &spec.h0.scale(eps0) + &spec.h1.scale(eps1);
    if let Some(e) = err {
        if e.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: e.dim(),
            });
        }
        h = &h + e;
    }
    Ok(h)
}
