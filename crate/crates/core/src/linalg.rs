//! Dense complex linear algebra for small qubit registers.
//!
//! Everything here works on full `2^n x 2^n` matrices. The registers this crate
//! cares about have three qubits, so an 8x8 eigendecomposition per time step is
//! cheap and gives exact piecewise-constant propagators.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance on `|H_ij - conj(H_ji)|` for a matrix to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Dense square complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{})", self.dim(), self.dim())?;
        for i in 0..self.dim() {
            write!(f, "\n  ")?;
            for j in 0..self.dim() {
                let z = self.0[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::from_element(dim, dim, ZERO))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, entries)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    pub fn from_inner(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    /// The outer product `|a><b|`.
    pub fn outer(a: &StateVector, b: &StateVector) -> Self {
        Self(&a.0 * b.0.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn as_inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `sqrt(Tr(A^dagger A))`.
    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * C64::new(s, 0.0))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL
    }

    /// `(A + A^dagger) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        StateVector(&self.0 * &v.0)
    }

    /// `<v|A|v>`.
    pub fn expectation(&self, v: &StateVector) -> C64 {
        v.0.dotc(&(&self.0 * &v.0))
    }

    /// `U^dagger A U`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        Self(u.0.adjoint() * &self.0 * &u.0)
    }

    /// Frobenius distance to `other`.
    pub fn distance(&self, other: &Self) -> f64 {
        (self - other).frobenius_norm()
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

/// Complex amplitude vector of a pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        Self(DVector::from_vec(amps))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = DVector::from_element(dim, ZERO);
        v[index] = ONE;
        Self(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::from_element(dim, ZERO))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn as_inner(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }
}

/// Ascending eigenvalues with the matching orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `exp(-i H dt)` assembled from the spectrum.
    pub fn propagator(&self, dt: f64) -> ComplexMatrix {
        let v = &self.eigenvectors.0;
        let phases = self.phases(dt);
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        ComplexMatrix(scaled * v.adjoint())
    }

    /// `exp(-i w_j dt)` for every eigenvalue `w_j`.
    pub fn phases(&self, dt: f64) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .map(|&w| C64::from_polar(1.0, -w * dt))
            .collect()
    }

    /// `exp(-i H dt) v` without forming the matrix.
    pub fn apply_propagator(&self, phases: &[C64], v: &StateVector) -> StateVector {
        let vecs = &self.eigenvectors.0;
        let mut c = vecs.ad_mul(&v.0);
        for (cj, p) in c.iter_mut().zip(phases) {
            *cj *= p;
        }
        StateVector(vecs * c)
    }

    /// `exp(+i H dt) v`, the inverse step.
    pub fn apply_propagator_adjoint(&self, phases: &[C64], v: &StateVector) -> StateVector {
        let vecs = &self.eigenvectors.0;
        let mut c = vecs.ad_mul(&v.0);
        for (cj, p) in c.iter_mut().zip(phases) {
            *cj *= p.conj();
        }
        StateVector(vecs * c)
    }

    /// `V diag(w) V^dagger`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let v = &self.eigenvectors.0;
        let mut scaled = v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= C64::new(self.eigenvalues[j], 0.0);
        }
        ComplexMatrix(scaled * v.adjoint())
    }

    /// Eigenvalues within `tol` of the smallest one.
    pub fn ground_multiplicity(&self, tol: f64) -> usize {
        let e0 = self.eigenvalues[0];
        self.eigenvalues.iter().filter(|&&w| w - e0 <= tol).count()
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// The input is symmetrized before decomposition so that roundoff-level
/// asymmetry never leaks into the spectrum. Matrices whose sparsity pattern
/// splits into independent blocks are decomposed block by block.
pub fn eig_hermitian(h: &ComplexMatrix) -> Result<EigenDecomposition> {
    let deviation = h.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let sym = h.symmetrized();
    let n = sym.dim();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::from_element(n, n, ZERO);
    let mut col = 0;
    for block in sparsity_blocks(&sym.0) {
        let m = block.len();
        let is_real = block
            .iter()
            .all(|&i| block.iter().all(|&j| sym.0[(i, j)].im == 0.0));
        if is_real {
            let sub = DMatrix::from_fn(m, m, |i, j| sym.0[(block[i], block[j])].re);
            let eig = SymmetricEigen::new(sub);
            for k in 0..m {
                values.push(eig.eigenvalues[k]);
                for (i, &row) in block.iter().enumerate() {
                    vectors[(row, col)] = C64::new(eig.eigenvectors[(i, k)], 0.0);
                }
                col += 1;
            }
        } else {
            let sub = DMatrix::from_fn(m, m, |i, j| sym.0[(block[i], block[j])]);
            let eig = SymmetricEigen::new(sub);
            for k in 0..m {
                values.push(eig.eigenvalues[k]);
                for (i, &row) in block.iter().enumerate() {
                    vectors[(row, col)] = eig.eigenvectors[(i, k)];
                }
                col += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: ComplexMatrix(vectors),
    })
}

/// Index sets of the connected components of the graph whose edges are the
/// nonzero off-diagonal entries of `m`, each sorted ascending.
fn sparsity_blocks(m: &DMatrix<C64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if m[(i, j)] != ZERO {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[slot[r]].push(i);
    }
    blocks
}

/// `exp(-i H dt)` for Hermitian `H`.
pub fn expm_unitary(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    if !dt.is_finite() {
        return Err(Error::InvalidParams(format!("non-finite time step {dt}")));
    }
    Ok(eig_hermitian(h)?.propagator(dt))
}

/// `||U^dagger U - I||_F`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    (&(&u.adjoint() * u) - &ComplexMatrix::identity(u.dim())).frobenius_norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn pauli(self) -> ComplexMatrix {
        let (z, o, i) = (ZERO, ONE, C64::new(0.0, 1.0));
        let entries = match self {
            Axis::X => [z, o, o, z],
            Axis::Y => [z, -i, i, z],
            Axis::Z => [o, z, z, -o],
        };
        ComplexMatrix(DMatrix::from_row_slice(2, 2, &entries))
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Pauli operator on one qubit of an `n_qubits` register, identity elsewhere.
///
/// Qubits are numbered from 1, with qubit 1 the leftmost (most significant)
/// tensor factor.
pub fn pauli_embed(axis: Axis, qubit: usize, n_qubits: usize) -> Result<ComplexMatrix> {
    if qubit == 0 || qubit > n_qubits {
        return Err(Error::QubitOutOfRange { qubit, n_qubits });
    }
    let id = ComplexMatrix::identity(2);
    let mut out = ComplexMatrix::identity(1);
    for q in 1..=n_qubits {
        out = if q == qubit {
            out.kron(&axis.pauli())
        } else {
            out.kron(&id)
        };
    }
    Ok(out)
}
