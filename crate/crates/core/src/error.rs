use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {qubit} out of range for a {n_qubits}-qubit register (valid: 1..={n_qubits})")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("matrix is not Hermitian: max |H_ij - conj(H_ji)| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state is not normalized: norm = {norm}")]
    Unnormalized { norm: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("fidelity decreased at iteration {iteration}: {previous:.15} -> {current:.15}")]
    NonMonotonic {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
