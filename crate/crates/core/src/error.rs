use thiserror::Error;

/// Errors raised across the simulation stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} qubits, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("qubit index {index} out of range for {n} qubits")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("gate acts twice on qubit {0}")]
    RepeatedQubit(usize),

    #[error("product of anticommuting Paulis is not Hermitian")]
    NonHermitian,

    #[error("invalid Pauli literal {0:?}")]
    InvalidPauli(String),

    #[error("observable is the identity")]
    IdentityObservable,

    #[error("qubit count must be at least 1")]
    EmptyRegister,

    #[error("forced outcome {forced:+} contradicts deterministic outcome {actual:+}")]
    OutcomeContradiction { forced: i8, actual: i8 },

    #[error("qubit {0} does not factorize from the reference state")]
    NotFactorizable(usize),

    #[error("invalid stabilizer generators: {0}")]
    InvalidStabilizers(String),

    #[error("weight {0} outside [0, 1]")]
    InvalidWeight(f64),

    #[error("channel weights sum to {0}, expected 1")]
    NotTracePreserving(f64),

    #[error("inserted stabilizer commutes with the measured observable")]
    InsertionCommutes,

    #[error("unbound parameter {0:?}")]
    UnboundParameter(String),

    #[error("weights are symbolic; use the parametric evaluation")]
    SymbolicWeights,

    #[error("measurement of {0} is deterministic on the reference state; use branching or compression")]
    DeterministicMeasurement(String),

    #[error("measurement of {0} is random on the reference state")]
    RandomMeasurement(String),

    #[error("outcome has zero probability ({0:e})")]
    ZeroProbability(f64),

    #[error("term budget exceeded: {needed} terms > cap {cap}")]
    BudgetExceeded { needed: usize, cap: usize },

    #[error("general channel expansion is not Hermitian-paired: {0}")]
    NonHermitianExpansion(String),

    #[error("size cap exceeded: {what} = {value} > {cap}")]
    CapExceeded { what: &'static str, value: usize, cap: usize },

    #[error("matrix is not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(index: usize, n: usize) -> Result<()> {
    if index < n {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index, n })
    }
}
