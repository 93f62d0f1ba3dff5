use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max |M - M^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("trace is not one (got {0})")]
    TraceNotOne(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("outcome has probability {0:e}, below the conditioning floor")]
    ZeroProbabilityOutcome(f64),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("invalid probability vector: {0}")]
    InvalidWeights(String),

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("branch has probability {0:e}, below the conditioning floor")]
    ZeroProbabilityBranch(f64),

    #[error("atom budget exceeded: construction needs {needed} atoms, budget is {budget}")]
    AtomBudgetExceeded { needed: u128, budget: usize },

    #[error("strategy budget exceeded: {needed} strategy pairs, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: usize },

    #[error("LP result indeterminate: residual {residual:e} lies between lp_tol and 100*lp_tol")]
    LpNumericalFailure { residual: f64 },

    #[error("povm effects do not commute (max commutator norm {0:e})")]
    NotCommuting(f64),

    #[error("context lacks an observable diagonal in the joint basis of {0}")]
    MissingBasisObservable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
