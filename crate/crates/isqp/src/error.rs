use thiserror::Error;

/// Errors surfaced by problem validation, the solver, the generators, and
/// the reference oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Hessian is not symmetric (relative asymmetry {0:.3e})")]
    AsymmetricHessian(f64),

    #[error("Hessian is not positive semidefinite")]
    IndefiniteHessian,

    #[error("KKT factorization failed after {retries} diagonal perturbation retries")]
    FactorizationFailure { retries: usize },

    #[error(
        "base iteration stalled: neither the penalty objective nor the duality measure decreased"
    )]
    Stall,

    #[error("iterate left the strict interior; the problem is likely too ill-conditioned at the requested tolerance")]
    LostInteriority,

    #[error("solve aborted at iteration {iteration} (Err = {err:.3e}, phi = {phi:.3e}): {source}")]
    SolveFailed {
        iteration: usize,
        err: f64,
        phi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("problem exceeds oracle size caps (n <= {max_n}, m <= {max_m}, p <= {max_p})")]
    SizeLimit {
        max_n: usize,
        max_m: usize,
        max_p: usize,
    },

    #[error("oracle enumeration hit a degenerate configuration: {0}")]
    DegenerateOracle(String),

    #[error("invalid generator spec: {0}")]
    InvalidGenSpec(String),

    #[error("relaxed data does not admit the stopping iterate: {0}")]
    RelaxationInconsistent(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
