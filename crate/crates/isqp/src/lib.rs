//! Infeasible-start convex quadratic programming.
//!
//! This crate solves
//!
//! ```text
//!     minimize   1/2 x^T H x + c^T x
//!     subject to A x >= b,  C x = d
//! ```
//!
//! with `H` positive semidefinite, from an arbitrary (typically infeasible)
//! starting point. Constraints are relaxed with nonnegative variables whose
//! l1 norm is charged to the objective at an adaptively increased penalty;
//! because the penalty is exact, a finite penalty value recovers solutions
//! of the original problem. Each outer iteration runs one feasible-start
//! predictor-corrector step on the relaxed problem, optionally restricted to
//! a small working set of near-active inequalities so that cost scales with
//! the variable count rather than the (possibly huge) constraint count.
//!
//! When the problem has no feasible point the run terminates with a Farkas
//! certificate, found by projecting scaled duals onto the null space of the
//! working-set constraint matrix, together with the l1-least relaxation of
//! the constraint data that the final iterate satisfies.
//!
//! Entry points:
//!
//! * [`driver::solve`] — full solve with report, trace, certificate.
//! * [`gen`] — seeded random and SVM problem builders.
//! * [`oracle`] — brute-force reference solver for tiny instances.

pub mod base_mpc;
pub mod driver;
mod error;
pub mod gen;
pub mod kkt;
pub mod linalg;
pub mod oracle;
pub mod penalty;
pub mod problem;

pub use error::Error;

pub use driver::{
    solve, FarkasCertificate, RelaxationResult, SolveOptions, SolveReport, SolveStatus,
};
pub use problem::{
    augment, kkt_residuals, normalize_rows, optimality_error, penalty_objective, AugmentedState,
    CqpProblem, Hessian, KktResiduals, PenaltyConfig, ProblemJson, ScalingRecord,
};
