//! Brute-force reference solver for tiny instances, used to ground the test
//! suites. Optimality verdicts come from enumerating candidate active sets;
//! feasibility verdicts come from a minimum-norm-point search plus vertex
//! enumeration of the box-constrained limit dual
//!
//! ```text
//!     maximize  b'pi + d'omega
//!     s.t.      A'pi + C'omega = 0,  pi in [0,1]^m,  omega in [-1,1]^p,
//! ```
//!
//! whose positive optimum is an exact Farkas certificate.

use crate::error::Error;
use crate::linalg::{self, Mat};
use crate::problem::CqpProblem;

pub const MAX_N: usize = 6;
pub const MAX_M: usize = 12;
pub const MAX_P: usize = 3;

const MULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum TinyVerdict {
    Optimal {
        x: Vec<f64>,
        pi: Vec<f64>,
        omega: Vec<f64>,
    },
    Infeasible {
        pi: Vec<f64>,
        omega: Vec<f64>,
    },
    Unbounded,
}

#[derive(Clone, Debug)]
pub enum TinyFeasibility {
    Feasible { witness: Vec<f64> },
    Infeasible { pi: Vec<f64>, omega: Vec<f64> },
}

fn check_caps(problem: &CqpProblem) -> Result<(), Error> {
    if problem.n > MAX_N || problem.m > MAX_M || problem.p > MAX_P {
        return Err(Error::SizeLimit {
            max_n: MAX_N,
            max_m: MAX_M,
            max_p: MAX_P,
        });
    }
    Ok(())
}

fn feas_tol(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

/// Minimum-norm point of `{A x >= b, C x = d}` by active-set enumeration of
/// the projection QP (`H = I`). Returns `None` when no enumerated candidate
/// is feasible, which for non-degenerate data means the set is empty.
fn min_norm_feasible_point(a: &Mat, b: &[f64], ceq: &Mat, deq: &[f64]) -> Option<Vec<f64>> {
    let n = a.ncols();
    let m = a.nrows();
    let p = ceq.nrows();
    let feasible = |x: &[f64]| -> bool {
        let ax = a.matvec(x);
        if (0..m).any(|i| ax[i] < b[i] - feas_tol(b[i])) {
            return false;
        }
        let cx = ceq.matvec(x);
        (0..p).all(|j| (cx[j] - deq[j]).abs() <= feas_tol(deq[j]))
    };

    for mask in 0u64..(1u64 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = active.len();
        if k + p > n {
            continue; // more active rows than dimensions: dependent gradients
        }
        let dim = n + k + p;
        let mut kkt = Mat::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            kkt.set(i, i, 1.0);
        }
        for (col, &i) in active.iter().enumerate() {
            for j in 0..n {
                kkt.set(j, n + col, -a.get(i, j));
                kkt.set(n + col, j, a.get(i, j));
            }
            rhs[n + col] = b[i];
        }
        for row in 0..p {
            for j in 0..n {
                kkt.set(j, n + k + row, -ceq.get(row, j));
                kkt.set(n + k + row, j, ceq.get(row, j));
            }
            rhs[n + k + row] = deq[row];
        }
        let Some(lu) = linalg::lu_factor(&kkt) else {
            continue;
        };
        let sol = lu.solve(&rhs);
        if sol[n..n + k].iter().any(|&l| l < -MULT_TOL) {
            continue;
        }
        let x = &sol[..n];
        if feasible(x) {
            return Some(x.to_vec());
        }
    }
    None
}

/// Exact optimum of the limit dual by vertex enumeration: every vertex has
/// at most `n` coordinates off their bounds; for each free set and bound
/// pattern the equality system pins the free coordinates.
fn limit_dual_optimum(problem: &CqpProblem) -> (f64, Vec<f64>, Vec<f64>) {
    let (n, m, p) = (problem.n, problem.m, problem.p);
    let total = m + p;
    // columns of B: inequality rows of A, then equality rows of C
    let col = |k: usize| -> Vec<f64> {
        if k < m {
            problem.a.row(k).to_vec()
        } else {
            problem.ceq.row(k - m).to_vec()
        }
    };
    let gain_coeff = |k: usize| {
        if k < m {
            problem.b[k]
        } else {
            problem.deq[k - m]
        }
    };

    let mut best_value = 0.0;
    let mut best = vec![0.0; total];

    for fmask in 0u64..(1u64 << total) {
        let free: Vec<usize> = (0..total).filter(|k| fmask >> k & 1 == 1).collect();
        if free.len() > n {
            continue;
        }
        let bound: Vec<usize> = (0..total).filter(|k| fmask >> k & 1 == 0).collect();
        let mut bf = Mat::zeros(n, free.len());
        for (j, &k) in free.iter().enumerate() {
            let c = col(k);
            for i in 0..n {
                bf.set(i, j, c[i]);
            }
        }
        let qr = linalg::qr_factor(&bf, 1e-12);
        if qr.rank() < free.len() {
            continue;
        }
        for pattern in 0u64..(1u64 << bound.len()) {
            let mut v = vec![0.0; total];
            let mut rhs = vec![0.0; n];
            for (bit, &k) in bound.iter().enumerate() {
                let hi = pattern >> bit & 1 == 1;
                // pi sits in [0, 1]; omega in [-1, 1]
                let val = if k < m {
                    if hi {
                        1.0
                    } else {
                        0.0
                    }
                } else if hi {
                    1.0
                } else {
                    -1.0
                };
                v[k] = val;
                if val != 0.0 {
                    linalg::axpy(-val, &col(k), &mut rhs);
                }
            }
            let (vf, resid) = qr.solve_ls(&rhs);
            if resid > 1e-9 * (1.0 + linalg::norm2(&rhs)) {
                continue;
            }
            let mut inside = true;
            for (j, &k) in free.iter().enumerate() {
                let lo = if k < m { 0.0 } else { -1.0 };
                if vf[j] < lo - MULT_TOL || vf[j] > 1.0 + MULT_TOL {
                    inside = false;
                    break;
                }
                v[k] = vf[j];
            }
            if !inside {
                continue;
            }
            let value: f64 = (0..total).map(|k| gain_coeff(k) * v[k]).sum();
            if value > best_value {
                best_value = value;
                best = v;
            }
        }
    }
    let (pi, omega) = best.split_at(m);
    (best_value, pi.to_vec(), omega.to_vec())
}

/// Feasibility of `{A x >= b, C x = d}` with a witness or an exact Farkas
/// certificate (an optimal vertex of the limit dual).
pub fn feasibility_tiny(problem: &CqpProblem) -> Result<TinyFeasibility, Error> {
    check_caps(problem)?;
    if let Some(witness) =
        min_norm_feasible_point(&problem.a, &problem.b, &problem.ceq, &problem.deq)
    {
        return Ok(TinyFeasibility::Feasible { witness });
    }
    let (value, pi, omega) = limit_dual_optimum(problem);
    let scale = 1.0 + linalg::norm_inf(&problem.b) + linalg::norm_inf(&problem.deq);
    if value > 1e-8 * scale {
        Ok(TinyFeasibility::Infeasible { pi, omega })
    } else {
        Err(Error::DegenerateOracle(
            "no feasible point found, yet the limit dual optimum is zero".into(),
        ))
    }
}

/// Reference solve by enumeration of candidate active sets: for every subset
/// of inequality rows, the equality-constrained KKT system is solved and the
/// result kept when multipliers are nonnegative and the full constraint set
/// holds. Ties go to the first (lexicographically smallest) active set.
/// Singular candidate systems are skipped.
pub fn solve_tiny(problem: &CqpProblem) -> Result<TinyVerdict, Error> {
    check_caps(problem)?;
    match feasibility_tiny(problem)? {
        TinyFeasibility::Infeasible { pi, omega } => {
            return Ok(TinyVerdict::Infeasible { pi, omega })
        }
        TinyFeasibility::Feasible { .. } => {}
    }

    let (n, m, p) = (problem.n, problem.m, problem.p);
    let hdense = problem.hess.to_dense();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;

    for mask in 0u64..(1u64 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = active.len();
        if k + p > n {
            continue;
        }
        let dim = n + k + p;
        let mut kkt = Mat::zeros(dim, dim);
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                kkt.set(i, j, hdense.get(i, j));
            }
            rhs[i] = -problem.c[i];
        }
        for (colk, &i) in active.iter().enumerate() {
            for j in 0..n {
                kkt.set(j, n + colk, -problem.a.get(i, j));
                kkt.set(n + colk, j, problem.a.get(i, j));
            }
            rhs[n + colk] = problem.b[i];
        }
        for row in 0..p {
            for j in 0..n {
                kkt.set(j, n + k + row, -problem.ceq.get(row, j));
                kkt.set(n + k + row, j, problem.ceq.get(row, j));
            }
            rhs[n + k + row] = problem.deq[row];
        }
        let Some(lu) = linalg::lu_factor(&kkt) else {
            continue;
        };
        let sol = lu.solve(&rhs);
        if sol[n..n + k].iter().any(|&l| l < -MULT_TOL) {
            continue;
        }
        let x = sol[..n].to_vec();
        let ax = problem.a.matvec(&x);
        if (0..m).any(|i| ax[i] < problem.b[i] - feas_tol(problem.b[i])) {
            continue;
        }
        let obj = problem.objective(&x);
        let better = match &best {
            None => true,
            Some((fbest, ..)) => obj < fbest - 1e-12 * (1.0 + fbest.abs()),
        };
        if better {
            let mut pi = vec![0.0; m];
            for (colk, &i) in active.iter().enumerate() {
                pi[i] = sol[n + colk].max(0.0);
            }
            let omega = sol[n + k..].to_vec();
            best = Some((obj, x, pi, omega));
        }
    }

    if let Some((_, x, pi, omega)) = best {
        return Ok(TinyVerdict::Optimal { x, pi, omega });
    }

    // feasible but no KKT point: unbounded along a recession direction
    // v with H v = 0, C v = 0, A v >= 0, c'v < 0, searched in the null
    // space of [H; C]
    let stacked = hdense.vstack(&problem.ceq);
    let qr = linalg::qr_factor(&stacked.transpose(), 1e-10);
    let null_dim = n - qr.rank();
    if null_dim > 0 {
        let mut basis = Mat::zeros(n, null_dim);
        for j in 0..null_dim {
            let q = qr.q_column(qr.rank() + j);
            for i in 0..n {
                basis.set(i, j, q[i]);
            }
        }
        // reduced feasibility system: (A N) w >= 0 and -(N'c)'w >= 1
        let mut rows = Vec::with_capacity(m + 1);
        let mut rhs = Vec::with_capacity(m + 1);
        for i in 0..m {
            let mut row = vec![0.0; null_dim];
            for j in 0..null_dim {
                row[j] = (0..n).map(|t| problem.a.get(i, t) * basis.get(t, j)).sum();
            }
            rows.push(row);
            rhs.push(0.0);
        }
        let mut crow = vec![0.0; null_dim];
        for j in 0..null_dim {
            crow[j] = -(0..n).map(|t| problem.c[t] * basis.get(t, j)).sum::<f64>();
        }
        rows.push(crow);
        rhs.push(1.0);
        let amat = Mat::from_rows(&rows);
        let empty = Mat::zeros(0, null_dim);
        if min_norm_feasible_point(&amat, &rhs, &empty, &[]).is_some() {
            return Ok(TinyVerdict::Unbounded);
        }
    }
    Err(Error::DegenerateOracle(
        "feasible and apparently bounded, but every candidate active set was \
         singular or rejected"
            .into(),
    ))
}
