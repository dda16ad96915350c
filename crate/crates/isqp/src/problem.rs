//! Problem data model: validation, row normalization, augmentation with
//! relaxation variables, and the residual/objective evaluations everything
//! else is built on.
//!
//! A problem is
//!
//! ```text
//!     minimize   1/2 x^T H x + c^T x
//!     subject to A x >= b          (m rows, duals pi)
//!                C x  = d          (p rows)
//! ```
//!
//! with `H` symmetric positive semidefinite. The augmented form relaxes
//! every constraint so that any starting point is strictly feasible:
//!
//! ```text
//!     minimize   f(x) + phi * (sum z + sum y)
//!     subject to A x + z >= b,  z >= 0        (duals pi, xi)
//!                C x + y >= d                 (dual eta)
//!                C x - y <= d                 (dual zeta)
//! ```
//!
//! The slacks are `s = Ax + z - b`, `t+ = Cx + y - d`, `t- = -Cx + y + d`;
//! note `t+ + t- = 2y`. `y >= 0` is implied by the two equality-derived
//! families and is deliberately not a constraint of its own: adding it would
//! make the three families structurally linearly dependent exactly at the
//! solution (where y = 0), which some base iterations cannot tolerate.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{self, Mat};

/// Hessian storage. The dense variant owns a full symmetric matrix; the
/// diagonal variant covers the strongly-convex generator class and SVM
/// objectives without paying for n^2 storage.
#[derive(Clone, Debug, PartialEq)]
pub enum Hessian {
    Diag(Vec<f64>),
    Dense(Mat),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Diag(d) => d.len(),
            Hessian::Dense(m) => m.nrows(),
        }
    }

    /// `out += H x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Hessian::Diag(d) => {
                for i in 0..d.len() {
                    out[i] += d[i] * x[i];
                }
            }
            Hessian::Dense(h) => {
                for i in 0..h.nrows() {
                    out[i] += linalg::dot(h.row(i), x);
                }
            }
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        match self {
            Hessian::Diag(d) => x.iter().zip(d).map(|(xi, di)| di * xi * xi).sum(),
            Hessian::Dense(h) => {
                let mut acc = 0.0;
                for i in 0..h.nrows() {
                    acc += x[i] * linalg::dot(h.row(i), x);
                }
                acc
            }
        }
    }

    /// Dense copy, used when assembling condensed systems.
    pub fn to_dense(&self) -> Mat {
        match self {
            Hessian::Diag(d) => {
                let mut m = Mat::zeros(d.len(), d.len());
                for (i, &v) in d.iter().enumerate() {
                    m.set(i, i, v);
                }
                m
            }
            Hessian::Dense(h) => h.clone(),
        }
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        match self {
            Hessian::Diag(d) => linalg::norm_inf(d),
            Hessian::Dense(h) => h.inf_norm(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Hessian::Diag(d) => linalg::norm_inf(d),
            Hessian::Dense(h) => h.max_abs(),
        }
    }
}

/// A convex quadratic program `min 1/2 x'Hx + c'x  s.t.  Ax >= b, Cx = d`.
///
/// Immutable after validation; share freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct CqpProblem {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub hess: Hessian,
    pub c: Vec<f64>,
    /// m x n inequality matrix, dense row-major.
    pub a: Mat,
    pub b: Vec<f64>,
    /// p x n equality matrix, dense row-major.
    pub ceq: Mat,
    pub deq: Vec<f64>,
}

impl CqpProblem {
    /// Convenience constructor for inequality-only problems.
    pub fn inequality_form(hess: Hessian, c: Vec<f64>, a: Mat, b: Vec<f64>) -> Self {
        let n = c.len();
        let m = b.len();
        CqpProblem {
            n,
            m,
            p: 0,
            hess,
            c,
            a,
            b,
            ceq: Mat::zeros(0, n),
            deq: vec![],
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * self.hess.quad_form(x) + linalg::dot(&self.c, x)
    }

    /// Shape checks, Hessian symmetrization, and a warning-level rank
    /// diagnostic on the equality matrix. With `check_psd` a Cholesky probe
    /// of `H + eps I` is attempted as well; it is off by default because it
    /// costs a factorization, and indefiniteness otherwise surfaces as a
    /// KKT-solve failure.
    pub fn validate_opts(mut self, check_psd: bool) -> Result<(Self, Vec<String>), Error> {
        let (n, m, p) = (self.n, self.m, self.p);
        if n == 0 {
            return Err(Error::DimensionMismatch("n must be at least 1".into()));
        }
        if m + p == 0 {
            return Err(Error::DimensionMismatch("m + p must be positive".into()));
        }
        if n < p {
            return Err(Error::DimensionMismatch(format!(
                "n = {n} must be at least the equality count p = {p}"
            )));
        }
        if self.c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "c has length {}, expected n = {n}",
                self.c.len()
            )));
        }
        if self.a.nrows() != m || (m > 0 && self.a.ncols() != n) {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, expected {m}x{n}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "b has length {}, expected m = {m}",
                self.b.len()
            )));
        }
        if self.ceq.nrows() != p || (p > 0 && self.ceq.ncols() != n) {
            return Err(Error::DimensionMismatch(format!(
                "C is {}x{}, expected {p}x{n}",
                self.ceq.nrows(),
                self.ceq.ncols()
            )));
        }
        if self.deq.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "d has length {}, expected p = {p}",
                self.deq.len()
            )));
        }
        if self.hess.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "H has dimension {}, expected n = {n}",
                self.hess.dim()
            )));
        }

        // Symmetrize H as (H + H^T)/2 when the asymmetry is roundoff-sized,
        // reject otherwise.
        if let Hessian::Dense(h) = &self.hess {
            let scale = h.max_abs().max(1e-300);
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    worst = worst.max((h.get(i, j) - h.get(j, i)).abs());
                }
            }
            if worst / scale > 1e-12 {
                return Err(Error::AsymmetricHessian(worst / scale));
            }
            if worst > 0.0 {
                let mut sym = h.clone();
                for i in 0..n {
                    for j in i + 1..n {
                        let v = 0.5 * (h.get(i, j) + h.get(j, i));
                        sym.set(i, j, v);
                        sym.set(j, i, v);
                    }
                }
                self.hess = Hessian::Dense(sym);
            }
        }

        if check_psd {
            let eps = 1e-10 * (1.0 + self.hess.max_abs());
            match &self.hess {
                Hessian::Diag(d) => {
                    if d.iter().any(|&v| v + eps <= 0.0) {
                        return Err(Error::IndefiniteHessian);
                    }
                }
                Hessian::Dense(h) => {
                    let mut shifted = h.clone();
                    for i in 0..n {
                        let v = shifted.get(i, i) + eps;
                        shifted.set(i, i, v);
                    }
                    if linalg::cholesky(&shifted).is_none() {
                        return Err(Error::IndefiniteHessian);
                    }
                }
            }
        }

        let mut warnings = Vec::new();
        if p > 0 {
            let qr = linalg::qr_factor(&self.ceq, 1e-10);
            if qr.rank() < p {
                warnings.push(format!(
                    "equality matrix C is rank deficient (rank {} of {p}); \
                     duplicate or dependent equality rows may degrade conditioning",
                    qr.rank()
                ));
            }
        }

        Ok((self, warnings))
    }

    pub fn validate(self) -> Result<(Self, Vec<String>), Error> {
        self.validate_opts(false)
    }
}

/// Diagonal row scalings applied by [`normalize_rows`]: entry `i` holds the
/// reciprocal 2-norm of the original row, so `original dual = scale * scaled
/// dual` recovers duals for the unscaled problem.
#[derive(Clone, Debug)]
pub struct ScalingRecord {
    pub row_scale_ineq: Vec<f64>,
    pub row_scale_eq: Vec<f64>,
}

impl ScalingRecord {
    pub fn identity(m: usize, p: usize) -> Self {
        ScalingRecord {
            row_scale_ineq: vec![1.0; m],
            row_scale_eq: vec![1.0; p],
        }
    }
}

/// Divides every inequality row (and its right-hand side) by the row's
/// 2-norm, and likewise for equalities. Rows with zero norm are left alone
/// (scale 1). H and c are untouched.
pub fn normalize_rows(problem: &CqpProblem) -> (CqpProblem, ScalingRecord) {
    let mut scaled = problem.clone();
    let mut record = ScalingRecord::identity(problem.m, problem.p);
    for i in 0..problem.m {
        let nrm = linalg::norm2(problem.a.row(i));
        if nrm > 0.0 {
            let inv = 1.0 / nrm;
            record.row_scale_ineq[i] = inv;
            for v in scaled.a.row_mut(i) {
                *v *= inv;
            }
            scaled.b[i] *= inv;
        }
    }
    for j in 0..problem.p {
        let nrm = linalg::norm2(problem.ceq.row(j));
        if nrm > 0.0 {
            let inv = 1.0 / nrm;
            record.row_scale_eq[j] = inv;
            for v in scaled.ceq.row_mut(j) {
                *v *= inv;
            }
            scaled.deq[j] *= inv;
        }
    }
    (scaled, record)
}

/// Primal/dual iterate of the augmented problem. Owned and mutated by a
/// single solve; slacks are recomputed from definitions whenever `x`, `z`,
/// or `y` move.
#[derive(Clone, Debug)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    /// Inequality relaxations, z >= 0.
    pub z: Vec<f64>,
    /// Equality relaxations (t+ + t- = 2y).
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
    pub pi: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl AugmentedState {
    /// Recomputes `s`, `t+`, `t-` from the defining identities.
    pub fn refresh_slacks(&mut self, problem: &CqpProblem) {
        let ax = problem.a.matvec(&self.x);
        for i in 0..problem.m {
            self.s[i] = ax[i] + self.z[i] - problem.b[i];
        }
        let cx = problem.ceq.matvec(&self.x);
        for j in 0..problem.p {
            self.t_plus[j] = cx[j] + self.y[j] - problem.deq[j];
            self.t_minus[j] = -cx[j] + self.y[j] + problem.deq[j];
        }
    }

    pub fn strictly_interior(&self) -> bool {
        let pos = |v: &[f64]| v.iter().all(|&x| x > 0.0);
        pos(&self.s) && pos(&self.z) && pos(&self.t_plus) && pos(&self.t_minus)
    }

    pub fn duals_nonnegative(&self) -> bool {
        let nn = |v: &[f64]| v.iter().all(|&x| x >= 0.0);
        nn(&self.pi) && nn(&self.xi) && nn(&self.eta) && nn(&self.zeta)
    }

    /// `max(||z||_inf, ||y||_inf)` — the step-2 trigger of the penalty rule.
    pub fn relaxation_inf_norm(&self) -> f64 {
        linalg::norm_inf(&self.z).max(linalg::norm_inf(&self.y))
    }

    /// `||[pi; eta - zeta]||_inf` — the reduced dual magnitude the penalty
    /// parameter has to dominate.
    pub fn reduced_dual_inf_norm(&self) -> f64 {
        let mut acc = linalg::norm_inf(&self.pi);
        for j in 0..self.eta.len() {
            acc = acc.max((self.eta[j] - self.zeta[j]).abs());
        }
        acc
    }
}

/// Builds the strictly interior starting state for the augmented problem:
/// `z0 = c_z 1` with `c_z = -min(min(Ax0 - b), 0) + 1`, `y0 = c_y 1` with
/// `c_y = max|Cx0 - d| + 1`, and all duals at one.
pub fn augment(problem: &CqpProblem, x0: &[f64]) -> AugmentedState {
    assert_eq!(x0.len(), problem.n, "x0 has wrong dimension");
    let (m, p) = (problem.m, problem.p);

    let c_z = if m > 0 {
        let ax = problem.a.matvec(x0);
        let worst = (0..m)
            .map(|i| ax[i] - problem.b[i])
            .fold(f64::INFINITY, f64::min);
        -worst.min(0.0) + 1.0
    } else {
        1.0
    };
    let c_y = if p > 0 {
        let cx = problem.ceq.matvec(x0);
        let worst = (0..p)
            .map(|j| (cx[j] - problem.deq[j]).abs())
            .fold(0.0, f64::max);
        worst + 1.0
    } else {
        1.0
    };

    let mut state = AugmentedState {
        x: x0.to_vec(),
        z: vec![c_z; m],
        y: vec![c_y; p],
        s: vec![0.0; m],
        t_plus: vec![0.0; p],
        t_minus: vec![0.0; p],
        pi: vec![1.0; m],
        xi: vec![1.0; m],
        eta: vec![1.0; p],
        zeta: vec![1.0; p],
    };
    state.refresh_slacks(problem);
    debug_assert!(state.strictly_interior());
    state
}

/// `f(x) + phi * (sum z + sum y)`
pub fn penalty_objective(problem: &CqpProblem, state: &AugmentedState, phi: f64) -> f64 {
    let relax: f64 = state.z.iter().sum::<f64>() + state.y.iter().sum::<f64>();
    problem.objective(&state.x) + phi * relax
}

/// Stationarity residual of the original problem's dual:
/// `Hx + c - A'pi - C'(eta - zeta)`.
fn dual_residual(
    problem: &CqpProblem,
    x: &[f64],
    pi: &[f64],
    eta: &[f64],
    zeta: &[f64],
) -> Vec<f64> {
    let mut r = problem.c.clone();
    problem.hess.matvec_acc(x, &mut r);
    problem.a.tr_matvec_acc(pi, -1.0, &mut r);
    let omega: Vec<f64> = eta.iter().zip(zeta).map(|(e, z)| e - z).collect();
    problem.ceq.tr_matvec_acc(&omega, -1.0, &mut r);
    r
}

/// Normalized optimality error of the original problem at `(x, pi, eta,
/// zeta)`:
///
/// ```text
///        || [ Hx + c - A'pi - C'(eta - zeta) ;
///             min{ Ax - b, pi } ;
///             min{ [Cx - d; d - Cx], [eta; zeta] } ] ||_2
/// Err = ------------------------------------------------------
///          max{ ||H||_inf, ||c||_inf, ||A||_inf, ||C||_inf }
/// ```
///
/// with componentwise minima. Negative duals are clamped to zero before
/// evaluation. When `p = 0` the equality blocks are omitted and `||C||` is
/// excluded from the denominator.
pub fn optimality_error(
    problem: &CqpProblem,
    x: &[f64],
    pi: &[f64],
    eta: &[f64],
    zeta: &[f64],
) -> f64 {
    let clamp = |v: &[f64]| -> Vec<f64> { v.iter().map(|&q| q.max(0.0)).collect() };
    let (pi, eta, zeta) = (clamp(pi), clamp(eta), clamp(zeta));

    let mut num2 = 0.0;
    for v in dual_residual(problem, x, &pi, &eta, &zeta) {
        num2 += v * v;
    }
    if problem.m > 0 {
        let ax = problem.a.matvec(x);
        for i in 0..problem.m {
            let s = ax[i] - problem.b[i];
            let v = s.min(pi[i]);
            num2 += v * v;
        }
    }
    if problem.p > 0 {
        let cx = problem.ceq.matvec(x);
        for j in 0..problem.p {
            let tp = cx[j] - problem.deq[j];
            let vp = tp.min(eta[j]);
            let vm = (-tp).min(zeta[j]);
            num2 += vp * vp + vm * vm;
        }
    }

    let mut denom = problem.hess.inf_norm().max(linalg::norm_inf(&problem.c));
    denom = denom.max(problem.a.inf_norm());
    if problem.p > 0 {
        denom = denom.max(problem.ceq.inf_norm());
    }
    if denom == 0.0 {
        denom = 1.0;
    }
    num2.sqrt() / denom
}

/// Penalty-parameter rule constants and the current value of `phi`.
///
/// `gamma0` ties `phi` to the relaxation magnitude; `gamma1..gamma3` gate
/// the dual-tracking branch on the KKT residual norms. All four are set
/// once at the start of a run from the initial iterate.
#[derive(Clone, Debug)]
pub struct PenaltyConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub phi: f64,
}

impl PenaltyConfig {
    pub fn new(sigma1: f64, sigma2: f64, phi0: f64) -> Self {
        assert!(sigma1 > 0.0 && sigma2 > 1.0 && phi0 > 0.0);
        PenaltyConfig {
            sigma1,
            sigma2,
            gamma0: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
            gamma3: 1.0,
            phi: phi0,
        }
    }
}

/// Grouped KKT residuals of the augmented pair at penalty `phi`:
///
/// * `g1` — complementarity products `(S pi, Z xi, T+ eta, T- zeta)`,
/// * `g2` — dual feasibility `(Hx + c - A'pi - C'(eta - zeta),
///   pi + xi - phi 1, eta + zeta - phi 1)`,
/// * `g3` — the scalar `(Hx + c - A'pi - C'(eta - zeta))' x`.
#[derive(Clone, Debug)]
pub struct KktResiduals {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub g3: f64,
}

impl KktResiduals {
    pub fn g1_norm(&self) -> f64 {
        linalg::norm2(&self.g1)
    }

    pub fn g2_norm(&self) -> f64 {
        linalg::norm2(&self.g2)
    }

    pub fn g3_abs(&self) -> f64 {
        self.g3.abs()
    }
}

pub fn kkt_residuals(problem: &CqpProblem, state: &AugmentedState, phi: f64) -> KktResiduals {
    let (m, p) = (problem.m, problem.p);
    let mut g1 = Vec::with_capacity(2 * m + 2 * p);
    for i in 0..m {
        g1.push(state.s[i] * state.pi[i]);
    }
    for i in 0..m {
        g1.push(state.z[i] * state.xi[i]);
    }
    for j in 0..p {
        g1.push(state.t_plus[j] * state.eta[j]);
    }
    for j in 0..p {
        g1.push(state.t_minus[j] * state.zeta[j]);
    }

    let stat = dual_residual(problem, &state.x, &state.pi, &state.eta, &state.zeta);
    let g3 = linalg::dot(&stat, &state.x);
    let mut g2 = stat;
    for i in 0..m {
        g2.push(state.pi[i] + state.xi[i] - phi);
    }
    for j in 0..p {
        g2.push(state.eta[j] + state.zeta[j] - phi);
    }

    KktResiduals { g1, g2, g3 }
}

/// Serialization helpers for the problem JSON format:
/// `{"n":..,"m":..,"p":..,"H":{"diag":[..]}|{"dense":[[..]]},"c":[..],
///   "A":[[..]],"b":[..],"C":[[..]],"d":[..]}` with `C`/`d` omitted when
/// `p = 0`.
#[derive(Serialize, Deserialize, Debug, Clone)]
#[serde(rename_all = "lowercase")]
pub enum HessianJson {
    Diag(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ProblemJson {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "H")]
    pub hess: HessianJson,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub cmat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
}

impl From<&CqpProblem> for ProblemJson {
    fn from(pr: &CqpProblem) -> Self {
        let rows = |m: &Mat| {
            (0..m.nrows())
                .map(|i| m.row(i).to_vec())
                .collect::<Vec<_>>()
        };
        ProblemJson {
            n: pr.n,
            m: pr.m,
            p: pr.p,
            hess: match &pr.hess {
                Hessian::Diag(d) => HessianJson::Diag(d.clone()),
                Hessian::Dense(h) => HessianJson::Dense(rows(h)),
            },
            c: pr.c.clone(),
            a: rows(&pr.a),
            b: pr.b.clone(),
            cmat: if pr.p > 0 { Some(rows(&pr.ceq)) } else { None },
            d: if pr.p > 0 { Some(pr.deq.clone()) } else { None },
        }
    }
}

impl TryFrom<ProblemJson> for CqpProblem {
    type Error = Error;

    fn try_from(j: ProblemJson) -> Result<Self, Error> {
        let to_mat = |rows: &[Vec<f64>], ncols: usize| -> Result<Mat, Error> {
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::DimensionMismatch(
                    "ragged matrix rows in JSON".into(),
                ));
            }
            Ok(Mat::from_rows(rows))
        };
        let a = if j.m > 0 {
            to_mat(&j.a, j.n)?
        } else {
            Mat::zeros(0, j.n)
        };
        let (ceq, deq) = if j.p > 0 {
            let cm = j.cmat.ok_or_else(|| {
                Error::DimensionMismatch("p > 0 but equality matrix C is absent".into())
            })?;
            let dv =
                j.d.ok_or_else(|| Error::DimensionMismatch("p > 0 but d is absent".into()))?;
            (to_mat(&cm, j.n)?, dv)
        } else {
            (Mat::zeros(0, j.n), vec![])
        };
        let hess = match j.hess {
            HessianJson::Diag(d) => Hessian::Diag(d),
            HessianJson::Dense(rows) => Hessian::Dense(to_mat(&rows, j.n)?),
        };
        let problem = CqpProblem {
            n: j.n,
            m: j.m,
            p: j.p,
            hess,
            c: j.c,
            a,
            b: j.b,
            ceq,
            deq,
        };
        let (problem, _warnings) = problem.validate()?;
        Ok(problem)
    }
}
