//! Newton-KKT systems of the augmented problem, condensed to an n x n core.
//!
//! A Newton step for the augmented problem solves, in the unknowns
//! `(dx, dz, dy, dpi, dxi, deta, dzeta)` with slack updates tied to the
//! primal ones (`ds = A dx + dz`, `dt+ = C dx + dy`, `dt- = -C dx + dy`):
//!
//! ```text
//! (N1)  H dx - A' dpi - C'(deta - dzeta) = -r_d,   r_d = Hx + c - A'pi - C'(eta - zeta)
//! (N2)  dpi + dxi   = r_pi,                        r_pi  = phi 1 - pi - xi
//! (N3)  deta + dzeta = r_eta,                      r_eta = phi 1 - eta - zeta
//! (C1)  S dpi   + Pi   ds  = q_s
//! (C2)  Z dxi   + Xi   dz  = q_z
//! (C3)  T+ deta + Eta  dt+ = q_+
//! (C4)  T- dzeta + Zeta dt- = q_-
//! ```
//!
//! where the `q` vectors carry the (affine or corrected) complementarity
//! targets. All rows of (C1)-(C4) and (N2)-(N3) are diagonal, so every
//! variable except `dx` can be eliminated in closed form. With the ratios
//! `Dp = Pi/S`, `Dx = Xi/Z`, `De = Eta/T+`, `Dz = Zeta/T-` and
//!
//! ```text
//! E = (Dp + Dx)^-1              F = (De + Dz)^-1        G = De - Dz
//! w_z = r_pi - q_s/s - q_z/z    w_y = r_eta - q_+/t+ - q_-/t-
//! u_pi = q_s/s + Dp E w_z       u_om = q_+/t+ - q_-/t- + G F w_y
//! ```
//!
//! solving (N2)+(C1)+(C2) rowwise gives
//!
//! ```text
//! dz  = -E (Dp a_i'dx + w_z)          dpi = -(Dp Dx E) a_i'dx + u_pi
//! ```
//!
//! and solving (N3)+(C3)+(C4) gives
//!
//! ```text
//! dy  = -F (G c_j'dx + w_y)           dom = deta - dzeta = -(4 De Dz F) c_j'dx + u_om.
//! ```
//!
//! Substituting into (N1) leaves the condensed symmetric system
//!
//! ```text
//! [ H + A_Q' diag(Dp Dx E)_Q A_Q + C' diag(4 De Dz F) C ] dx
//!     = -r_d + A_Q' (u_pi)_Q + C' u_om.
//! ```
//!
//! Only rows in the working set `Q` contribute inequality terms to the
//! matrix and right-hand side; the relaxation families (`z >= 0` and the two
//! equality-derived families) are always included, which is what the `C'`
//! block and the `E`-combined diagonals realize. Rows outside `Q` do not
//! follow the coupled formulas: their dual moves by the decoupled diagonal
//! update `dpi = q_s / s` (the complementarity row with the `Pi ds` coupling
//! dropped), which re-centers the dropped duals toward `sigma mu / s` and
//! keeps the stationarity error of reduced steps at the complementarity
//! scale. Rows (N2), (N3), (C2)-(C4) hold exactly for every row; (C1) and
//! (N1) hold exactly on the working set, and everywhere when `Q` is the full
//! row set. Per-iteration cost is therefore governed by `n` and `|Q| + p`,
//! not by `n + m + p`.

use crate::error::Error;
use crate::linalg::{self, Cholesky, Mat};
use crate::problem::{AugmentedState, CqpProblem};

/// How many times the Cholesky fallback doubles the diagonal shift before
/// giving up.
const PERTURB_RETRIES: usize = 5;

/// Upper bound on a dual/slack ratio entering the condensed matrix.
const RATIO_CAP: f64 = 1e30;

/// Factored condensed system plus the diagonals needed for back-substitution.
pub struct KktWorkspace {
    /// Working set of inequality rows contributing to the condensed matrix.
    pub q: Vec<usize>,
    /// Diagonal shift that was needed to factor (0.0 in the clean case).
    pub perturbation: f64,
    d_pi: Vec<f64>,
    e_ineq: Vec<f64>,
    /// Combined inequality diagonal `Dp Dx E = Dp Dx / (Dp + Dx)`.
    w_ineq: Vec<f64>,
    f_eq: Vec<f64>,
    g_eq: Vec<f64>,
    mat: Mat,
    chol: Cholesky,
}

impl KktWorkspace {
    /// Solve with one pass of iterative refinement; the condensed matrix can
    /// be badly conditioned near convergence and the extra pass buys back
    /// several digits of the direction.
    fn solve_refined(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.chol.solve(rhs);
        let mut resid = rhs.to_vec();
        for i in 0..self.mat.nrows() {
            resid[i] -= linalg::dot(self.mat.row(i), &x);
        }
        let corr = self.chol.solve(&resid);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        x
    }
}

/// Forms and factors the condensed matrix
/// `M = H + A_Q' W_Q A_Q + C' W_eq C`.
///
/// `M` is positive definite whenever `H` is PSD and the slack/dual ratios
/// are positive, up to roundoff; a failed Cholesky retries with a growing
/// diagonal shift `beta I`, `beta` starting at `1e-10 trace(M)/n`.
pub fn assemble(
    problem: &CqpProblem,
    state: &AugmentedState,
    q: &[usize],
) -> Result<KktWorkspace, Error> {
    let n = problem.n;
    let (m, p) = (problem.m, problem.p);
    debug_assert!(q.iter().all(|&i| i < m));

    // dual/slack ratios, capped so that iterates driven far past
    // convergence cannot overflow the condensed matrix
    let ratio = |dual: f64, slack: f64| (dual / slack).min(RATIO_CAP);
    let mut d_pi = vec![0.0; m];
    let mut e_ineq = vec![0.0; m];
    let mut w_ineq = vec![0.0; m];
    for i in 0..m {
        let dp = ratio(state.pi[i], state.s[i]);
        let dx = ratio(state.xi[i], state.z[i]);
        d_pi[i] = dp;
        e_ineq[i] = 1.0 / (dp + dx);
        w_ineq[i] = dp * dx / (dp + dx);
    }
    let mut f_eq = vec![0.0; p];
    let mut g_eq = vec![0.0; p];
    // combined equality diagonal 4 De Dz / (De + Dz), used only in the matrix
    let mut w_eq = vec![0.0; p];
    for j in 0..p {
        let de = ratio(state.eta[j], state.t_plus[j]);
        let dz = ratio(state.zeta[j], state.t_minus[j]);
        f_eq[j] = 1.0 / (de + dz);
        g_eq[j] = de - dz;
        w_eq[j] = 4.0 * de * dz / (de + dz);
    }

    let mut mat = problem.hess.to_dense();
    for &i in q {
        rank_one_update(&mut mat, problem.a.row(i), w_ineq[i]);
    }
    for j in 0..p {
        rank_one_update(&mut mat, problem.ceq.row(j), w_eq[j]);
    }
    // mirror the accumulated upper triangle
    for i in 0..n {
        for j in 0..i {
            let v = mat.get(j, i);
            mat.set(i, j, v);
        }
    }

    let trace: f64 = (0..n).map(|i| mat.get(i, i)).sum();
    let mut beta = 0.0;
    let mut shift = 1e-10 * trace.max(1.0) / n as f64;
    for _ in 0..=PERTURB_RETRIES {
        let mut shifted = mat.clone();
        if beta > 0.0 {
            for i in 0..n {
                let v = shifted.get(i, i) + beta;
                shifted.set(i, i, v);
            }
        }
        if let Some(chol) = linalg::cholesky(&shifted) {
            return Ok(KktWorkspace {
                q: q.to_vec(),
                perturbation: beta,
                d_pi,
                e_ineq,
                w_ineq,
                f_eq,
                g_eq,
                mat: shifted,
                chol,
            });
        }
        beta = shift;
        shift *= 2.0;
    }
    Err(Error::FactorizationFailure {
        retries: PERTURB_RETRIES,
    })
}

/// Accumulates `scale * r r'` into the upper triangle of `mat`.
fn rank_one_update(mat: &mut Mat, r: &[f64], scale: f64) {
    let n = r.len();
    for i in 0..n {
        let ri = scale * r[i];
        if ri != 0.0 {
            let row = mat.row_mut(i);
            for j in i..n {
                row[j] += ri * r[j];
            }
        }
    }
}

/// Right-hand side of one Newton solve: linear residuals plus the four
/// complementarity targets.
pub struct StepRhs {
    pub r_d: Vec<f64>,
    pub r_pi: Vec<f64>,
    pub r_eta: Vec<f64>,
    pub comp_s: Vec<f64>,
    pub comp_z: Vec<f64>,
    pub comp_tp: Vec<f64>,
    pub comp_tm: Vec<f64>,
}

impl StepRhs {
    /// Largest linear (non-complementarity) residual component.
    pub fn linear_residual_inf(&self) -> f64 {
        linalg::norm_inf(&self.r_d)
            .max(linalg::norm_inf(&self.r_pi))
            .max(linalg::norm_inf(&self.r_eta))
    }

    /// Affine-scaling (predictor) targets: pure Newton on the KKT system.
    pub fn affine(problem: &CqpProblem, state: &AugmentedState, phi: f64) -> Self {
        let (m, p) = (problem.m, problem.p);
        let mut rhs = StepRhs {
            r_d: dual_stationarity_residual(problem, state),
            r_pi: (0..m).map(|i| phi - state.pi[i] - state.xi[i]).collect(),
            r_eta: (0..p).map(|j| phi - state.eta[j] - state.zeta[j]).collect(),
            comp_s: vec![0.0; m],
            comp_z: vec![0.0; m],
            comp_tp: vec![0.0; p],
            comp_tm: vec![0.0; p],
        };
        for i in 0..m {
            rhs.comp_s[i] = -state.s[i] * state.pi[i];
            rhs.comp_z[i] = -state.z[i] * state.xi[i];
        }
        for j in 0..p {
            rhs.comp_tp[j] = -state.t_plus[j] * state.eta[j];
            rhs.comp_tm[j] = -state.t_minus[j] * state.zeta[j];
        }
        rhs
    }

    /// First-order centering targets: like [`StepRhs::affine`] but aiming at
    /// `sigma mu` instead of zero complementarity (on working-set rows and
    /// the relaxation families; off-set duals keep decaying). Fallback for
    /// steps where the second-order correction backfires.
    pub fn centered(
        problem: &CqpProblem,
        state: &AugmentedState,
        phi: f64,
        sigma: f64,
        mu: f64,
        in_q: &[bool],
    ) -> Self {
        let mut rhs = StepRhs::affine(problem, state, phi);
        let target = sigma * mu;
        for i in 0..problem.m {
            if in_q[i] {
                rhs.comp_s[i] += target;
            }
            rhs.comp_z[i] += target;
        }
        for v in rhs.comp_tp.iter_mut().chain(&mut rhs.comp_tm) {
            *v += target;
        }
        rhs
    }

    /// Corrector targets: recenters toward `sigma mu` and subtracts the
    /// second-order products of the affine direction. Per-row targets are
    /// clipped to `[sigma mu / 10, 4 sigma mu]`: the upper bound stops
    /// outlier products from ramming individual variables into their bounds
    /// and collapsing the step length, the lower bound stops complementarity
    /// from vanishing rows ahead of the linear residuals. Inequality rows
    /// outside the working set keep the plain affine target, so their duals
    /// decay instead of recentering (which would leak a dual-residual error
    /// of order `m sigma mu` per step).
    pub fn corrector(
        problem: &CqpProblem,
        state: &AugmentedState,
        phi: f64,
        affine: &Direction,
        sigma: f64,
        mu: f64,
        in_q: &[bool],
    ) -> Self {
        let mut rhs = StepRhs::affine(problem, state, phi);
        let center = sigma * mu;
        let clip = |second_order: f64| (center - second_order).clamp(0.1 * center, 4.0 * center);
        for i in 0..problem.m {
            if in_q[i] {
                rhs.comp_s[i] += clip(affine.ds[i] * affine.dpi[i]);
            }
            rhs.comp_z[i] += clip(affine.dz[i] * affine.dxi[i]);
        }
        for j in 0..problem.p {
            rhs.comp_tp[j] += clip(affine.dtp[j] * affine.deta[j]);
            rhs.comp_tm[j] += clip(affine.dtm[j] * affine.dzeta[j]);
        }
        rhs
    }

    /// All-zero right-hand side; building block for centrality corrections.
    pub fn zero(problem: &CqpProblem) -> Self {
        StepRhs {
            r_d: vec![0.0; problem.n],
            r_pi: vec![0.0; problem.m],
            r_eta: vec![0.0; problem.p],
            comp_s: vec![0.0; problem.m],
            comp_z: vec![0.0; problem.m],
            comp_tp: vec![0.0; problem.p],
            comp_tm: vec![0.0; problem.p],
        }
    }
}

/// `-(Hx + c - A'pi - C'(eta - zeta))`
fn dual_stationarity_residual(problem: &CqpProblem, state: &AugmentedState) -> Vec<f64> {
    let mut r = problem.c.clone();
    problem.hess.matvec_acc(&state.x, &mut r);
    problem.a.tr_matvec_acc(&state.pi, -1.0, &mut r);
    let omega: Vec<f64> = state
        .eta
        .iter()
        .zip(&state.zeta)
        .map(|(e, z)| e - z)
        .collect();
    problem.ceq.tr_matvec_acc(&omega, -1.0, &mut r);
    // note: StepRhs stores r_d itself, the condensed rhs negates it
    r
}

/// Full search direction, including the eliminated blocks recovered by
/// back-substitution.
#[derive(Clone, Debug)]
pub struct Direction {
    pub dx: Vec<f64>,
    pub dz: Vec<f64>,
    pub dy: Vec<f64>,
    pub ds: Vec<f64>,
    pub dtp: Vec<f64>,
    pub dtm: Vec<f64>,
    pub dpi: Vec<f64>,
    pub dxi: Vec<f64>,
    pub deta: Vec<f64>,
    pub dzeta: Vec<f64>,
}

/// Solves the condensed system and recovers every eliminated block. The
/// returned direction satisfies the diagonal rows (N2), (N3), (C1)-(C4)
/// exactly and the stationarity row (N1) restricted to the working set.
pub fn solve_step(
    ws: &KktWorkspace,
    problem: &CqpProblem,
    state: &AugmentedState,
    rhs: &StepRhs,
) -> Direction {
    let n = problem.n;
    let (m, p) = (problem.m, problem.p);

    // per-row intermediates
    let mut w_z = vec![0.0; m];
    let mut u_pi = vec![0.0; m];
    for i in 0..m {
        let qs = rhs.comp_s[i] / state.s[i];
        let qz = rhs.comp_z[i] / state.z[i];
        w_z[i] = rhs.r_pi[i] - qs - qz;
        u_pi[i] = qs + ws.d_pi[i] * ws.e_ineq[i] * w_z[i];
    }
    let mut w_y = vec![0.0; p];
    let mut u_om = vec![0.0; p];
    for j in 0..p {
        let qp = rhs.comp_tp[j] / state.t_plus[j];
        let qm = rhs.comp_tm[j] / state.t_minus[j];
        w_y[j] = rhs.r_eta[j] - qp - qm;
        u_om[j] = qp - qm + ws.g_eq[j] * ws.f_eq[j] * w_y[j];
    }

    // condensed right-hand side: -r_d + A_Q' u_pi|_Q + C' u_om
    let mut rx = vec![0.0; n];
    for i in 0..n {
        rx[i] = -rhs.r_d[i];
    }
    for &i in &ws.q {
        linalg::axpy(u_pi[i], problem.a.row(i), &mut rx);
    }
    problem.ceq.tr_matvec_acc(&u_om, 1.0, &mut rx);

    let dx = ws.solve_refined(&rx);

    // back-substitution, applied to every row
    let a_dx = problem.a.matvec(&dx);
    let c_dx = problem.ceq.matvec(&dx);
    let mut dir = Direction {
        dx,
        dz: vec![0.0; m],
        dy: vec![0.0; p],
        ds: vec![0.0; m],
        dtp: vec![0.0; p],
        dtm: vec![0.0; p],
        dpi: vec![0.0; m],
        dxi: vec![0.0; m],
        deta: vec![0.0; p],
        dzeta: vec![0.0; p],
    };
    let mut in_q = vec![false; m];
    for &i in &ws.q {
        in_q[i] = true;
    }
    for i in 0..m {
        if in_q[i] {
            dir.dz[i] = -ws.e_ineq[i] * (ws.d_pi[i] * a_dx[i] + w_z[i]);
            dir.dpi[i] = -ws.w_ineq[i] * a_dx[i] + u_pi[i];
        } else {
            // rows outside the working set are not represented in the
            // matrix; their dual takes the diagonal update for its target
            // (with the affine target -s pi this is the plain decay
            // dpi = -pi), keeping the solve map linear in the rhs
            dir.dpi[i] = rhs.comp_s[i] / state.s[i];
            dir.dz[i] = (rhs.comp_z[i] - state.z[i] * (rhs.r_pi[i] - dir.dpi[i])) / state.xi[i];
        }
        dir.dxi[i] = rhs.r_pi[i] - dir.dpi[i];
        dir.ds[i] = a_dx[i] + dir.dz[i];
    }
    for j in 0..p {
        dir.dy[j] = -ws.f_eq[j] * (ws.g_eq[j] * c_dx[j] + w_y[j]);
        dir.dtp[j] = c_dx[j] + dir.dy[j];
        dir.dtm[j] = -c_dx[j] + dir.dy[j];
        dir.deta[j] = (rhs.comp_tp[j] - state.eta[j] * dir.dtp[j]) / state.t_plus[j];
        dir.dzeta[j] = rhs.r_eta[j] - dir.deta[j];
    }
    dir
}
