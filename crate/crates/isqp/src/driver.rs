//! The master loop: optimality and infeasibility stopping tests, the
//! penalty-parameter update, and repeated base iterations on the augmented
//! problem, plus certificate and relaxation extraction for infeasible runs.

use std::time::Instant;

use serde::Serialize;

use crate::base_mpc::{self, BaseIterationVars};
use crate::error::Error;
use crate::linalg;
use crate::penalty;
use crate::problem::{
    augment, kkt_residuals, normalize_rows, optimality_error, penalty_objective, AugmentedState,
    CqpProblem, PenaltyConfig, ScalingRecord,
};

/// Solver knobs. Defaults match the tolerances used throughout the test
/// suites: `tol = 1e-8`, `tol_infeas = 1e-6`, 300 iterations, `phi0 = 1`.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub tol_infeas: f64,
    pub max_iter: usize,
    pub phi0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub constraint_reduction: bool,
    pub normalize: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            tol_infeas: 1e-6,
            max_iter: 300,
            phi0: 1.0,
            sigma1: 1.0,
            sigma2: 10.0,
            constraint_reduction: true,
            normalize: true,
        }
    }
}

impl SolveOptions {
    fn check(&self) -> Result<(), Error> {
        if !(self.tol > 0.0 && self.tol_infeas > 0.0 && self.phi0 > 0.0) {
            return Err(Error::InvalidInput(
                "tol, tol_infeas, phi0 must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.sigma1 > 0.0) || !(self.sigma2 > 1.0) {
            return Err(Error::InvalidInput("need sigma1 > 0 and sigma2 > 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Witness that `Ax >= b, Cx = d` has no solution: `pi_hat >= 0` with
/// `A'pi_hat + C'omega_hat ~ 0` and `b'pi_hat + d'omega_hat > 0`.
#[derive(Clone, Debug, Serialize)]
pub struct FarkasCertificate {
    pub pi_hat: Vec<f64>,
    pub omega_hat: Vec<f64>,
    /// `b'pi_hat + d'omega_hat`
    pub gain: f64,
    /// `||[A'pi_hat + C'omega_hat; min(pi_hat, 0)]||_2 / max(||A||, ||C||)`
    pub residual: f64,
}

impl FarkasCertificate {
    /// The certificate counts only when the gain clears machine-precision
    /// noise and the residual is within the infeasibility tolerance.
    pub fn valid(&self, tol_infeas: f64) -> bool {
        self.gain > f64::EPSILON.sqrt() && self.residual <= tol_infeas
    }
}

/// The l1-least constraint relaxation read off the stopping iterate of an
/// infeasible run: `Ax >= b - z` and `-dminus <= Cx - d <= dplus`.
#[derive(Clone, Debug, Serialize)]
pub struct RelaxationResult {
    pub b_prime: Vec<f64>,
    pub d_plus_shift: Vec<f64>,
    pub d_minus_shift: Vec<f64>,
    pub x_feasible: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub phi: f64,
    pub mu: f64,
    pub err: f64,
    pub q_size: usize,
    pub obj: f64,
    pub penalty_obj: f64,
    pub z_inf_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Inequality duals for the original (unscaled) problem.
    pub pi: Vec<f64>,
    /// Signed equality duals `eta - zeta` for the original problem.
    pub omega: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub phi_final: f64,
    pub phi_increases: usize,
    /// Final value of the normalized optimality error (on the scaled data
    /// when normalization is on, matching the stopping test).
    pub err: f64,
    /// Final `||[z; y]||_inf`.
    pub relaxation_inf: f64,
    /// Penalty-update entries at which the descent inequality failed
    /// (expected 0; nonzero values flag numerical trouble).
    pub monotone_violations: usize,
    pub time_ms: f64,
    pub certificate: Option<FarkasCertificate>,
    pub relaxation: Option<RelaxationResult>,
    pub trace: Vec<TraceRow>,
}

/// Farkas candidate at the current iterate: stack `[pi_Q; eta - zeta] / phi`,
/// project orthogonally onto the null space of `[A_Q', C']`, clamp the
/// inequality part nonnegative, and score the result. Rows outside `Q` get a
/// zero multiplier. A zero-dimensional null space yields the zero candidate,
/// which is never valid.
pub fn certificate_candidate(
    problem: &CqpProblem,
    state: &AugmentedState,
    phi: f64,
    q: &[usize],
) -> FarkasCertificate {
    let (m, p) = (problem.m, problem.p);
    let stacked = problem.a.select_rows(q).vstack(&problem.ceq);
    let qr = linalg::qr_factor(&stacked, 1e-10);

    let mut v: Vec<f64> = q.iter().map(|&i| state.pi[i] / phi).collect();
    v.extend((0..p).map(|j| (state.eta[j] - state.zeta[j]) / phi));
    let in_range = qr.project_onto_col_space(&v);

    let mut pi_hat = vec![0.0; m];
    for (k, &i) in q.iter().enumerate() {
        pi_hat[i] = (v[k] - in_range[k]).max(0.0);
    }
    let omega_hat: Vec<f64> = (0..p)
        .map(|j| v[q.len() + j] - in_range[q.len() + j])
        .collect();

    score_certificate(problem, pi_hat, omega_hat)
}

fn score_certificate(
    problem: &CqpProblem,
    pi_hat: Vec<f64>,
    omega_hat: Vec<f64>,
) -> FarkasCertificate {
    let gain = linalg::dot(&problem.b, &pi_hat) + linalg::dot(&problem.deq, &omega_hat);
    let mut r = vec![0.0; problem.n];
    problem.a.tr_matvec_acc(&pi_hat, 1.0, &mut r);
    problem.ceq.tr_matvec_acc(&omega_hat, 1.0, &mut r);
    let mut num2 = linalg::dot(&r, &r);
    for &v in &pi_hat {
        let neg = v.min(0.0);
        num2 += neg * neg;
    }
    let mut denom = problem.a.inf_norm().max(problem.ceq.inf_norm());
    if denom == 0.0 {
        denom = 1.0;
    }
    FarkasCertificate {
        pi_hat,
        omega_hat,
        gain,
        residual: num2.sqrt() / denom,
    }
}

/// Reads the least relaxation off the stopping iterate: `b' = b - z`,
/// and the equality band is widened on whichever side `Cx - d` violates.
/// Verifies that the iterate is feasible for the relaxed data.
pub fn extract_relaxation(
    problem: &CqpProblem,
    state: &AugmentedState,
) -> Result<RelaxationResult, Error> {
    let (m, p) = (problem.m, problem.p);
    let b_prime: Vec<f64> = (0..m).map(|i| problem.b[i] - state.z[i]).collect();
    let cx = problem.ceq.matvec(&state.x);
    let mut d_plus_shift = vec![0.0; p];
    let mut d_minus_shift = vec![0.0; p];
    for j in 0..p {
        let e = cx[j] - problem.deq[j];
        if e > 0.0 {
            d_plus_shift[j] = state.y[j];
        } else if e < 0.0 {
            d_minus_shift[j] = state.y[j];
        }
    }

    let ax = problem.a.matvec(&state.x);
    for i in 0..m {
        let slack = ax[i] - b_prime[i];
        if slack < -1e-9 * (1.0 + b_prime[i].abs()) {
            return Err(Error::RelaxationInconsistent(format!(
                "inequality {i} violated by {slack:.3e} after relaxation"
            )));
        }
    }
    for j in 0..p {
        let e = cx[j] - problem.deq[j];
        let tol = 1e-9 * (1.0 + problem.deq[j].abs());
        if e > d_plus_shift[j] + tol || e < -d_minus_shift[j] - tol {
            return Err(Error::RelaxationInconsistent(format!(
                "equality {j} outside the relaxed band ({e:.3e})"
            )));
        }
    }
    Ok(RelaxationResult {
        b_prime,
        d_plus_shift,
        d_minus_shift,
        x_feasible: state.x.clone(),
    })
}

/// Warm restart of the relaxation block after a penalty increase.
///
/// The relaxation-row dual equations `pi + xi = phi 1` and
/// `eta + zeta = phi 1` are re-solved exactly, keeping the original-problem
/// dual estimates `pi` and `omega = eta - zeta` (capped just under `phi`);
/// without this, every Newton step after a large penalty jump is throttled
/// by the relaxation blocks that have to ferry their duals up to the new
/// `phi`. The relaxations shrink in proportion so complementarity products
/// are preserved rather than inflated, floored so that nine tenths of each
/// slack survives; since `z` and `y` only shrink, the penalty objective only
/// improves.
fn rebalance_relaxation_duals(state: &mut AugmentedState, phi: f64) {
    for i in 0..state.pi.len() {
        let xi_old = state.xi[i];
        state.pi[i] = state.pi[i].min(0.99 * phi);
        state.xi[i] = phi - state.pi[i];
        let ratio = xi_old / state.xi[i];
        if ratio < 1.0 {
            let z_old = state.z[i];
            let floor = z_old - 0.9 * state.s[i];
            let z_new = (z_old * ratio).max(floor);
            state.z[i] = z_new;
            state.s[i] += z_new - z_old;
        }
    }
    for j in 0..state.eta.len() {
        let sum_old = state.eta[j] + state.zeta[j];
        let omega = (state.eta[j] - state.zeta[j]).clamp(-0.98 * phi, 0.98 * phi);
        state.eta[j] = 0.5 * (phi + omega);
        state.zeta[j] = 0.5 * (phi - omega);
        let ratio = sum_old / phi;
        if ratio < 1.0 {
            let y_old = state.y[j];
            let floor = y_old - 0.9 * state.t_plus[j].min(state.t_minus[j]);
            let y_new = (y_old * ratio).max(floor);
            state.y[j] = y_new;
            state.t_plus[j] += y_new - y_old;
            state.t_minus[j] += y_new - y_old;
        }
    }
    debug_assert!(state.strictly_interior());
}

/// Rebuilds the iterate in original (unscaled) coordinates. The duals
/// rescale with the rows; the relaxations rescale inversely.
fn unscale_state(
    state: &AugmentedState,
    scaling: &ScalingRecord,
    original: &CqpProblem,
) -> AugmentedState {
    let mut out = state.clone();
    for i in 0..original.m {
        let s = scaling.row_scale_ineq[i];
        out.pi[i] *= s;
        out.xi[i] *= s;
        out.z[i] /= s;
    }
    for j in 0..original.p {
        let s = scaling.row_scale_eq[j];
        out.eta[j] *= s;
        out.zeta[j] *= s;
        out.y[j] /= s;
    }
    out.refresh_slacks(original);
    out
}

/// Solves the problem from `x0` (feasible or not). The loop per iteration:
/// optimality test, infeasibility test, penalty update, one base iteration;
/// base-iteration internals are reset whenever the penalty increases. The
/// penalty update is skipped while the objective sits above its value at the
/// previous update entry (which only happens after an unaccepted step), so
/// the sequence seen by the update decreases monotonically.
pub fn solve(
    problem: &CqpProblem,
    x0: &[f64],
    options: &SolveOptions,
) -> Result<SolveReport, Error> {
    options.check()?;
    let (checked, _warnings) = problem.clone().validate()?;
    if x0.len() != checked.n {
        return Err(Error::DimensionMismatch(format!(
            "x0 has length {}, expected n = {}",
            x0.len(),
            checked.n
        )));
    }
    let start = Instant::now();
    let (work, scaling) = if options.normalize {
        normalize_rows(&checked)
    } else {
        let rec = ScalingRecord::identity(checked.m, checked.p);
        (checked.clone(), rec)
    };
    let (m, _n) = (work.m, work.n);

    let mut state = augment(&work, x0);
    let mut phi = options.phi0;
    let mut cfg = PenaltyConfig::new(options.sigma1, options.sigma2, phi);
    let res0 = kkt_residuals(&work, &state, phi);
    let (g0, g1, g2, g3) = penalty::init_thresholds(&state, &res0, phi);
    cfg.gamma0 = g0;
    cfg.gamma1 = g1;
    cfg.gamma2 = g2;
    cfg.gamma3 = g3;

    let mut vars = BaseIterationVars::new(work.n);
    vars.reduction = options.constraint_reduction;
    vars.last_q = (0..m).collect();

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut phi_increases = 0usize;
    let mut monotone_violations = 0usize;
    // value and relaxation sum at the previous penalty-update entry
    let mut prev_entry: Option<(f64, f64)> = None;
    let mut anchor = penalty_objective(&work, &state, phi);
    let mut must_recover = false;

    let mut status = SolveStatus::IterationLimit;
    let mut certificate: Option<FarkasCertificate> = None;
    let mut iterations = options.max_iter;

    for k in 0..options.max_iter {
        let mu = base_mpc::duality_measure(&state);
        let err = optimality_error(&work, &state.x, &state.pi, &state.eta, &state.zeta);
        let obj = work.objective(&state.x);
        let pobj = penalty_objective(&work, &state, phi);
        trace.push(TraceRow {
            iter: k,
            phi,
            mu,
            err,
            q_size: if k == 0 { 0 } else { vars.last_q.len() },
            obj,
            penalty_obj: pobj,
            z_inf_norm: state.relaxation_inf_norm(),
        });

        if err <= options.tol {
            status = SolveStatus::Optimal;
            iterations = k;
            break;
        }

        let cert = certificate_candidate(&work, &state, phi, &vars.last_q);
        if cert.valid(options.tol_infeas) {
            status = SolveStatus::Infeasible;
            certificate = Some(cert);
            iterations = k;
            break;
        }

        if !must_recover {
            // penalty-update entry; the descent inequality is checked here
            let relax_sum: f64 = state.z.iter().sum::<f64>() + state.y.iter().sum::<f64>();
            if let Some((f_prev, relax_prev)) = prev_entry {
                let lhs = obj + phi * relax_sum;
                let rhs = f_prev + phi * relax_prev;
                if lhs > rhs + 1e-8 * (1.0 + rhs.abs()) {
                    monotone_violations += 1;
                }
            }
            prev_entry = Some((obj, relax_sum));

            let res = kkt_residuals(&work, &state, phi);
            cfg.phi = phi;
            let phi_new = penalty::update(&cfg, &state, &res);
            if phi_new > phi {
                phi = phi_new;
                vars.reset();
                rebalance_relaxation_duals(&mut state, phi);
                phi_increases += 1;
            }
            anchor = penalty_objective(&work, &state, phi);
        }

        match base_mpc::step(&work, &state, phi, &mut vars) {
            Ok((next, accepted)) => {
                state = next;
                let pobj_now = penalty_objective(&work, &state, phi);
                must_recover = !accepted && pobj_now > anchor + 1e-10 * (1.0 + anchor.abs());
                if accepted {
                    must_recover = pobj_now > anchor + 1e-10 * (1.0 + anchor.abs());
                }
            }
            Err(source) => {
                return Err(Error::SolveFailed {
                    iteration: k,
                    err,
                    phi,
                    source: Box::new(source),
                });
            }
        }
    }

    let err_final = optimality_error(&work, &state.x, &state.pi, &state.eta, &state.zeta);
    let unscaled = unscale_state(&state, &scaling, &checked);
    let relaxation = if status == SolveStatus::Infeasible {
        Some(extract_relaxation(&checked, &unscaled)?)
    } else {
        None
    };
    // report the certificate against the original data: the stationarity
    // vector A'pi + C'omega is invariant under row scaling of the duals
    let certificate = certificate.map(|c| {
        let mut pi_hat = c.pi_hat;
        let mut omega_hat = c.omega_hat;
        for i in 0..checked.m {
            pi_hat[i] *= scaling.row_scale_ineq[i];
        }
        for j in 0..checked.p {
            omega_hat[j] *= scaling.row_scale_eq[j];
        }
        score_certificate(&checked, pi_hat, omega_hat)
    });

    let omega: Vec<f64> = unscaled
        .eta
        .iter()
        .zip(&unscaled.zeta)
        .map(|(e, z)| e - z)
        .collect();
    Ok(SolveReport {
        status,
        objective: checked.objective(&state.x),
        x: state.x.clone(),
        pi: unscaled.pi.clone(),
        omega,
        iterations,
        phi_final: phi,
        phi_increases,
        err: err_final,
        relaxation_inf: state.relaxation_inf_norm(),
        monotone_violations,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
        certificate,
        relaxation,
        trace,
    })
}
