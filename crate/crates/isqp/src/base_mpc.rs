//! Feasible-start predictor-corrector base iteration on the augmented
//! problem, with slack-based constraint reduction.
//!
//! Contracts the surrounding master loop relies on:
//!
//! * strict feasibility is preserved by every step,
//! * whenever a step is reported as accepted, the penalty objective did not
//!   increase (enforced by step-length backtracking),
//! * dual iterates are clamped nonnegative before they are handed back.

use crate::error::Error;
use crate::kkt::{self, Direction, StepRhs};
use crate::problem::{penalty_objective, AugmentedState, CqpProblem};

/// Backtracking budget of the monotone safeguard.
const MAX_HALVINGS: usize = 20;

/// Below this duality measure a step is a no-op.
const MU_FLOOR: f64 = 1e-16;

/// Internal base-iteration variables. Reset whenever the penalty parameter
/// changes, since a new objective is then being minimized.
#[derive(Clone, Debug)]
pub struct BaseIterationVars {
    /// Initial slack threshold for constraint selection.
    pub delta_bar: f64,
    /// Current slack threshold.
    pub delta: f64,
    /// Minimum working-set size (before capping at m).
    pub qmin: usize,
    /// Steps taken since the last penalty change.
    pub iters_since_phi_change: usize,
    /// Constraint reduction toggle; `false` selects every row.
    pub reduction: bool,
    /// Working set used by the most recent step.
    pub last_q: Vec<usize>,
    /// Duality measure observed by the most recent step; drives both the
    /// slack threshold and the working-set size.
    pub last_mu: Option<f64>,
}

impl BaseIterationVars {
    pub fn new(n: usize) -> Self {
        BaseIterationVars {
            delta_bar: 1.0,
            delta: 1.0,
            qmin: 3 * n,
            iters_since_phi_change: 0,
            reduction: true,
            last_q: Vec::new(),
            last_mu: None,
        }
    }

    /// Back to initial values; called on every penalty increase.
    pub fn reset(&mut self) {
        self.delta = self.delta_bar;
        self.iters_since_phi_change = 0;
        self.last_mu = None;
    }
}

/// Average complementarity over all four slack/dual families:
/// `(s'pi + z'xi + t+'eta + t-'zeta) / (2m + 2p)`.
pub fn duality_measure(state: &AugmentedState) -> f64 {
    let m = state.s.len();
    let p = state.t_plus.len();
    if m + p == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..m {
        acc += state.s[i] * state.pi[i] + state.z[i] * state.xi[i];
    }
    for j in 0..p {
        acc += state.t_plus[j] * state.eta[j] + state.t_minus[j] * state.zeta[j];
    }
    acc / (2 * m + 2 * p) as f64
}

/// Picks the working set: every row with slack at or below the threshold,
/// padded with the smallest remaining slacks up to
/// `max(n + 1, qmin, m * min(1, mu))` (and capped at m). The threshold stays
/// at its initial value for the first five steps after a penalty change,
/// then tracks the duality measure. The `m * mu` padding makes the set start
/// out large and shrink as the iterate centers; a set sized `3n` from the
/// start collapses the step length mid-run, when the Newton direction still
/// reconfigures `x` globally and crashes into unrepresented rows. The
/// relaxation families are always part of the Newton system and are not
/// subject to selection.
pub fn select_constraints(state: &AugmentedState, vars: &mut BaseIterationVars) -> Vec<usize> {
    let m = state.s.len();
    let n = state.x.len();
    if !vars.reduction {
        return (0..m).collect();
    }
    let mu = vars.last_mu.unwrap_or(1.0);
    if vars.iters_since_phi_change >= 5 {
        vars.delta = (vars.delta_bar * mu.min(1.0)).max(1e-12);
    }
    let scaled = (m as f64 * mu.min(1.0)).ceil() as usize;
    let target = (n + 1).max(vars.qmin).max(scaled).min(m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| state.s[i].partial_cmp(&state.s[j]).unwrap());
    let mut q: Vec<usize> = Vec::with_capacity(target);
    for (rank, &i) in order.iter().enumerate() {
        if rank < target || state.s[i] <= vars.delta {
            q.push(i);
        } else {
            break;
        }
    }
    q.sort_unstable();
    q
}

/// One predictor-corrector step at penalty `phi`. Returns the next strictly
/// interior state and whether the monotone safeguard accepted a step length
/// (when `false`, the full step was taken and the caller must not treat the
/// objective as non-increasing).
pub fn step(
    problem: &CqpProblem,
    state: &AugmentedState,
    phi: f64,
    vars: &mut BaseIterationVars,
) -> Result<(AugmentedState, bool), Error> {
    let mu = duality_measure(state);
    let aff_rhs = StepRhs::affine(problem, state, phi);
    if mu <= MU_FLOOR && aff_rhs.linear_residual_inf() <= 1e-10 * (1.0 + phi) {
        // already at a numerical fixed point; moving further only erodes
        // the slack/dual ratios
        vars.iters_since_phi_change += 1;
        return Ok((state.clone(), true));
    }
    vars.last_mu = Some(mu);
    let q = select_constraints(state, vars);
    vars.last_q = q.clone();

    let ws = kkt::assemble(problem, state, &q)?;

    // predictor
    let aff = kkt::solve_step(&ws, problem, state, &aff_rhs);
    let a_aff = max_step_length(state, &aff).min(1.0);
    let mu_aff = predicted_mu(state, &aff, a_aff);
    // Mehrotra centering, kept between two guards: a floor that stops
    // complementarity from diving quadratically while the linear residuals
    // still contract geometrically (the floor tapers off as the
    // residual-to-mu ratio falls), and a cap away from 1, since a pure
    // centering step makes no objective progress and starves the monotone
    // safeguard.
    let r_rel = aff_rhs.linear_residual_inf() / (1.0 + phi);
    let sigma_floor = (0.01 * r_rel / mu).min(0.5);
    let sigma = ((mu_aff / mu).max(0.0).min(1.0))
        .powi(3)
        .max(sigma_floor)
        .min(0.8);

    // corrector; when its second-order terms overshoot (typical right after
    // a large penalty jump) the safeguard below falls back to the centered
    // first-order direction
    let mut in_q = vec![false; problem.m];
    for &i in &q {
        in_q[i] = true;
    }
    let rhs = StepRhs::corrector(problem, state, phi, &aff, sigma, mu, &in_q);
    let mut dir = kkt::solve_step(&ws, problem, state, &rhs);
    let f_cur = penalty_objective(problem, state, phi);
    let ftb = (0.995f64).max(1.0 - mu).min(1.0 - 1e-10);

    // centrality corrections: when the step length is collapsing because a
    // few complementarity products sit far outside the target neighborhood,
    // re-target just those products with extra solves on the same
    // factorization, keeping the correction whenever it lengthens the step
    let mut a_best = max_step_length(state, &dir).min(1.0);
    for _ in 0..2 {
        if a_best >= 0.95 {
            break;
        }
        let a_try = (1.2 * a_best + 0.1).min(1.0);
        let center = sigma * mu;
        let (lo, hi) = (0.1 * center, 10.0 * center);
        let mut extra = StepRhs::zero(problem);
        let mut any = false;
        let mut retarget = |v: f64, dv: f64, w: f64, dw: f64, slot: &mut f64, on: bool| {
            if !on {
                return;
            }
            let prod = (v + a_try * dv) * (w + a_try * dw);
            if prod < lo {
                *slot = lo - prod;
                any = true;
            } else if prod > hi {
                *slot = hi - prod;
                any = true;
            }
        };
        for i in 0..problem.m {
            retarget(
                state.s[i],
                dir.ds[i],
                state.pi[i],
                dir.dpi[i],
                &mut extra.comp_s[i],
                in_q[i],
            );
            retarget(
                state.z[i],
                dir.dz[i],
                state.xi[i],
                dir.dxi[i],
                &mut extra.comp_z[i],
                true,
            );
        }
        for j in 0..problem.p {
            retarget(
                state.t_plus[j],
                dir.dtp[j],
                state.eta[j],
                dir.deta[j],
                &mut extra.comp_tp[j],
                true,
            );
            retarget(
                state.t_minus[j],
                dir.dtm[j],
                state.zeta[j],
                dir.dzeta[j],
                &mut extra.comp_tm[j],
                true,
            );
        }
        if !any {
            break;
        }
        let correction = kkt::solve_step(&ws, problem, state, &extra);
        let candidate = add_directions(&dir, &correction);
        let a_new = max_step_length(state, &candidate).min(1.0);
        if a_new > a_best {
            dir = candidate;
            a_best = a_new;
        } else {
            break;
        }
    }

    // monotone safeguard: halve the step until the penalty objective stops
    // increasing (primal and dual move together so the Newton pairing and
    // the dual-residual contraction survive the backtracking)
    // Slack for the descent test: plain roundoff, plus an allowance at the
    // total-complementarity scale (capped relative to the objective) so
    // that endgame re-centering, which must lift a few near-zero products
    // and with them the penalty objective by O(total complementarity), is
    // not rejected. The allowance vanishes as mu does, so accepted steps
    // still satisfy eventual descent.
    let total_comp = (2 * problem.m + 2 * problem.p) as f64 * mu;
    let f_tol =
        (1e-13 * (1.0 + f_cur.abs())).max((0.1 * total_comp).min(1e-9 * (1.0 + f_cur.abs())));
    let try_direction = |d: &Direction| -> Result<Option<AugmentedState>, Error> {
        let mut a = (ftb * max_step_length(state, d)).min(1.0);
        for _ in 0..=MAX_HALVINGS {
            let next = advance(problem, state, d, a)?;
            if penalty_objective(problem, &next, phi) <= f_cur + f_tol {
                return Ok(Some(next));
            }
            a *= 0.5;
        }
        Ok(None)
    };

    // fallback ladder: corrector, then first-order centering, then the
    // plain affine direction, each with backtracking; if none of them keeps
    // the objective from rising, take the corrector step anyway and let the
    // master loop wait out the excursion
    let mut accepted = true;
    let mut next = if let Some(next) = try_direction(&dir)? {
        next
    } else {
        let centered_rhs = StepRhs::centered(problem, state, phi, sigma.max(0.1), mu, &in_q);
        let centered = kkt::solve_step(&ws, problem, state, &centered_rhs);
        if let Some(next) = try_direction(&centered)? {
            next
        } else if let Some(next) = try_direction(&aff)? {
            next
        } else {
            accepted = false;
            let a = (ftb * max_step_length(state, &dir)).min(1.0);
            let next = advance(problem, state, &dir, a)?;
            if duality_measure(&next) >= mu {
                return Err(Error::Stall);
            }
            next
        }
    };

    // dual output clamp (a no-op for interior iterates)
    for v in next
        .pi
        .iter_mut()
        .chain(&mut next.xi)
        .chain(&mut next.eta)
        .chain(&mut next.zeta)
    {
        *v = v.max(0.0);
    }
    vars.iters_since_phi_change += 1;
    Ok((next, accepted))
}

fn add_directions(a: &Direction, b: &Direction) -> Direction {
    let sum = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u + v).collect() };
    Direction {
        dx: sum(&a.dx, &b.dx),
        dz: sum(&a.dz, &b.dz),
        dy: sum(&a.dy, &b.dy),
        ds: sum(&a.ds, &b.ds),
        dtp: sum(&a.dtp, &b.dtp),
        dtm: sum(&a.dtm, &b.dtm),
        dpi: sum(&a.dpi, &b.dpi),
        dxi: sum(&a.dxi, &b.dxi),
        deta: sum(&a.deta, &b.deta),
        dzeta: sum(&a.dzeta, &b.dzeta),
    }
}

/// Largest single multiple of the direction that keeps every slack and dual
/// nonnegative (uncapped; callers clip at 1). Primal and dual variables
/// share one step length: with a nonzero Hessian, unequal steps leave a
/// spurious `(a_p - a_d) H dx` term in the dual residual that never
/// contracts.
fn max_step_length(state: &AugmentedState, dir: &Direction) -> f64 {
    let ratio = |v: &[f64], dv: &[f64]| -> f64 {
        let mut a = f64::INFINITY;
        for (vi, di) in v.iter().zip(dv) {
            if *di < 0.0 {
                a = a.min(-vi / di);
            }
        }
        a
    };
    ratio(&state.s, &dir.ds)
        .min(ratio(&state.z, &dir.dz))
        .min(ratio(&state.t_plus, &dir.dtp))
        .min(ratio(&state.t_minus, &dir.dtm))
        .min(ratio(&state.pi, &dir.dpi))
        .min(ratio(&state.xi, &dir.dxi))
        .min(ratio(&state.eta, &dir.deta))
        .min(ratio(&state.zeta, &dir.dzeta))
}

fn predicted_mu(state: &AugmentedState, dir: &Direction, a: f64) -> f64 {
    let m = state.s.len();
    let p = state.t_plus.len();
    if m + p == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..m {
        acc += (state.s[i] + a * dir.ds[i]) * (state.pi[i] + a * dir.dpi[i]);
        acc += (state.z[i] + a * dir.dz[i]) * (state.xi[i] + a * dir.dxi[i]);
    }
    for j in 0..p {
        acc += (state.t_plus[j] + a * dir.dtp[j]) * (state.eta[j] + a * dir.deta[j]);
        acc += (state.t_minus[j] + a * dir.dtm[j]) * (state.zeta[j] + a * dir.dzeta[j]);
    }
    (acc / (2 * m + 2 * p) as f64).max(0.0)
}

/// Moves the whole iterate by `a` times the direction. Slacks advance with
/// the direction's own slack components rather than being recomputed, so the
/// fraction-to-boundary margin survives in floating point even when active
/// slacks sit at roundoff scale; the defining identities then hold up to
/// accumulated roundoff, which solve tolerances dominate.
fn advance(
    _problem: &CqpProblem,
    state: &AugmentedState,
    dir: &Direction,
    a: f64,
) -> Result<AugmentedState, Error> {
    let mut next = state.clone();
    let move_by = |v: &mut Vec<f64>, d: &[f64]| {
        for (vi, di) in v.iter_mut().zip(d) {
            *vi += a * di;
        }
    };
    move_by(&mut next.x, &dir.dx);
    move_by(&mut next.z, &dir.dz);
    move_by(&mut next.y, &dir.dy);
    move_by(&mut next.s, &dir.ds);
    move_by(&mut next.t_plus, &dir.dtp);
    move_by(&mut next.t_minus, &dir.dtm);
    move_by(&mut next.pi, &dir.dpi);
    move_by(&mut next.xi, &dir.dxi);
    move_by(&mut next.eta, &dir.deta);
    move_by(&mut next.zeta, &dir.dzeta);
    if !next.strictly_interior() {
        return Err(Error::LostInteriority);
    }
    Ok(next)
}
