//! The three-step penalty-parameter updating rule.
//!
//! Step 2 forces `phi` to dominate the relaxation magnitude (so unbounded
//! relaxations drive `phi` to infinity); step 3 lets `phi` track the dual
//! magnitude, but only while the KKT residual norms certify that the base
//! iteration is not diverging, which prevents the two quantities from
//! chasing each other upward. The produced sequence is nondecreasing.

use crate::problem::{AugmentedState, KktResiduals, PenaltyConfig};

/// Zero thresholds would make step 3 fire forever when a run starts at a
/// KKT point of the augmented problem.
const GAMMA_FLOOR: f64 = 1e-8;

/// Threshold initialization from the starting iterate:
/// `gamma0 = ||[z0; y0]||_inf / phi0`, `gamma_i = ||G_i0||` for i = 1..3.
/// Returns `(gamma0, gamma1, gamma2, gamma3)`, floored at `1e-8`.
pub fn init_thresholds(
    state0: &AugmentedState,
    residuals0: &KktResiduals,
    phi0: f64,
) -> (f64, f64, f64, f64) {
    let g0 = state0.relaxation_inf_norm() / phi0;
    (
        g0.max(GAMMA_FLOOR),
        residuals0.g1_norm().max(GAMMA_FLOOR),
        residuals0.g2_norm().max(GAMMA_FLOOR),
        residuals0.g3_abs().max(GAMMA_FLOOR),
    )
}

/// One application of the updating rule; pure in its inputs.
///
/// 1. `phi+ := phi`
/// 2. if `||[z; y]||_inf > gamma0 phi` then
///    `phi+ := (sigma2 / gamma0) ||[z; y]||_inf`
/// 3. if `phi+ <= ||[pi; eta - zeta]||_inf + sigma1` and all three residual
///    norms are within their thresholds, then
///    `phi+ := sigma2 (||[pi; eta - zeta]||_inf + sigma1)`
pub fn update(cfg: &PenaltyConfig, state: &AugmentedState, residuals: &KktResiduals) -> f64 {
    debug_assert!(cfg.phi > 0.0);
    let mut phi_plus = cfg.phi;

    let relax = state.relaxation_inf_norm();
    if relax > cfg.gamma0 * cfg.phi {
        phi_plus = cfg.sigma2 / cfg.gamma0 * relax;
    }

    let dual = state.reduced_dual_inf_norm();
    if phi_plus <= dual + cfg.sigma1
        && residuals.g1_norm() <= cfg.gamma1
        && residuals.g2_norm() <= cfg.gamma2
        && residuals.g3_abs() <= cfg.gamma3
    {
        phi_plus = cfg.sigma2 * (dual + cfg.sigma1);
    }

    debug_assert!(phi_plus >= cfg.phi);
    phi_plus
}
