use super::dirac::{commutator_with_dirac, dirac_handle, gamma_handle, j_handle, represent, DiracParams};
use super::handle::{op_norm_estimate, LinearMapHandle};
use super::window::GnsWindow;
use crate::error::Result;
use crate::report::AxiomReport;
use crate::torus::{adjoint, AlgebraElement};

/// Tolerance and power-iteration settings shared by the axiom checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckConfig {
    pub tolerance: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            tolerance: 1e-12,
            iterations: 30,
            seed: 0,
        }
    }
}

/// `Jπ(b*)J⁻¹`, composed literally from its three factors.
pub fn opposite_action(b: &AlgebraElement, window: GnsWindow) -> Result<LinearMapHandle> {
    let j = j_handle(window, b.theta());
    Ok(j.compose(&represent(&adjoint(b), window)?).compose(&j.adjoint()))
}

fn report(axiom: &str, h: &LinearMapHandle, window: GnsWindow, cfg: &CheckConfig) -> AxiomReport {
    let est = op_norm_estimate(h, cfg.iterations, cfg.seed);
    AxiomReport::new(
        axiom,
        est.value,
        cfg.tolerance,
        u64::from(window.radius()),
        u64::from(window.guard()),
    )
}

/// Residual of `[[D, π(a)], Jπ(b*)J⁻¹] = 0` on the guarded interior.
pub fn check_first_order(
    p: &DiracParams,
    a: &AlgebraElement,
    b: &AlgebraElement,
    window: GnsWindow,
    cfg: &CheckConfig,
) -> Result<AxiomReport> {
    a.check_theta(b)?;
    window.require_guard(a.support_radius() + b.support_radius())?;
    let h = LinearMapHandle::commutator(&commutator_with_dirac(p, a, window)?, &opposite_action(b, window)?);
    Ok(report("first-order", &h, window, cfg))
}

/// Residual of `[π(a), Jπ(b*)J⁻¹] = 0` on the guarded interior.
pub fn check_real_structure(
    a: &AlgebraElement,
    b: &AlgebraElement,
    window: GnsWindow,
    cfg: &CheckConfig,
) -> Result<AxiomReport> {
    a.check_theta(b)?;
    window.require_guard(a.support_radius() + b.support_radius())?;
    let h = LinearMapHandle::commutator(&represent(a, window)?, &opposite_action(b, window)?);
    Ok(report("real-structure commutant", &h, window, cfg))
}

/// Residuals of the dimension-2 (mod 8) signs: `J² = −1`, `JD = DJ`,
/// `JΓ = −ΓJ`.
pub fn check_sign_table(p: &DiracParams, window: GnsWindow, cfg: &CheckConfig) -> Vec<AxiomReport> {
    let theta = p.theta();
    let j = j_handle(window, theta);
    let d = dirac_handle(p, window, 2);
    let g = gamma_handle(window, theta);
    let one = LinearMapHandle::identity(window, theta, 2);
    let j_squared = j.compose(&j).plus(&one);
    let jd = LinearMapHandle::commutator(&j, &d);
    let jg = LinearMapHandle::anticommutator(&j, &g);
    vec![
        report("J^2 = -1", &j_squared, window, cfg),
        report("JD = DJ", &jd, window, cfg),
        report("JΓ = -ΓJ", &jg, window, cfg),
    ]
}

/// `‖a‖_s`: the interior norm estimate of `π^s(a)`.
pub fn seminorm(
    p: &DiracParams,
    a: &AlgebraElement,
    s: u32,
    window: GnsWindow,
    cfg: &CheckConfig,
) -> Result<f64> {
    let h = super::dirac::pi_s_representation(p, a, s, window, super::dirac::DEFAULT_PI_S_CAP)?;
    Ok(op_norm_estimate(&h, cfg.iterations, cfg.seed).value)
}
