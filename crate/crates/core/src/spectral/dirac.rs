use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::handle::{ApplyFn, LinearMapHandle, Linearity};
use super::window::{GnsWindow, SpinorVector};
use crate::error::{NcgError, Result};
use crate::torus::{adjoint, check_tau, AlgebraElement, DeformationAngle};

/// Default cap on the order of the regularity representations.
pub const DEFAULT_PI_S_CAP: u32 = 4;

/// Parameters of the Dirac operator `D = [[0, ∂†], [∂, 0]]` with
/// `∂ w(r,s) = 2πi(r/m + τ s/n) w(r,s)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiracParams {
    tau: Complex64,
    theta: DeformationAngle,
    m: u32,
    n: u32,
}

impl DiracParams {
    pub fn new(tau: Complex64, theta: DeformationAngle) -> Result<Self> {
        Self::scaled(tau, theta, 1, 1)
    }

    pub fn scaled(tau: Complex64, theta: DeformationAngle, m: u32, n: u32) -> Result<Self> {
        check_tau(tau)?;
        if m == 0 || n == 0 {
            return Err(NcgError::invalid("m, n", "scaling orders must be positive"));
        }
        Ok(DiracParams { tau, theta, m, n })
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }

    pub fn theta(&self) -> DeformationAngle {
        self.theta
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Eigenvalue of `∂` on `w(r,s)`.
    pub fn multiplier(&self, r: i64, s: i64) -> Complex64 {
        let x = r as f64 / f64::from(self.m);
        let y = s as f64 / f64::from(self.n);
        Complex64::new(0.0, 2.0 * PI) * (x + self.tau * y)
    }

    fn check_theta(&self, a: &AlgebraElement) -> Result<()> {
        if self.theta.matches(&a.theta()) {
            Ok(())
        } else {
            Err(NcgError::ThetaMismatch {
                left: self.theta.value(),
                right: a.theta().value(),
            })
        }
    }
}

/// Truncated left multiplication `P L_a P` on one GNS component.
struct LeftMultiplier {
    window: GnsWindow,
    terms: Vec<(i64, i64, Vec<Complex64>)>,
}

impl LeftMultiplier {
    fn new(window: GnsWindow, a: &AlgebraElement) -> Self {
        let n = i64::from(window.radius());
        let theta = a.theta();
        let terms = a
            .terms()
            .map(|(w, c)| {
                let row: Vec<Complex64> = (-n..=n).map(|r2| c * theta.rotation(-w.s * r2)).collect();
                (w.r, w.s, row)
            })
            .collect();
        LeftMultiplier { window, terms }
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = i64::from(self.window.radius());
        let side = self.window.side();
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        for (r1, s1, row) in &self.terms {
            let (s_lo, s_hi) = ((-n).max(-n - s1), n.min(n - s1));
            let (r_lo, r_hi) = ((-n).max(-n - r1), n.min(n - r1));
            if s_lo > s_hi || r_lo > r_hi {
                continue;
            }
            for s2 in s_lo..=s_hi {
                let src = (s2 + n) as usize * side;
                let dst = (s2 + s1 + n) as usize * side;
                for r2 in r_lo..=r_hi {
                    let i = (r2 + n) as usize;
                    out[dst + (r2 + r1 + n) as usize] += row[i] * x[src + i];
                }
            }
        }
        out
    }
}

/// Truncated right multiplication `ψ ↦ P(ψ·b)` on one GNS component.
struct RightMultiplier {
    window: GnsWindow,
    terms: Vec<(i64, i64, Vec<Complex64>)>,
}

impl RightMultiplier {
    fn new(window: GnsWindow, b: &AlgebraElement) -> Self {
        let n = i64::from(window.radius());
        let theta = b.theta();
        let terms = b
            .terms()
            .map(|(w, c)| {
                let column: Vec<Complex64> = (-n..=n).map(|s1| c * theta.rotation(-s1 * w.r)).collect();
                (w.r, w.s, column)
            })
            .collect();
        RightMultiplier { window, terms }
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = i64::from(self.window.radius());
        let side = self.window.side();
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        for (r2, s2, column) in &self.terms {
            let (s_lo, s_hi) = ((-n).max(-n - s2), n.min(n - s2));
            let (r_lo, r_hi) = ((-n).max(-n - r2), n.min(n - r2));
            if s_lo > s_hi || r_lo > r_hi {
                continue;
            }
            for s1 in s_lo..=s_hi {
                let phase = column[(s1 + n) as usize];
                let src = (s1 + n) as usize * side;
                let dst = (s1 + s2 + n) as usize * side;
                for r1 in r_lo..=r_hi {
                    out[dst + (r1 + r2 + n) as usize] += phase * x[src + (r1 + n) as usize];
                }
            }
        }
        out
    }
}

fn componentwise<F>(f: F) -> ApplyFn
where
    F: Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync + 'static,
{
    Arc::new(move |x: &SpinorVector| x.with_components(x.components().iter().map(|c| f(c)).collect()))
}

/// `π(a) = diag(a, a)` acting by truncated left multiplication.
pub fn represent(a: &AlgebraElement, window: GnsWindow) -> Result<LinearMapHandle> {
    represent_on(a, window, 2)
}

fn represent_on(a: &AlgebraElement, window: GnsWindow, components: usize) -> Result<LinearMapHandle> {
    window.require_guard(a.support_radius())?;
    let forward = Arc::new(LeftMultiplier::new(window, a));
    let backward = Arc::new(LeftMultiplier::new(window, &adjoint(a)));
    Ok(LinearMapHandle::new(
        "π(a)",
        Linearity::Linear,
        window,
        a.theta(),
        components,
        componentwise(move |x| forward.apply(x)),
        componentwise(move |x| backward.apply(x)),
    ))
}

/// Right multiplication by `b` on both spinor components; this is the
/// operator `Jπ(b*)J⁻¹`.
pub fn right_multiplication(b: &AlgebraElement, window: GnsWindow) -> Result<LinearMapHandle> {
    window.require_guard(b.support_radius())?;
    let forward = Arc::new(RightMultiplier::new(window, b));
    let backward = Arc::new(RightMultiplier::new(window, &adjoint(b)));
    Ok(LinearMapHandle::new(
        "R(b)",
        Linearity::Linear,
        window,
        b.theta(),
        2,
        componentwise(move |x| forward.apply(x)),
        componentwise(move |x| backward.apply(x)),
    ))
}

fn multiplier_table(p: &DiracParams, window: GnsWindow) -> Vec<Complex64> {
    (0..window.dim())
        .map(|i| {
            let w = window.monomial(i);
            p.multiplier(w.r, w.s)
        })
        .collect()
}

/// Applies `D` to each consecutive pair of components.
fn dirac_pairs(mu: &[Complex64], x: &SpinorVector) -> SpinorVector {
    let mut out = x.clone();
    for (src, dst) in x.components().chunks(2).zip(out.components_mut().chunks_mut(2)) {
        for i in 0..mu.len() {
            dst[0][i] = mu[i].conj() * src[1][i];
            dst[1][i] = mu[i] * src[0][i];
        }
    }
    out
}

/// `(ψ₁, ψ₂) ↦ (∂†ψ₂, ∂ψ₁)`.
pub fn dirac_apply(p: &DiracParams, x: &SpinorVector) -> SpinorVector {
    assert!(x.len().is_multiple_of(2), "spinor vectors have an even number of components");
    dirac_pairs(&multiplier_table(p, x.window()), x)
}

/// `D` acting diagonally on `components / 2` copies of the spinor space.
pub fn dirac_handle(p: &DiracParams, window: GnsWindow, components: usize) -> LinearMapHandle {
    assert!(components.is_multiple_of(2), "spinor spaces have an even number of components");
    let mu = Arc::new(multiplier_table(p, window));
    let f: ApplyFn = Arc::new(move |x: &SpinorVector| dirac_pairs(&mu, x));
    LinearMapHandle::new("D", Linearity::Linear, window, p.theta, components, f.clone(), f)
}

/// Distinct eigenvalue with its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

const SPECTRUM_GROUPING: f64 = 1e-12;

/// Spectrum of the truncated Dirac operator, obtained by diagonalizing the
/// `2×2` block that `D` leaves invariant at every lattice point. Sorted by
/// absolute value, negative before positive.
pub fn dirac_spectrum(p: &DiracParams, radius: u32) -> Result<Vec<SpectrumEntry>> {
    let window = GnsWindow::new(radius, 0)?;
    let mu = multiplier_table(p, window);
    let mut values: Vec<f64> = Vec::with_capacity(2 * mu.len());
    for m in &mu {
        // Hermitian block [[0, conj μ], [μ, 0]].
        let (a, d, b) = (0.0, 0.0, m.conj());
        let mean = 0.5 * (a + d);
        let spread = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        values.push(mean - spread);
        values.push(mean + spread);
    }
    for v in values.iter_mut() {
        if *v == 0.0 {
            *v = 0.0;
        }
    }
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()).then(x.total_cmp(y)));
    Ok(group_spectrum(&values))
}

fn group_spectrum(sorted: &[f64]) -> Vec<SpectrumEntry> {
    let mut out: Vec<SpectrumEntry> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some(last)
                if last.eigenvalue.signum() == v.signum()
                    && (v - last.eigenvalue).abs() <= SPECTRUM_GROUPING * v.abs().max(1.0) =>
            {
                last.multiplicity += 1
            }
            _ => out.push(SpectrumEntry {
                eigenvalue: v,
                multiplicity: 1,
            }),
        }
    }
    out
}

/// `[D, π(a)]`, evaluated as `(ψ₁, ψ₂) ↦ ((∂†a)ψ₂, (∂a)ψ₁)`. Both `∂` and `∂†`
/// are diagonal and act as derivations, so this equals `Dπ(a) − π(a)D` on the
/// whole truncated window.
pub fn commutator_with_dirac(p: &DiracParams, a: &AlgebraElement, window: GnsWindow) -> Result<LinearMapHandle> {
    p.check_theta(a)?;
    window.require_guard(a.support_radius())?;
    let da = a.map_coefficients(|w, c| c * p.multiplier(w.r, w.s));
    let dda = a.map_coefficients(|w, c| c * p.multiplier(w.r, w.s).conj());
    let lower = Arc::new(LeftMultiplier::new(window, &da));
    let upper = Arc::new(LeftMultiplier::new(window, &dda));
    let lower_adj = Arc::new(LeftMultiplier::new(window, &adjoint(&da)));
    let upper_adj = Arc::new(LeftMultiplier::new(window, &adjoint(&dda)));
    let forward: ApplyFn = Arc::new(move |x: &SpinorVector| {
        let c = x.components();
        x.with_components(vec![upper.apply(&c[1]), lower.apply(&c[0])])
    });
    let backward: ApplyFn = Arc::new(move |y: &SpinorVector| {
        let c = y.components();
        y.with_components(vec![lower_adj.apply(&c[1]), upper_adj.apply(&c[0])])
    });
    Ok(LinearMapHandle::new(
        "[D, π(a)]",
        Linearity::Linear,
        window,
        a.theta(),
        2,
        forward,
        backward,
    ))
}

fn j0_phases(window: GnsWindow, theta: DeformationAngle) -> Vec<Complex64> {
    (0..window.dim())
        .map(|i| {
            let w = window.monomial(i);
            theta.rotation(-w.r * w.s)
        })
        .collect()
}

/// `J₀: c·w(r,s) ↦ conj(c)·e^{-iθrs}·w(-r,-s)`; the window is symmetric, so
/// the reflection is the reversed index order.
fn j0(phases: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let d = x.len();
    (0..d).map(|i| x[d - 1 - i].conj() * phases[d - 1 - i]).collect()
}

fn j_pairs(phases: &[Complex64], x: &SpinorVector) -> SpinorVector {
    let mut out = Vec::with_capacity(x.len());
    for pair in x.components().chunks(2) {
        out.push(j0(phases, &pair[1]).into_iter().map(|z| -z).collect());
        out.push(j0(phases, &pair[0]));
    }
    x.with_components(out)
}

/// `J(ψ₁, ψ₂) = (−J₀ψ₂, J₀ψ₁)`.
pub fn j_apply(x: &SpinorVector) -> SpinorVector {
    assert!(x.len().is_multiple_of(2), "spinor vectors have an even number of components");
    j_pairs(&j0_phases(x.window(), x.theta()), x)
}

/// The antiunitary `J` as a handle; its adjoint is `J⁻¹ = −J`.
pub fn j_handle(window: GnsWindow, theta: DeformationAngle) -> LinearMapHandle {
    let phases = Arc::new(j0_phases(window, theta));
    let p2 = phases.clone();
    let forward: ApplyFn = Arc::new(move |x: &SpinorVector| j_pairs(&phases, x));
    let backward: ApplyFn = Arc::new(move |x: &SpinorVector| j_pairs(&p2, x).scale(Complex64::new(-1.0, 0.0)));
    LinearMapHandle::new("J", Linearity::Antilinear, window, theta, 2, forward, backward)
}

/// `(ψ₁, ψ₂) ↦ (ψ₁, −ψ₂)`.
pub fn gamma_apply(x: &SpinorVector) -> SpinorVector {
    let comps = x
        .components()
        .iter()
        .enumerate()
        .map(|(i, c)| if i % 2 == 0 { c.clone() } else { c.iter().map(|z| -z).collect() })
        .collect();
    x.with_components(comps)
}

pub fn gamma_handle(window: GnsWindow, theta: DeformationAngle) -> LinearMapHandle {
    let f: ApplyFn = Arc::new(gamma_apply);
    LinearMapHandle::new("Γ", Linearity::Linear, window, theta, 2, f.clone(), f)
}

/// `π^s(a)` on `2^{s+1}` GNS components, built by
/// `π^{s+1}(a) = [[π^s(a), 0], [[D, π^s(a)], π^s(a)]]` from `π^0 = π`, with `D`
/// acting diagonally.
pub fn pi_s_representation(
    p: &DiracParams,
    a: &AlgebraElement,
    s: u32,
    window: GnsWindow,
    cap: u32,
) -> Result<LinearMapHandle> {
    if s > cap {
        return Err(NcgError::CapExceeded { s, cap });
    }
    p.check_theta(a)?;
    window.require_guard(a.support_radius() * u64::from(s.max(1)))?;
    let mut current = represent_on(a, window, 2)?;
    for _ in 0..s {
        let d = dirac_handle(p, window, current.components());
        let lower = LinearMapHandle::commutator(&d, &current);
        current = LinearMapHandle::block_lower(&current, &lower, &current);
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spectral::window::GnsVector;
    use crate::torus::{normal_order_product, Monomial};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spinor(w: GnsWindow, th: DeformationAngle, r: i64, s: i64, slot: usize) -> SpinorVector {
        let e = GnsVector::basis(w, th, r, s).unwrap();
        let z = GnsVector::zeros(w, th);
        if slot == 0 {
            SpinorVector::pair(e, z).unwrap()
        } else {
            SpinorVector::pair(z, e).unwrap()
        }
    }

    #[test]
    fn represent_unit_and_generator() {
        let th = DeformationAngle::new(0.8).unwrap();
        let w = GnsWindow::new(4, 1).unwrap();
        let mut g = rng::seeded(2);
        let x = SpinorVector::random(&mut g, w, th, 2, false);
        assert_eq!(represent(&AlgebraElement::one(th), w).unwrap().apply(&x), x);
        let y = represent(&AlgebraElement::monomial(th, 1, 0), w)
            .unwrap()
            .apply(&spinor(w, th, 0, 0, 0));
        assert_eq!(y, spinor(w, th, 1, 0, 0));
        let too_big = AlgebraElement::monomial(th, 2, 0);
        assert!(matches!(represent(&too_big, w), Err(NcgError::GuardTooSmall { .. })));
    }

    #[test]
    fn represent_is_multiplicative_on_interior() {
        let th = DeformationAngle::new(1.1).unwrap();
        let w = GnsWindow::new(8, 4).unwrap();
        let mut g = rng::seeded(3);
        let a = rng::element(&mut g, th, 2, 5);
        let b = rng::element(&mut g, th, 2, 5);
        let ab = normal_order_product(&a, &b).unwrap();
        let x = SpinorVector::random(&mut g, w, th, 2, true);
        let lhs = represent(&ab, w).unwrap().apply(&x);
        let rhs = represent(&a, w).unwrap().apply(&represent(&b, w).unwrap().apply(&x));
        assert!(lhs.sub(&rhs).sup_norm() < 1e-12);
    }

    #[test]
    fn dirac_examples() {
        let th = DeformationAngle::zero();
        let w = GnsWindow::new(3, 0).unwrap();
        let p = DiracParams::new(c(0.0, 1.0), th).unwrap();
        let zero = SpinorVector::zeros(w, th, 2);
        assert_eq!(dirac_apply(&p, &zero), zero);
        let y = dirac_apply(&p, &spinor(w, th, 1, 0, 0));
        assert_eq!(y.psi1().norm(), 0.0);
        assert!((y.psi2().coefficient(1, 0) - c(0.0, 2.0 * PI)).norm() < 1e-14);
        for (r, s) in [(1, 2), (-3, 1), (2, -2)] {
            let x = spinor(w, th, r, s, 0);
            let dd = dirac_apply(&p, &dirac_apply(&p, &x));
            let expected = 4.0 * PI * PI * (r * r + s * s) as f64;
            assert!((dd.psi1().coefficient(r, s) - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn spectrum_radius_one() {
        let p = DiracParams::new(c(0.0, 1.0), DeformationAngle::zero()).unwrap();
        let spec = dirac_spectrum(&p, 1).unwrap();
        let two_pi = 2.0 * PI;
        let expected = [
            (0.0, 2),
            (-two_pi, 4),
            (two_pi, 4),
            (-two_pi * 2f64.sqrt(), 4),
            (two_pi * 2f64.sqrt(), 4),
        ];
        assert_eq!(spec.len(), expected.len());
        for (e, (v, m)) in spec.iter().zip(expected) {
            assert!((e.eigenvalue - v).abs() < 1e-12);
            assert_eq!(e.multiplicity, m);
        }
        let p2 = DiracParams::scaled(c(0.0, 1.0), DeformationAngle::zero(), 2, 1).unwrap();
        let spec2 = dirac_spectrum(&p2, 3).unwrap();
        assert!((spec2[2].eigenvalue - PI).abs() < 1e-14);
    }

    #[test]
    fn commutator_matches_literal_form() {
        let th = DeformationAngle::new(2f64.sqrt()).unwrap();
        let w = GnsWindow::new(8, 3).unwrap();
        let p = DiracParams::new(c(0.5, 1.0), th).unwrap();
        let mut g = rng::seeded(4);
        let a = rng::element(&mut g, th, 3, 6);
        let x = SpinorVector::random(&mut g, w, th, 2, false);
        let literal = {
            let d = dirac_handle(&p, w, 2);
            let pa = represent(&a, w).unwrap();
            LinearMapHandle::commutator(&d, &pa)
        };
        let fast = commutator_with_dirac(&p, &a, w).unwrap();
        let diff = literal.apply(&x).sub(&fast.apply(&x)).sup_norm();
        assert!(diff < 1e-10, "{diff}");
        let y = SpinorVector::random(&mut g, w, th, 2, false);
        let lhs = fast.apply(&x).inner(&y);
        let rhs = x.inner(&fast.apply_adjoint(&y));
        assert!((lhs - rhs).norm() < 1e-10);
        let one = AlgebraElement::one(th);
        assert_eq!(commutator_with_dirac(&p, &one, w).unwrap().apply(&x).sup_norm(), 0.0);
    }

    #[test]
    fn commutator_with_generator_has_norm_two_pi() {
        let th = DeformationAngle::new(0.3).unwrap();
        let w = GnsWindow::new(6, 1).unwrap();
        let p = DiracParams::new(c(0.0, 1.0), th).unwrap();
        let h = commutator_with_dirac(&p, &AlgebraElement::monomial(th, 1, 0), w).unwrap();
        let est = super::super::handle::op_norm_estimate(&h, 100, 1);
        assert!((est.value - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn j_examples() {
        let th = DeformationAngle::new(0.9).unwrap();
        let w = GnsWindow::new(3, 0).unwrap();
        assert_eq!(j_apply(&spinor(w, th, 0, 0, 0)), spinor(w, th, 0, 0, 1));
        let mut g = rng::seeded(6);
        let x = SpinorVector::random(&mut g, w, th, 2, false);
        let y = SpinorVector::random(&mut g, w, th, 2, false);
        assert!(j_apply(&j_apply(&x)).add(&x).sup_norm() < 1e-15);
        assert!((j_apply(&x).inner(&j_apply(&y)) - y.inner(&x)).norm() < 1e-12);
    }

    #[test]
    fn j_conjugation_is_right_multiplication() {
        let th = DeformationAngle::new(1.7).unwrap();
        let w = GnsWindow::new(7, 3).unwrap();
        let mut g = rng::seeded(8);
        let b = rng::element(&mut g, th, 3, 5);
        let j = j_handle(w, th);
        let literal = j.compose(&represent(&adjoint(&b), w).unwrap()).compose(&j.adjoint());
        let right = right_multiplication(&b, w).unwrap();
        let x = SpinorVector::random(&mut g, w, th, 2, false);
        assert!(literal.apply(&x).sub(&right.apply(&x)).sup_norm() < 1e-12);
        let psi = AlgebraElement::from_terms(th, [(Monomial::new(1, 1), c(0.5, -0.25))]);
        let x = SpinorVector::pair(GnsVector::from_element(w, &psi).unwrap(), GnsVector::zeros(w, th)).unwrap();
        let expected = normal_order_product(&psi, &b).unwrap();
        assert!(right.apply(&x).psi1().to_element().distance(&expected) < 1e-14);
    }

    #[test]
    fn gamma_grading() {
        let th = DeformationAngle::new(0.2).unwrap();
        let w = GnsWindow::new(3, 0).unwrap();
        let p = DiracParams::new(c(0.5, 1.0), th).unwrap();
        let x = SpinorVector::random(&mut rng::seeded(9), w, th, 2, false);
        assert_eq!(gamma_apply(&gamma_apply(&x)), x);
        let anti = gamma_apply(&dirac_apply(&p, &x)).add(&dirac_apply(&p, &gamma_apply(&x)));
        assert_eq!(anti.sup_norm(), 0.0);
        let jg = j_apply(&gamma_apply(&x)).add(&gamma_apply(&j_apply(&x)));
        assert_eq!(jg.sup_norm(), 0.0);
    }

    #[test]
    fn pi_s_of_unit_is_identity() {
        let th = DeformationAngle::new(0.4).unwrap();
        let w = GnsWindow::new(5, 2).unwrap();
        let p = DiracParams::new(c(0.0, 1.0), th).unwrap();
        let h = pi_s_representation(&p, &AlgebraElement::one(th), 1, w, DEFAULT_PI_S_CAP).unwrap();
        assert_eq!(h.components(), 4);
        let x = SpinorVector::random(&mut rng::seeded(1), w, th, 4, false);
        assert!(h.apply(&x).sub(&x).sup_norm() < 1e-15);
        assert!(matches!(
            pi_s_representation(&p, &AlgebraElement::one(th), 5, w, 4),
            Err(NcgError::CapExceeded { .. })
        ));
    }
}
