use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NcgError, Result};
use crate::torus::{AlgebraElement, DeformationAngle, Monomial};

/// Truncation `{w(r,s) : max(|r|,|s|) ≤ radius}` of the GNS space together
/// with an interior margin `guard`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GnsWindow {
    radius: u32,
    guard: u32,
}

impl GnsWindow {
    pub fn new(radius: u32, guard: u32) -> Result<Self> {
        if radius == 0 {
            return Err(NcgError::invalid("window", "radius must be positive"));
        }
        if guard > radius {
            return Err(NcgError::invalid(
                "guard",
                format!("guard {guard} exceeds window radius {radius}"),
            ));
        }
        Ok(GnsWindow { radius, guard })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn guard(&self) -> u32 {
        self.guard
    }

    pub fn interior_radius(&self) -> u32 {
        self.radius - self.guard
    }

    /// Points per side, `2N+1`.
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn dim(&self) -> usize {
        self.side() * self.side()
    }

    pub fn contains(&self, r: i64, s: i64) -> bool {
        let n = i64::from(self.radius);
        r.abs() <= n && s.abs() <= n
    }

    pub fn in_interior(&self, r: i64, s: i64) -> bool {
        let n = i64::from(self.interior_radius());
        r.abs() <= n && s.abs() <= n
    }

    pub fn index(&self, r: i64, s: i64) -> Option<usize> {
        if !self.contains(r, s) {
            return None;
        }
        let n = i64::from(self.radius);
        Some((s + n) as usize * self.side() + (r + n) as usize)
    }

    pub fn monomial(&self, index: usize) -> Monomial {
        let n = i64::from(self.radius);
        let side = self.side();
        Monomial::new((index % side) as i64 - n, (index / side) as i64 - n)
    }

    /// Fails when an element of the given support radius could push interior
    /// vectors out of the window.
    pub fn require_guard(&self, support: u64) -> Result<()> {
        if support > u64::from(self.guard) {
            return Err(NcgError::GuardTooSmall {
                support,
                guard: u64::from(self.guard),
            });
        }
        Ok(())
    }

    pub(crate) fn interior_mask(&self) -> Vec<bool> {
        (0..self.dim())
            .map(|i| {
                let w = self.monomial(i);
                self.in_interior(w.r, w.s)
            })
            .collect()
    }
}

/// Vector of the truncated GNS space, one coefficient per window monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct GnsVector {
    window: GnsWindow,
    theta: DeformationAngle,
    coeffs: Vec<Complex64>,
}

impl GnsVector {
    pub fn zeros(window: GnsWindow, theta: DeformationAngle) -> Self {
        GnsVector {
            window,
            theta,
            coeffs: vec![Complex64::new(0.0, 0.0); window.dim()],
        }
    }

    pub fn basis(window: GnsWindow, theta: DeformationAngle, r: i64, s: i64) -> Result<Self> {
        let mut v = Self::zeros(window, theta);
        let idx = window
            .index(r, s)
            .ok_or_else(|| NcgError::invalid("monomial", format!("({r}, {s}) lies outside the window")))?;
        v.coeffs[idx] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    /// The image `a̲` of an algebra element.
    pub fn from_element(window: GnsWindow, a: &AlgebraElement) -> Result<Self> {
        let mut v = Self::zeros(window, a.theta());
        for (w, c) in a.terms() {
            let idx = window.index(w.r, w.s).ok_or_else(|| {
                NcgError::invalid(
                    "element",
                    format!("monomial ({}, {}) lies outside window radius {}", w.r, w.s, window.radius()),
                )
            })?;
            v.coeffs[idx] = c;
        }
        Ok(v)
    }

    pub fn from_coefficients(window: GnsWindow, theta: DeformationAngle, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != window.dim() {
            return Err(NcgError::invalid(
                "coefficients",
                format!("expected {} entries, got {}", window.dim(), coeffs.len()),
            ));
        }
        Ok(GnsVector { window, theta, coeffs })
    }

    pub fn to_element(&self) -> AlgebraElement {
        AlgebraElement::from_terms(
            self.theta,
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| (self.window.monomial(i), *c)),
        )
    }

    pub fn window(&self) -> GnsWindow {
        self.window
    }

    pub fn theta(&self) -> DeformationAngle {
        self.theta
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficient(&self, r: i64, s: i64) -> Complex64 {
        self.window
            .index(r, s)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn inner(&self, other: &GnsVector) -> Complex64 {
        dot(&self.coeffs, &other.coeffs)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coeffs)
    }
}

/// Element of the `k`-fold direct sum of the truncated GNS space.
///
/// The spinor space of the triple is the two-component case; the
/// representations `π^s` act on `2^{s+1}` components.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorVector {
    window: GnsWindow,
    theta: DeformationAngle,
    components: Vec<Vec<Complex64>>,
}

impl SpinorVector {
    pub fn zeros(window: GnsWindow, theta: DeformationAngle, components: usize) -> Self {
        SpinorVector {
            window,
            theta,
            components: vec![vec![Complex64::new(0.0, 0.0); window.dim()]; components],
        }
    }

    pub fn pair(psi1: GnsVector, psi2: GnsVector) -> Result<Self> {
        Self::from_components(vec![psi1, psi2])
    }

    pub fn from_components(parts: Vec<GnsVector>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| NcgError::invalid("components", "at least one component is required"))?;
        let (window, theta) = (first.window, first.theta);
        for p in &parts {
            if p.window != window {
                return Err(NcgError::invalid("components", "component windows differ"));
            }
            if !p.theta.matches(&theta) {
                return Err(NcgError::ThetaMismatch {
                    left: theta.value(),
                    right: p.theta.value(),
                });
            }
        }
        Ok(SpinorVector {
            window,
            theta,
            components: parts.into_iter().map(|p| p.coeffs).collect(),
        })
    }

    /// Random vector with entries uniform in the unit square, restricted to
    /// the interior when `interior_only` is set.
    pub fn random<R: Rng>(
        rng: &mut R,
        window: GnsWindow,
        theta: DeformationAngle,
        components: usize,
        interior_only: bool,
    ) -> Self {
        let mask = window.interior_mask();
        let components = (0..components)
            .map(|_| {
                mask.iter()
                    .map(|&inside| {
                        let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                        if inside || !interior_only {
                            c
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        SpinorVector {
            window,
            theta,
            components,
        }
    }

    pub fn window(&self) -> GnsWindow {
        self.window
    }

    pub fn theta(&self) -> DeformationAngle {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> GnsVector {
        GnsVector {
            window: self.window,
            theta: self.theta,
            coeffs: self.components[i].clone(),
        }
    }

    pub fn psi1(&self) -> GnsVector {
        self.component(0)
    }

    pub fn psi2(&self) -> GnsVector {
        self.component(1)
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.components
    }

    pub(crate) fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.components
    }

    pub(crate) fn with_components(&self, components: Vec<Vec<Complex64>>) -> Self {
        SpinorVector {
            window: self.window,
            theta: self.theta,
            components,
        }
    }

    /// `(self, other)`, conjugate-linear in `self`.
    pub fn inner(&self, other: &SpinorVector) -> Complex64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| dot(a, b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.with_components(
            self.components
                .iter()
                .map(|c| c.iter().map(|z| z * factor).collect())
                .collect(),
        )
    }

    pub fn add(&self, other: &SpinorVector) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpinorVector) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &SpinorVector, f: F) -> Self {
        assert_eq!(self.shape(), other.shape(), "spinor shapes differ");
        self.with_components(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
                .collect(),
        )
    }

    pub fn project_interior(&self) -> Self {
        let mask = self.window.interior_mask();
        self.with_components(
            self.components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(&mask)
                        .map(|(z, &inside)| if inside { *z } else { Complex64::new(0.0, 0.0) })
                        .collect()
                })
                .collect(),
        )
    }

    /// Largest coefficient magnitude.
    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    pub(crate) fn shape(&self) -> (GnsWindow, usize) {
        (self.window, self.components.len())
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_indexing_round_trips() {
        let w = GnsWindow::new(3, 1).unwrap();
        assert_eq!(w.dim(), 49);
        assert_eq!(w.interior_radius(), 2);
        for i in 0..w.dim() {
            let m = w.monomial(i);
            assert_eq!(w.index(m.r, m.s), Some(i));
        }
        assert_eq!(w.index(4, 0), None);
        assert!(GnsWindow::new(2, 3).is_err());
        assert!(matches!(w.require_guard(2), Err(NcgError::GuardTooSmall { .. })));
    }

    #[test]
    fn element_round_trip() {
        let th = DeformationAngle::new(0.5).unwrap();
        let w = GnsWindow::new(2, 0).unwrap();
        let a = AlgebraElement::from_terms(th, [(Monomial::new(1, -2), Complex64::new(1.0, 2.0))]);
        let v = GnsVector::from_element(w, &a).unwrap();
        assert_eq!(v.to_element(), a);
        assert_eq!(v.coefficient(1, -2), Complex64::new(1.0, 2.0));
        let outside = AlgebraElement::monomial(th, 3, 0);
        assert!(GnsVector::from_element(w, &outside).is_err());
    }

    #[test]
    fn interior_projection_zeroes_margin() {
        let w = GnsWindow::new(4, 2).unwrap();
        let x = SpinorVector::random(&mut crate::rng::seeded(1), w, DeformationAngle::zero(), 2, false);
        let p = x.project_interior();
        assert_eq!(p.psi1().coefficient(3, 0), Complex64::new(0.0, 0.0));
        assert_eq!(p.psi1().coefficient(2, -2), x.psi1().coefficient(2, -2));
    }
}
