//! Truncated noncommutative torus.
//!
//! Elements are finitely supported twisted Laurent series `Σ a_{rs} u^r v^s`
//! stored in normal order (all `u` powers to the left of all `v` powers).
//! The generators obey `u v = e^{iθ} v u`, which gives the monomial rule
//!
//! ```text
//! w(r₁,s₁) · w(r₂,s₂) = e^{-iθ s₁ r₂} w(r₁+r₂, s₁+s₂)
//! ```
//!
//! Every phase is produced by [`DeformationAngle::rotation`] from an integer
//! exponent, so the same integer always maps to the same floating point phase.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NcgError, Result};

/// Amplitudes below this magnitude are treated as underflow and dropped.
pub const UNDERFLOW: f64 = 1e-300;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Deformation angle `θ` in radians.
///
/// The value is held as `(base + 2π·winding) / denominator`. Angles read from
/// input have `winding = 0, denominator = 1`; covering angles
/// `θ' = (θ + 2πk)/(mn)` keep the exact rational multiple of `2π` so that
/// phases of embedded products match the base phases bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeformationAngle {
    base: f64,
    winding: i64,
    denominator: u64,
}

impl DeformationAngle {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(NcgError::invalid("theta", format!("{theta} is not finite")));
        }
        Ok(DeformationAngle {
            base: theta,
            winding: 0,
            denominator: 1,
        })
    }

    pub const fn zero() -> Self {
        DeformationAngle {
            base: 0.0,
            winding: 0,
            denominator: 1,
        }
    }

    pub fn value(&self) -> f64 {
        (self.base + TAU * self.winding as f64) / self.denominator as f64
    }

    pub fn is_zero(&self) -> bool {
        self.value() == 0.0
    }

    /// `(θ + 2πk)/(mn)`.
    pub fn covering(&self, m: u32, n: u32, k: u64) -> Self {
        let scale = u64::from(m) * u64::from(n);
        DeformationAngle {
            base: self.base,
            winding: self.winding + (k as i64) * self.denominator as i64,
            denominator: self.denominator * scale,
        }
    }

    /// Inverse of [`covering`](Self::covering): `θ'·mn − 2πk`, exact when
    /// `self` was produced by the matching covering.
    pub fn base_of(&self, m: u32, n: u32, k: u64) -> Self {
        let scale = u64::from(m) * u64::from(n);
        if scale > 0 && self.denominator.is_multiple_of(scale) {
            let denominator = self.denominator / scale;
            return DeformationAngle {
                base: self.base,
                winding: self.winding - (k as i64) * denominator as i64,
                denominator,
            };
        }
        DeformationAngle {
            base: self.value() * scale as f64 - TAU * k as f64,
            winding: 0,
            denominator: 1,
        }
    }

    /// Two angles are compatible when they were derived the same way or
    /// evaluate to the same float.
    pub fn matches(&self, other: &DeformationAngle) -> bool {
        self == other || self.value() == other.value()
    }

    /// `e^{iθ·exponent}`.
    ///
    /// The exponent is split against the denominator in integer arithmetic
    /// before any floating point work, and negative exponents are the exact
    /// conjugates of positive ones.
    pub fn rotation(&self, exponent: i64) -> Complex64 {
        if exponent == 0 {
            return ONE;
        }
        if exponent < 0 {
            return self.rotation_positive(exponent.unsigned_abs()).conj();
        }
        self.rotation_positive(exponent as u64)
    }

    fn rotation_positive(&self, exponent: u64) -> Complex64 {
        let d = i128::from(self.denominator);
        let n = i128::from(exponent);
        let q = n / d;
        let rem = n % d;
        let mut angle = reduced_product(self.base, q as f64);
        if rem != 0 {
            let g = gcd(rem, d);
            angle += self.base * ((rem / g) as f64) / ((d / g) as f64);
        }
        let t = (i128::from(self.winding) * n).rem_euclid(d);
        if t != 0 {
            let g = gcd(t, d);
            angle += TAU * ((t / g) as f64) / ((d / g) as f64);
        }
        Complex64::new(angle.cos(), angle.sin())
    }
}

impl Default for DeformationAngle {
    fn default() -> Self {
        DeformationAngle::zero()
    }
}

impl fmt::Display for DeformationAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Low part of the two-double representation of `2π`.
const TAU_LO: f64 = 2.4492935982947064e-16;

/// `x·k` reduced into `[-π, π]`, using an error-free product and a two-part
/// `2π` so that the result stays accurate for large `k`.
fn reduced_product(x: f64, k: f64) -> f64 {
    let hi = x * k;
    let lo = x.mul_add(k, -hi);
    let turns = (hi / TAU).round();
    (-turns).mul_add(TAU, hi) - turns * TAU_LO + lo
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// Normal-ordered basis word `u^r v^s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub r: i64,
    pub s: i64,
}

impl Monomial {
    pub const fn new(r: i64, s: i64) -> Self {
        Monomial { r, s }
    }

    pub fn radius(&self) -> u64 {
        self.r.unsigned_abs().max(self.s.unsigned_abs())
    }
}

/// Finite twisted Laurent series in canonical form (no stored zeros).
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    theta: DeformationAngle,
    terms: BTreeMap<Monomial, Complex64>,
}

fn negligible(c: Complex64) -> bool {
    c.re.abs() < UNDERFLOW && c.im.abs() < UNDERFLOW
}

impl AlgebraElement {
    pub fn zero(theta: DeformationAngle) -> Self {
        AlgebraElement {
            theta,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(theta: DeformationAngle) -> Self {
        Self::monomial(theta, 0, 0)
    }

    pub fn monomial(theta: DeformationAngle, r: i64, s: i64) -> Self {
        Self::term(theta, r, s, ONE)
    }

    pub fn term(theta: DeformationAngle, r: i64, s: i64, amplitude: Complex64) -> Self {
        Self::from_terms(theta, [(Monomial::new(r, s), amplitude)])
    }

    /// Builds an element, summing repeated monomials.
    pub fn from_terms<I>(theta: DeformationAngle, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, Complex64)>,
    {
        let mut map: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (w, c) in terms {
            *map.entry(w).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        map.retain(|_, c| !negligible(*c));
        AlgebraElement { theta, terms: map }
    }

    pub fn theta(&self) -> DeformationAngle {
        self.theta
    }

    /// Same coefficients, reinterpreted at another angle.
    pub fn with_theta(&self, theta: DeformationAngle) -> Self {
        AlgebraElement {
            theta,
            terms: self.terms.clone(),
        }
    }

    pub fn coefficient(&self, r: i64, s: i64) -> Complex64 {
        self.terms
            .get(&Monomial::new(r, s))
            .copied()
            .unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (Monomial, Complex64)> + '_ {
        self.terms.iter().map(|(w, c)| (*w, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `max(|r|, |s|)` over the support; 0 for the zero element.
    pub fn support_radius(&self) -> u64 {
        self.terms.keys().map(Monomial::radius).max().unwrap_or(0)
    }

    /// Largest amplitude magnitude.
    pub fn sup_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `Σ |a_{rs}|`.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    pub(crate) fn check_theta(&self, other: &AlgebraElement) -> Result<()> {
        if self.theta.matches(&other.theta) {
            Ok(())
        } else {
            Err(NcgError::ThetaMismatch {
                left: self.theta.value(),
                right: other.theta.value(),
            })
        }
    }

    pub fn map_coefficients<F>(&self, mut f: F) -> Self
    where
        F: FnMut(Monomial, Complex64) -> Complex64,
    {
        Self::from_terms(self.theta, self.terms().map(|(w, c)| (w, f(w, c))))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.map_coefficients(|_, c| c * factor)
    }

    pub fn try_add(&self, other: &AlgebraElement) -> Result<Self> {
        self.check_theta(other)?;
        Ok(Self::from_terms(self.theta, self.terms().chain(other.terms())))
    }

    pub fn try_sub(&self, other: &AlgebraElement) -> Result<Self> {
        self.check_theta(other)?;
        Ok(Self::from_terms(
            self.theta,
            self.terms().chain(other.terms().map(|(w, c)| (w, -c))),
        ))
    }

    pub fn try_mul(&self, other: &AlgebraElement) -> Result<Self> {
        normal_order_product(self, other)
    }

    /// Sup-norm distance between coefficient arrays.
    pub fn distance(&self, other: &AlgebraElement) -> f64 {
        let mut worst: f64 = 0.0;
        for (w, c) in &self.terms {
            worst = worst.max((c - other.coefficient(w.r, w.s)).norm());
        }
        for (w, c) in &other.terms {
            if !self.terms.contains_key(w) {
                worst = worst.max(c.norm());
            }
        }
        worst
    }

    fn product(&self, other: &AlgebraElement) -> AlgebraElement {
        if self.is_zero() || other.is_zero() {
            return AlgebraElement::zero(self.theta);
        }
        let left: Vec<(Monomial, Complex64)> = self.terms().collect();
        let right: Vec<(Monomial, Complex64)> = other.terms().collect();
        let phases = PhaseTable::new(self.theta, &left, &right);

        let (r_lo, r_hi) = span(&left, &right, |w| w.r);
        let (s_lo, s_hi) = span(&left, &right, |w| w.s);
        let width = (r_hi - r_lo + 1) as u128;
        let height = (s_hi - s_lo + 1) as u128;
        let area = width * height;
        let pairs = (left.len() * right.len()) as u128;

        if area <= (4 * pairs).max(4096) && area <= 1 << 26 {
            let width = width as usize;
            let mut dense = vec![Complex64::new(0.0, 0.0); area as usize];
            for (wl, cl) in &left {
                for (wr, cr) in &right {
                    let phase = phases.get(wl.s, wr.r);
                    let idx = (wl.s + wr.s - s_lo) as usize * width + (wl.r + wr.r - r_lo) as usize;
                    dense[idx] += cl * cr * phase;
                }
            }
            let terms = dense.into_iter().enumerate().filter_map(|(idx, c)| {
                if negligible(c) {
                    return None;
                }
                let r = r_lo + (idx % width) as i64;
                let s = s_lo + (idx / width) as i64;
                Some((Monomial::new(r, s), c))
            });
            AlgebraElement {
                theta: self.theta,
                terms: terms.collect(),
            }
        } else {
            let mut acc: HashMap<Monomial, Complex64> = HashMap::new();
            for (wl, cl) in &left {
                for (wr, cr) in &right {
                    let phase = phases.get(wl.s, wr.r);
                    *acc.entry(Monomial::new(wl.r + wr.r, wl.s + wr.s))
                        .or_insert(Complex64::new(0.0, 0.0)) += cl * cr * phase;
                }
            }
            Self::from_terms(self.theta, acc)
        }
    }
}

fn span<F>(left: &[(Monomial, Complex64)], right: &[(Monomial, Complex64)], key: F) -> (i64, i64)
where
    F: Fn(&Monomial) -> i64,
{
    let lo = left.iter().map(|(w, _)| key(w)).min().unwrap()
        + right.iter().map(|(w, _)| key(w)).min().unwrap();
    let hi = left.iter().map(|(w, _)| key(w)).max().unwrap()
        + right.iter().map(|(w, _)| key(w)).max().unwrap();
    (lo, hi)
}

/// Memoized `e^{-iθ s₁ r₂}` keyed by the distinct `s` of the left factor and
/// the distinct `r` of the right factor.
struct PhaseTable {
    theta: DeformationAngle,
    s_values: Vec<i64>,
    r_values: Vec<i64>,
    table: Option<Vec<Complex64>>,
}

impl PhaseTable {
    fn new(theta: DeformationAngle, left: &[(Monomial, Complex64)], right: &[(Monomial, Complex64)]) -> Self {
        let s_values: Vec<i64> = left.iter().map(|(w, _)| w.s).collect::<BTreeSet<_>>().into_iter().collect();
        let r_values: Vec<i64> = right.iter().map(|(w, _)| w.r).collect::<BTreeSet<_>>().into_iter().collect();
        let size = s_values.len() * r_values.len();
        let table = (size <= 1 << 22).then(|| {
            let mut t = Vec::with_capacity(size);
            for s in &s_values {
                for r in &r_values {
                    t.push(theta.rotation(-s * r));
                }
            }
            t
        });
        PhaseTable {
            theta,
            s_values,
            r_values,
            table,
        }
    }

    fn get(&self, s: i64, r: i64) -> Complex64 {
        if s == 0 || r == 0 {
            return ONE;
        }
        match &self.table {
            Some(t) => {
                let i = self.s_values.binary_search(&s).unwrap();
                let j = self.r_values.binary_search(&r).unwrap();
                t[i * self.r_values.len() + j]
            }
            None => self.theta.rotation(-s * r),
        }
    }
}

/// Normal-ordered product `a · b`.
pub fn normal_order_product(a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
    a.check_theta(b)?;
    Ok(a.product(b))
}

/// `(c·w(r,s))* = conj(c)·e^{-iθrs}·w(-r,-s)`.
pub fn adjoint(a: &AlgebraElement) -> AlgebraElement {
    let theta = a.theta;
    AlgebraElement::from_terms(
        theta,
        a.terms()
            .map(|(w, c)| (Monomial::new(-w.r, -w.s), c.conj() * theta.rotation(-w.r * w.s))),
    )
}

/// The tracial state: the coefficient of `w(0,0)`.
pub fn trace_tau0(a: &AlgebraElement) -> Complex64 {
    a.coefficient(0, 0)
}

/// GNS inner product `τ₀(a* b)`, conjugate-linear in `a`.
///
/// Monomials are orthonormal, so this is the coefficient sum
/// `Σ conj(a_{rs}) b_{rs}`.
pub fn gns_inner(a: &AlgebraElement, b: &AlgebraElement) -> Result<Complex64> {
    a.check_theta(b)?;
    let (small, large, flip) = if a.len() <= b.len() { (a, b, false) } else { (b, a, true) };
    let mut sum = Complex64::new(0.0, 0.0);
    for (w, c) in small.terms() {
        let d = large.coefficient(w.r, w.s);
        sum += if flip { d.conj() * c } else { c.conj() * d };
    }
    Ok(sum)
}

fn two_pi_i() -> Complex64 {
    Complex64::new(0.0, 2.0 * PI)
}

/// `δ₁: a_{rs} ↦ 2πi r a_{rs}`.
pub fn delta1(a: &AlgebraElement) -> AlgebraElement {
    a.map_coefficients(|w, c| two_pi_i() * w.r as f64 * c)
}

/// `δ₂: a_{rs} ↦ 2πi s a_{rs}`.
pub fn delta2(a: &AlgebraElement) -> AlgebraElement {
    a.map_coefficients(|w, c| two_pi_i() * w.s as f64 * c)
}

pub(crate) fn check_tau(tau: Complex64) -> Result<()> {
    if tau.im == 0.0 || !tau.im.is_finite() || !tau.re.is_finite() {
        return Err(NcgError::RealTau(tau));
    }
    Ok(())
}

/// `∂_τ = δ₁ + τ δ₂`.
pub fn partial_tau(a: &AlgebraElement, tau: Complex64) -> Result<AlgebraElement> {
    check_tau(tau)?;
    Ok(a.map_coefficients(|w, c| two_pi_i() * (w.r as f64 + tau * w.s as f64) * c))
}

/// `∂_τ† = -δ₁ - τ̄ δ₂`.
pub fn partial_tau_dagger(a: &AlgebraElement, tau: Complex64) -> Result<AlgebraElement> {
    check_tau(tau)?;
    Ok(a.map_coefficients(|w, c| -two_pi_i() * (w.r as f64 + tau.conj() * w.s as f64) * c))
}

/// Derivations of an `(m, n)` covering algebra: `(1/m)·2πi r` and `(1/n)·2πi s`.
pub fn scaled_derivations(a: &AlgebraElement, m: u32, n: u32) -> Result<(AlgebraElement, AlgebraElement)> {
    if m == 0 || n == 0 {
        return Err(NcgError::invalid("m, n", "covering orders must be positive"));
    }
    let d1 = a.map_coefficients(|w, c| two_pi_i() * (w.r as f64 / f64::from(m)) * c);
    let d2 = a.map_coefficients(|w, c| two_pi_i() * (w.s as f64 / f64::from(n)) * c);
    Ok((d1, d2))
}

/// Interchange form `{"theta": .., "terms": [{"r","s","re","im"}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementJson {
    pub theta: f64,
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub r: i64,
    pub s: i64,
    pub re: f64,
    pub im: f64,
}

impl From<&AlgebraElement> for ElementJson {
    fn from(a: &AlgebraElement) -> Self {
        ElementJson {
            theta: a.theta.value(),
            terms: a
                .terms()
                .map(|(w, c)| TermJson {
                    r: w.r,
                    s: w.s,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl TryFrom<ElementJson> for AlgebraElement {
    type Error = NcgError;

    fn try_from(json: ElementJson) -> Result<Self> {
        let theta = DeformationAngle::new(json.theta)?;
        for t in &json.terms {
            if !t.re.is_finite() || !t.im.is_finite() {
                return Err(NcgError::invalid(
                    "terms",
                    format!("amplitude at ({}, {}) is not finite", t.r, t.s),
                ));
            }
        }
        Ok(AlgebraElement::from_terms(
            theta,
            json.terms
                .into_iter()
                .map(|t| (Monomial::new(t.r, t.s), Complex64::new(t.re, t.im))),
        ))
    }
}

impl Serialize for AlgebraElement {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ElementJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AlgebraElement {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = ElementJson::deserialize(deserializer)?;
        AlgebraElement::try_from(json).map_err(serde::de::Error::custom)
    }
}
