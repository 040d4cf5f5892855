//! Finite noncommutative covering projections `A_θ → A_θ'` of the torus,
//! their deck group `Z_m × Z_n`, the induced Hilbert-module structure, the
//! covering-completeness identity, and coherent sequences along towers.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::circle::{build_partition, lift_to_cover, LiftedFamily};
use crate::error::{NcgError, Result};
use crate::report::AxiomReport;
use crate::torus::{adjoint, normal_order_product, AlgebraElement, DeformationAngle, Monomial};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Residual the completeness identity is judged against when the Fourier
/// tail allows it.
pub const COMPLETENESS_TARGET: f64 = 1e-8;
/// Rows of the completeness sum evaluated exactly per group element.
pub const EXACT_ROW_BUDGET: usize = 64;
/// Relative tolerance of the per-level coherence residual.
pub const COHERENCE_TOLERANCE: f64 = 1e-12;

/// `(m, n, k)`: the covering `u ↦ u_m^m, v ↦ v_n^n` with
/// `θ' = (θ + 2πk)/(mn)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoveringParams {
    pub m: u32,
    pub n: u32,
    pub k: u64,
}

impl CoveringParams {
    pub fn new(m: u32, n: u32, k: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(NcgError::invalid("covering", format!("m = {m}, n = {n} must be positive")));
        }
        Ok(CoveringParams { m, n, k })
    }

    pub fn trivial() -> Self {
        CoveringParams { m: 1, n: 1, k: 0 }
    }

    /// `|G| = mn`.
    pub fn order(&self) -> u64 {
        u64::from(self.m) * u64::from(self.n)
    }

    pub fn group(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.m).flat_map(move |p| (0..self.n).map(move |q| GroupElement { p, q }))
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.m, self.n, self.k).map(|_| ())
    }
}

/// `(p̄, q̄) ∈ Z_m × Z_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    pub p: u32,
    pub q: u32,
}

impl GroupElement {
    pub fn new(p: u32, q: u32, c: &CoveringParams) -> Result<Self> {
        if p >= c.m || q >= c.n {
            return Err(NcgError::invalid(
                "group element",
                format!("({p}, {q}) is not reduced mod ({}, {})", c.m, c.n),
            ));
        }
        Ok(GroupElement { p, q })
    }

    pub fn identity() -> Self {
        GroupElement { p: 0, q: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.p == 0 && self.q == 0
    }

    pub fn compose(&self, other: &GroupElement, c: &CoveringParams) -> GroupElement {
        GroupElement {
            p: (self.p + other.p) % c.m,
            q: (self.q + other.q) % c.n,
        }
    }
}

/// Normalization of the induced module inner product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `(1/|G|) Σ_g g(a*b)`.
    Averaged,
    /// `Σ_g g(a*b)`, the fiber sum of the commutative `L²` module.
    Summed,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalization::Averaged => "averaged",
            Normalization::Summed => "summed",
        })
    }
}

/// `e^{2πi k/order}`, exact at quarter turns and conjugate-symmetric.
pub fn unit_root(k: i128, order: u64) -> Complex64 {
    let order = i128::from(order);
    let k = k.rem_euclid(order);
    if k == 0 {
        Complex64::new(1.0, 0.0)
    } else if 2 * k == order {
        Complex64::new(-1.0, 0.0)
    } else if 4 * k == order {
        Complex64::new(0.0, 1.0)
    } else if 4 * k == 3 * order {
        Complex64::new(0.0, -1.0)
    } else if 2 * k > order {
        unit_root(order - k, order as u64).conj()
    } else {
        let (s, c) = (TAU * k as f64 / order as f64).sin_cos();
        Complex64::new(c, s)
    }
}

pub fn theta_prime(theta: DeformationAngle, c: &CoveringParams) -> DeformationAngle {
    theta.covering(c.m, c.n, c.k)
}

/// Relocates `(r, s) ↦ (mr, ns)` at `θ'`.
pub fn embed(a: &AlgebraElement, c: &CoveringParams) -> AlgebraElement {
    let (m, n) = (i64::from(c.m), i64::from(c.n));
    AlgebraElement::from_terms(
        theta_prime(a.theta(), c),
        a.terms().map(|(w, x)| (Monomial::new(m * w.r, n * w.s), x)),
    )
}

/// Residue `p r n + q s m (mod mn)`, so that `g` multiplies `w(r, s)` by
/// `e^{2πi·index/mn}`.
pub fn phase_index(g: &GroupElement, w: Monomial, c: &CoveringParams) -> u64 {
    let value = i128::from(g.p) * i128::from(w.r) * i128::from(c.n)
        + i128::from(g.q) * i128::from(w.s) * i128::from(c.m);
    value.rem_euclid(i128::from(c.order())) as u64
}

/// `a_{rs} ↦ e^{2πi(pr/m + qs/n)} a_{rs}`.
pub fn group_act(g: &GroupElement, a: &AlgebraElement, c: &CoveringParams) -> AlgebraElement {
    a.map_coefficients(|w, x| x * unit_root(i128::from(phase_index(g, w, c)), c.order()))
}

fn is_invariant(w: Monomial, c: &CoveringParams) -> bool {
    w.r % i64::from(c.m) == 0 && w.s % i64::from(c.n) == 0
}

/// Projection `(1/|G|) Σ_g g·a` onto the invariant subalgebra: keeps the
/// coefficients with `m | r` and `n | s`.
pub fn invariant_average(a: &AlgebraElement, c: &CoveringParams) -> AlgebraElement {
    AlgebraElement::from_terms(a.theta(), a.terms().filter(|(w, _)| is_invariant(*w, c)))
}

/// Inverse of [`embed`] on the invariant subalgebra.
pub fn pullback(a: &AlgebraElement, c: &CoveringParams) -> Result<AlgebraElement> {
    if let Some((w, _)) = a.terms().find(|(w, _)| !is_invariant(*w, c)) {
        return Err(NcgError::invalid(
            "element",
            format!("w({}, {}) is not in the embedded subalgebra", w.r, w.s),
        ));
    }
    let (m, n) = (i64::from(c.m), i64::from(c.n));
    Ok(AlgebraElement::from_terms(
        a.theta().base_of(c.m, c.n, c.k),
        a.terms().map(|(w, x)| (Monomial::new(w.r / m, w.s / n), x)),
    ))
}

/// The base-valued inner product `⟨a, b⟩`, pulled back through `embed`.
pub fn module_inner(
    a: &AlgebraElement,
    b: &AlgebraElement,
    c: &CoveringParams,
    normalization: Normalization,
) -> Result<AlgebraElement> {
    let product = normal_order_product(&adjoint(a), b)?;
    let averaged = pullback(&invariant_average(&product, c), c)?;
    Ok(match normalization {
        Normalization::Averaged => averaged,
        Normalization::Summed => averaged.scale(Complex64::new(c.order() as f64, 0.0)),
    })
}

/// `a = inv ⊕ comp` with `inv` in the embedded subalgebra and `comp` in its
/// orthogonal complement.
pub fn orthogonal_split(a: &AlgebraElement, c: &CoveringParams) -> (AlgebraElement, AlgebraElement) {
    let (inv, comp): (Vec<_>, Vec<_>) = a.terms().partition(|(w, _)| is_invariant(*w, c));
    (
        AlgebraElement::from_terms(a.theta(), inv),
        AlgebraElement::from_terms(a.theta(), comp),
    )
}

/// Outcome of the covering-completeness check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub report: AxiomReport,
    /// Residual of `Σ_ι e'_ι (g e_ι) − δ_{g,e}` per group element.
    pub group_residuals: Vec<(GroupElement, f64)>,
    /// Largest discarded Fourier coefficient of the lifted partition.
    pub tail: f64,
    /// Tolerance derived from the tail: `tail × |I|`, floored at `1e-12`.
    pub tolerance: f64,
    /// Bound contributed by rows of the sum that were not evaluated exactly.
    pub skipped_bound: f64,
    /// Set when the tail-derived tolerance exceeds [`COMPLETENESS_TARGET`].
    pub warning: bool,
}

/// Coefficient data of `e^m_ι(u_m)` and `e^n_ι(v_n)` for the completeness sum.
struct CompletenessData {
    theta: DeformationAngle,
    c: CoveringParams,
    u_coeffs: Vec<Vec<Complex64>>,
    v_coeffs: Vec<Vec<Complex64>>,
    u_half: i64,
    v_half: i64,
    tail: f64,
}

fn family_coefficients(family: &LiftedFamily) -> (Vec<Vec<Complex64>>, f64) {
    let coeffs = family
        .members()
        .iter()
        .map(|(_, f)| f.coefficients().map(|(_, x)| x).collect())
        .collect();
    let tail = family.members().iter().map(|(_, f)| f.tail()).fold(0.0, f64::max);
    (coeffs, tail)
}

struct Convolver {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Convolver {
    fn new(input_len: usize) -> Self {
        let len = (2 * input_len - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Convolver {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    fn spectrum(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![ZERO; self.len];
        buf[..x.len()].copy_from_slice(x);
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform of an accumulated spectrum, truncated to `out_len`.
    fn finish(&self, mut spectrum: Vec<Complex64>, out_len: usize) -> Vec<Complex64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.len as f64;
        spectrum.truncate(out_len);
        spectrum.iter_mut().for_each(|z| *z *= scale);
        spectrum
    }
}

fn twisted(coeffs: &[Complex64], half: i64, shift: u32, fold: u32) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, x)| x * unit_root(i128::from(shift) * i128::from(i as i64 - half), u64::from(fold)))
        .collect()
}

impl CompletenessData {
    fn new(theta: DeformationAngle, c: CoveringParams, cutoff: usize) -> Result<Self> {
        c.validate()?;
        if cutoff < 8 {
            return Err(NcgError::invalid("cutoff", format!("{cutoff} is below the minimum of 8")));
        }
        let grid = (8 * cutoff).next_power_of_two().max(1024);
        let pair = build_partition(grid, cutoff)?;
        let (u_coeffs, tu) = family_coefficients(&lift_to_cover(&pair, c.m)?);
        let (v_coeffs, tv) = family_coefficients(&lift_to_cover(&pair, c.n)?);
        Ok(CompletenessData {
            theta: theta_prime(theta, &c),
            c,
            u_coeffs,
            v_coeffs,
            u_half: (c.m as usize * cutoff) as i64,
            v_half: (c.n as usize * cutoff) as i64,
            tail: tu.max(tv),
        })
    }

    /// `A_p(u) = Σ_ι e^m_ι(u)·(p e^m_ι)(u)`, indexed by `j + 2·u_half`.
    fn u_sum(&self, conv: &Convolver, p: u32) -> Vec<Complex64> {
        let mut acc = vec![ZERO; conv.len];
        for e in &self.u_coeffs {
            let x = conv.spectrum(e);
            let y = conv.spectrum(&twisted(e, self.u_half, p, self.c.m));
            for (a, (s, t)) in acc.iter_mut().zip(x.iter().zip(&y)) {
                *a += s * t;
            }
        }
        conv.finish(acc, 4 * self.u_half as usize + 1)
    }

    /// `max_s Σ_ι (|d_ι| ∗ |d_ι|)_s`, a bound on `|row(j, q)|` for all `j, q`.
    fn row_bound(&self, conv: &Convolver) -> f64 {
        let mut acc = vec![ZERO; conv.len];
        for d in &self.v_coeffs {
            let abs: Vec<Complex64> = d.iter().map(|x| Complex64::new(x.norm(), 0.0)).collect();
            let x = conv.spectrum(&abs);
            for (a, s) in acc.iter_mut().zip(&x) {
                *a += s * s;
            }
        }
        conv.finish(acc, 4 * self.v_half as usize + 1)
            .iter()
            .map(|z| z.re)
            .fold(0.0, f64::max)
    }

    /// `Σ_ι Σ_{k+l=s} d_k e^{−iθ'kj} (q d)_l`, indexed by `s + 2·v_half`:
    /// the coefficient row of `u^j` after moving `e^n_ι(v)` past `u^j`.
    fn row(&self, conv: &Convolver, j: i64, twisted_spectra: &[Vec<Complex64>]) -> Vec<Complex64> {
        let phases: Vec<Complex64> = (-self.v_half..=self.v_half)
            .map(|k| self.theta.rotation(-k * j))
            .collect();
        let mut acc = vec![ZERO; conv.len];
        for (d, y) in self.v_coeffs.iter().zip(twisted_spectra) {
            let x: Vec<Complex64> = d.iter().zip(&phases).map(|(a, b)| a * b).collect();
            let x = conv.spectrum(&x);
            for (a, (s, t)) in acc.iter_mut().zip(x.iter().zip(y)) {
                *a += s * t;
            }
        }
        conv.finish(acc, 4 * self.v_half as usize + 1)
    }

    fn twisted_spectra(&self, conv: &Convolver, q: u32) -> Vec<Vec<Complex64>> {
        self.v_coeffs
            .iter()
            .map(|d| conv.spectrum(&twisted(d, self.v_half, q, self.c.n)))
            .collect()
    }

    /// Residual for `g`, evaluating up to `budget` rows exactly and bounding
    /// the others by `|A_j|·row_bound`.
    fn residual(&self, g: &GroupElement, budget: usize, bound: f64) -> (f64, f64) {
        let uc = Convolver::new(self.u_coeffs[0].len());
        let vc = Convolver::new(self.v_coeffs[0].len());
        let a = self.u_sum(&uc, g.p);
        let spectra = self.twisted_spectra(&vc, g.q);
        let mut order: Vec<usize> = (0..a.len()).collect();
        order.sort_by(|&x, &y| a[y].norm().total_cmp(&a[x].norm()));
        let mut worst: f64 = 0.0;
        let mut skipped: f64 = 0.0;
        for (rank, &idx) in order.iter().enumerate() {
            if rank >= budget {
                skipped = skipped.max(a[idx].norm() * bound);
                continue;
            }
            let j = idx as i64 - 2 * self.u_half;
            let row = self.row(&vc, j, &spectra);
            for (i, x) in row.iter().enumerate() {
                let s = i as i64 - 2 * self.v_half;
                let target = if g.is_identity() && j == 0 && s == 0 { 1.0 } else { 0.0 };
                worst = worst.max((a[idx] * x - target).norm());
            }
        }
        (worst.max(skipped), skipped)
    }

    fn element(&self, g: &GroupElement) -> AlgebraElement {
        let uc = Convolver::new(self.u_coeffs[0].len());
        let vc = Convolver::new(self.v_coeffs[0].len());
        let a = self.u_sum(&uc, g.p);
        let spectra = self.twisted_spectra(&vc, g.q);
        let mut terms = Vec::new();
        for (idx, aj) in a.iter().enumerate() {
            let j = idx as i64 - 2 * self.u_half;
            let row = self.row(&vc, j, &spectra);
            for (i, x) in row.iter().enumerate() {
                terms.push((Monomial::new(j, i as i64 - 2 * self.v_half), aj * x));
            }
        }
        AlgebraElement::from_terms(self.theta, terms)
    }

    /// `|I|`: the number of products in each group-twisted sum.
    fn term_count(&self) -> usize {
        self.u_coeffs.len() * self.v_coeffs.len()
    }
}

/// Evaluates `Σ_{ι ∈ I} e'_ι (g e_ι)` for every `g ∈ Z_m × Z_n`, where
/// `e_ι = e^m_{ι₁}(u_m) e^n_{ι₂}(v_n)` and `e'_ι = e^n_{ι₂}(v_n) e^m_{ι₁}(u_m)`
/// come from the lifted circle partition truncated at `cutoff` (in base
/// frequency units).
pub fn verify_covering_completeness(
    theta: DeformationAngle,
    c: &CoveringParams,
    cutoff: usize,
) -> Result<CompletenessReport> {
    let data = CompletenessData::new(theta, *c, cutoff)?;
    let bound = data.row_bound(&Convolver::new(data.v_coeffs[0].len()));
    let group: Vec<GroupElement> = c.group().collect();
    let results: Vec<(f64, f64)> = group
        .par_iter()
        .map(|g| data.residual(g, EXACT_ROW_BUDGET, bound))
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let skipped_bound = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let tolerance = (data.tail * data.term_count() as f64).max(1e-12);
    Ok(CompletenessReport {
        report: AxiomReport::new(
            format!("covering completeness (m={}, n={}, k={})", c.m, c.n, c.k),
            worst,
            tolerance,
            cutoff as u64,
            0,
        ),
        group_residuals: group.into_iter().zip(results.iter().map(|r| r.0)).collect(),
        tail: data.tail,
        tolerance,
        skipped_bound,
        warning: tolerance > COMPLETENESS_TARGET,
    })
}

/// The full element `Σ_ι e'_ι (g e_ι)` at `θ'`.
pub fn completeness_sum(
    theta: DeformationAngle,
    c: &CoveringParams,
    cutoff: usize,
    g: &GroupElement,
) -> Result<AlgebraElement> {
    Ok(CompletenessData::new(theta, *c, cutoff)?.element(g))
}

/// Generator of the torus a one-variable function is evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    U,
    V,
}

/// `e^fold_{(g,i)}` evaluated on the `u`- or `v`-generator of the
/// `fold`-fold covering algebra at angle `theta`.
pub fn partition_lift_element(
    theta: DeformationAngle,
    fold: u32,
    member: (u32, u8),
    cutoff: usize,
    generator: Generator,
) -> Result<AlgebraElement> {
    let pair = build_partition((8 * cutoff).next_power_of_two().max(1024), cutoff)?;
    let family = lift_to_cover(&pair, fold)?;
    let f = family
        .member(member.0, member.1)
        .ok_or_else(|| NcgError::invalid("member", format!("{member:?} is not in the family")))?;
    Ok(AlgebraElement::from_terms(
        theta,
        f.coefficients().map(|(j, x)| match generator {
            Generator::U => (Monomial::new(j, 0), x),
            Generator::V => (Monomial::new(0, j), x),
        }),
    ))
}

/// A covering tower `A_{θ₀} → A_{θ₁} → … → A_{θ_K}`; `levels[k]` is the
/// covering from level `k` to level `k + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TowerSpec {
    theta0: DeformationAngle,
    levels: Vec<CoveringParams>,
}

/// JSON form of a tower: `{"theta0": float, "levels": [{"m", "n", "k"}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerConfig {
    pub theta0: f64,
    pub levels: Vec<CoveringParams>,
}

impl TowerSpec {
    pub fn new(theta0: DeformationAngle, levels: Vec<CoveringParams>) -> Result<Self> {
        for c in &levels {
            c.validate()?;
        }
        let tower = TowerSpec { theta0, levels };
        let top = tower.cumulative(tower.depth());
        if top.m.checked_mul(top.n).is_none() {
            return Err(NcgError::invalid("levels", "cumulative group order overflows"));
        }
        Ok(tower)
    }

    pub fn from_config(config: &TowerConfig) -> Result<Self> {
        Self::new(DeformationAngle::new(config.theta0)?, config.levels.clone())
    }

    pub fn config(&self) -> TowerConfig {
        TowerConfig {
            theta0: self.theta0.value(),
            levels: self.levels.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.config()).expect("tower serialization is infallible")
    }

    pub fn theta0(&self) -> DeformationAngle {
        self.theta0
    }

    pub fn levels(&self) -> &[CoveringParams] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Covering from level `k` to level `k + 1`.
    pub fn relative(&self, k: usize) -> CoveringParams {
        self.levels[k]
    }

    /// Composite covering from level `from` up to level `to`.
    pub fn composite(&self, from: usize, to: usize) -> CoveringParams {
        self.levels[from..to].iter().fold(CoveringParams::trivial(), |acc, c| CoveringParams {
            m: acc.m * c.m,
            n: acc.n * c.n,
            k: acc.k + c.k * acc.order(),
        })
    }

    /// Composite covering from level 0 to level `k`; its group is `G_k`.
    pub fn cumulative(&self, k: usize) -> CoveringParams {
        self.composite(0, k)
    }

    pub fn theta(&self, k: usize) -> DeformationAngle {
        self.levels[..k].iter().fold(self.theta0, theta_prime)
    }

    /// Quotient `G_k → G_{k−1}`.
    pub fn quotient(&self, g: &GroupElement, k: usize) -> GroupElement {
        let lower = self.cumulative(k - 1);
        GroupElement {
            p: g.p % lower.m,
            q: g.q % lower.n,
        }
    }
}

/// `a_k = Σ_{g ∈ G(A_{k+1}|A_k)} g·a_{k+1}`: the invariant coefficients,
/// pulled back to level `k` and scaled by the relative group order.
pub fn descend(a_next: &AlgebraElement, k: usize, tower: &TowerSpec) -> Result<AlgebraElement> {
    descend_to(a_next, k + 1, k, tower)
}

/// Descent from level `from` to level `to` over the composite group.
pub fn descend_to(a: &AlgebraElement, from: usize, to: usize, tower: &TowerSpec) -> Result<AlgebraElement> {
    if to > from || from > tower.depth() {
        return Err(NcgError::invalid("levels", format!("cannot descend from {from} to {to}")));
    }
    let c = tower.composite(to, from);
    let down = pullback(&invariant_average(a, &c), &c)?;
    Ok(down.scale(Complex64::new(c.order() as f64, 0.0)))
}

/// Finite prefix `a₀, …, a_K` of a sequence along a tower.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherentPrefix {
    elements: Vec<AlgebraElement>,
}

impl CoherentPrefix {
    /// Generates the prefix by descending `top` (at `θ_K`) level by level.
    pub fn from_top(top: AlgebraElement, tower: &TowerSpec) -> Result<Self> {
        let depth = tower.depth();
        if !top.theta().matches(&tower.theta(depth)) {
            return Err(NcgError::ThetaMismatch {
                left: top.theta().value(),
                right: tower.theta(depth).value(),
            });
        }
        let mut elements = vec![top];
        for k in (0..depth).rev() {
            let next = descend(elements.last().expect("nonempty"), k, tower)?;
            elements.push(next);
        }
        elements.reverse();
        Ok(CoherentPrefix { elements })
    }

    pub fn from_elements(elements: Vec<AlgebraElement>, tower: &TowerSpec) -> Result<Self> {
        if elements.len() != tower.depth() + 1 {
            return Err(NcgError::invalid(
                "prefix",
                format!("{} elements for a tower of depth {}", elements.len(), tower.depth()),
            ));
        }
        for (k, a) in elements.iter().enumerate() {
            if !a.theta().matches(&tower.theta(k)) {
                return Err(NcgError::ThetaMismatch {
                    left: a.theta().value(),
                    right: tower.theta(k).value(),
                });
            }
        }
        Ok(CoherentPrefix { elements })
    }

    pub fn depth(&self) -> usize {
        self.elements.len() - 1
    }

    pub fn elements(&self) -> &[AlgebraElement] {
        &self.elements
    }

    pub fn element(&self, k: usize) -> &AlgebraElement {
        &self.elements[k]
    }

    pub fn with_replaced(&self, k: usize, a: AlgebraElement) -> Self {
        let mut elements = self.elements.clone();
        elements[k] = a;
        CoherentPrefix { elements }
    }
}

/// Per-level residuals `‖a_k − Σ_g g·a_{k+1}‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub levels: Vec<AxiomReport>,
}

impl CoherenceReport {
    pub fn residual(&self) -> f64 {
        self.levels.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn pass(&self) -> bool {
        self.levels.iter().all(|r| r.pass)
    }

    /// Relations `k` (between `a_k` and `a_{k+1}`) whose residual exceeds
    /// the tolerance.
    pub fn failing_relations(&self) -> Vec<usize> {
        self.levels.iter().enumerate().filter(|(_, r)| !r.pass).map(|(k, _)| k).collect()
    }

    /// Prefix elements that explain the failing relations: an interior
    /// `a_j` whose relations on both sides fail, then, for any failure left
    /// unexplained, the tower endpoints it touches (or both of its elements
    /// when it touches none). A single corrupted `a_k` is flagged at `k`.
    pub fn flagged(&self) -> Vec<usize> {
        let depth = self.levels.len();
        let fails = |k: usize| !self.levels[k].pass;
        let mut flagged: Vec<usize> = (1..depth).filter(|&j| fails(j - 1) && fails(j)).collect();
        for k in self.failing_relations() {
            if flagged.contains(&k) || flagged.contains(&(k + 1)) {
                continue;
            }
            let ends: Vec<usize> = [k, k + 1].into_iter().filter(|&j| j == 0 || j == depth).collect();
            flagged.extend(if ends.is_empty() { vec![k, k + 1] } else { ends });
        }
        flagged.sort_unstable();
        flagged.dedup();
        flagged
    }
}

pub fn coherence_check(prefix: &CoherentPrefix, tower: &TowerSpec) -> Result<CoherenceReport> {
    if prefix.depth() != tower.depth() {
        return Err(NcgError::invalid("prefix", "depth does not match the tower"));
    }
    let levels = (0..tower.depth())
        .into_par_iter()
        .map(|k| {
            let descended = descend(prefix.element(k + 1), k, tower)?;
            let a = prefix.element(k);
            let scale = a.sup_norm().max(descended.sup_norm()).max(1.0);
            Ok(AxiomReport::new(
                format!("coherence at level {k}"),
                a.distance(&descended),
                COHERENCE_TOLERANCE * scale,
                0,
                0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceReport { levels })
}

/// `⟨a_k, b_k⟩` for `k = 0..K` in base coordinates, with the successive
/// difference norms as a Cauchy diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerTrajectory {
    pub normalization: Normalization,
    pub values: Vec<AlgebraElement>,
    pub differences: Vec<f64>,
}

impl InnerTrajectory {
    /// Largest deviation of any level from level 0.
    pub fn spread(&self) -> f64 {
        self.values.iter().map(|v| v.distance(&self.values[0])).fold(0.0, f64::max)
    }
}

pub fn limit_inner_estimate(
    p: &CoherentPrefix,
    q: &CoherentPrefix,
    tower: &TowerSpec,
    normalization: Normalization,
) -> Result<InnerTrajectory> {
    if p.depth() != tower.depth() || q.depth() != tower.depth() {
        return Err(NcgError::invalid("prefix", "prefixes must share the tower"));
    }
    let values = (0..=tower.depth())
        .into_par_iter()
        .map(|k| module_inner(p.element(k), q.element(k), &tower.cumulative(k), normalization))
        .collect::<Result<Vec<_>>>()?;
    let differences = values.windows(2).map(|w| w[1].distance(&w[0])).collect();
    Ok(InnerTrajectory {
        normalization,
        values,
        differences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::functional_calculus_coeffs;
    use crate::rng;
    use crate::torus::trace_tau0;
    use rand::Rng;

    fn angle(t: f64) -> DeformationAngle {
        DeformationAngle::new(t).unwrap()
    }

    fn params(m: u32, n: u32, k: u64) -> CoveringParams {
        CoveringParams::new(m, n, k).unwrap()
    }

    #[test]
    fn theta_prime_examples() {
        assert_eq!(theta_prime(angle(0.0), &params(1, 1, 0)).value(), 0.0);
        assert!((theta_prime(angle(1.0), &params(2, 3, 0)).value() - 1.0 / 6.0).abs() < 1e-16);
        let t = theta_prime(angle(1.0), &params(2, 3, 1)).value();
        assert!((t - (1.0 + TAU) / 6.0).abs() < 1e-15);
        assert!(CoveringParams::new(0, 1, 0).is_err());
    }

    #[test]
    fn embed_examples() {
        let c = params(2, 3, 1);
        let th = angle(1.0);
        assert_eq!(embed(&AlgebraElement::one(th), &c), AlgebraElement::one(theta_prime(th, &c)));
        let u = embed(&AlgebraElement::monomial(th, 1, 0), &c);
        assert_eq!(u, AlgebraElement::monomial(theta_prime(th, &c), 2, 0));
    }

    #[test]
    fn embed_is_multiplicative_with_identical_phases() {
        let c = params(3, 5, 2);
        let th = angle(2f64.sqrt());
        let mut g = rng::seeded(21);
        for _ in 0..200 {
            let a = rng::element(&mut g, th, 6, 3);
            let b = rng::element(&mut g, th, 6, 3);
            let lhs = embed(&normal_order_product(&a, &b).unwrap(), &c);
            let rhs = normal_order_product(&embed(&a, &c), &embed(&b, &c)).unwrap();
            assert!(lhs.distance(&rhs) <= 1e-15 * a.l1_norm() * b.l1_norm());
            assert_eq!(embed(&adjoint(&a), &c), adjoint(&embed(&a, &c)));
        }
    }

    #[test]
    fn group_action_examples() {
        let c = params(2, 3, 0);
        let th = theta_prime(angle(1.0), &c);
        let u = AlgebraElement::monomial(th, 1, 0);
        let g = GroupElement::new(1, 0, &c).unwrap();
        assert_eq!(group_act(&g, &u, &c), u.scale(Complex64::new(-1.0, 0.0)));
        assert_eq!(group_act(&GroupElement::identity(), &u, &c), u);
        let mut total = AlgebraElement::zero(th);
        for h in c.group() {
            total = total.try_add(&group_act(&h, &u, &c)).unwrap();
        }
        assert!(total.sup_norm() < 1e-15);
        assert!(GroupElement::new(2, 0, &c).is_err());
    }

    #[test]
    fn group_action_composes_and_commutes_with_adjoint() {
        let c = params(3, 4, 1);
        let th = theta_prime(angle(0.7), &c);
        let mut rg = rng::seeded(22);
        for _ in 0..50 {
            let a = rng::element(&mut rg, th, 8, 10);
            let g1 = GroupElement::new(rg.random_range(0..3), rg.random_range(0..4), &c).unwrap();
            let g2 = GroupElement::new(rg.random_range(0..3), rg.random_range(0..4), &c).unwrap();
            let g12 = g1.compose(&g2, &c);
            for (w, _) in a.terms() {
                let sum = (phase_index(&g1, w, &c) + phase_index(&g2, w, &c)) % c.order();
                assert_eq!(sum, phase_index(&g12, w, &c));
            }
            let twice = group_act(&g1, &group_act(&g2, &a, &c), &c);
            assert!(twice.distance(&group_act(&g12, &a, &c)) < 1e-15 * a.sup_norm().max(1.0) * 4.0);
            let lhs = group_act(&g1, &adjoint(&a), &c);
            let rhs = adjoint(&group_act(&g1, &a, &c));
            assert!(lhs.distance(&rhs) < 4e-16 * a.sup_norm().max(1.0));
        }
    }

    #[test]
    fn invariant_average_matches_group_sum() {
        let c = params(2, 3, 1);
        let th = theta_prime(angle(1.3), &c);
        let mut rg = rng::seeded(23);
        let a = rng::element(&mut rg, th, 7, 40);
        let mut sum = AlgebraElement::zero(th);
        for g in c.group() {
            sum = sum.try_add(&group_act(&g, &a, &c)).unwrap();
        }
        let explicit = sum.scale(Complex64::new(1.0 / c.order() as f64, 0.0));
        let avg = invariant_average(&a, &c);
        assert!(avg.distance(&explicit) < 1e-12);
        assert_eq!(invariant_average(&avg, &c), avg);
        let b = rng::element(&mut rg, angle(1.3), 3, 8);
        assert_eq!(invariant_average(&embed(&b, &c), &c), embed(&b, &c));
        assert_eq!(embed(&pullback(&avg, &c).unwrap(), &c), avg);
        assert!(invariant_average(&AlgebraElement::monomial(th, 1, 0), &c).is_zero());
    }

    #[test]
    fn module_inner_examples_and_properties() {
        let c = params(2, 3, 1);
        let base = angle(0.9);
        let th = theta_prime(base, &c);
        let u = AlgebraElement::monomial(th, 1, 0);
        let one = AlgebraElement::one(th);
        let uu = module_inner(&u, &u, &c, Normalization::Averaged).unwrap();
        assert_eq!(uu, AlgebraElement::one(base));
        assert!(module_inner(&one, &u, &c, Normalization::Averaged).unwrap().is_zero());
        let summed = module_inner(&u, &u, &c, Normalization::Summed).unwrap();
        assert_eq!(summed, AlgebraElement::one(base).scale(Complex64::new(6.0, 0.0)));

        let mut rg = rng::seeded(24);
        let a0 = rng::element(&mut rg, base, 3, 5);
        let b0 = rng::element(&mut rg, base, 3, 5);
        let lhs = module_inner(&embed(&a0, &c), &embed(&b0, &c), &c, Normalization::Averaged).unwrap();
        let rhs = normal_order_product(&adjoint(&a0), &b0).unwrap();
        assert!(lhs.distance(&rhs) < 1e-14);

        let a = rng::element(&mut rg, th, 6, 20);
        let b = rng::element(&mut rg, th, 6, 20);
        let x = rng::element(&mut rg, base, 2, 4);
        let ab = module_inner(&a, &b, &c, Normalization::Averaged).unwrap();
        let ba = module_inner(&b, &a, &c, Normalization::Averaged).unwrap();
        assert!(ab.distance(&adjoint(&ba)) < 1e-12);
        assert!(trace_tau0(&module_inner(&a, &a, &c, Normalization::Averaged).unwrap()).re >= 0.0);
        let right = module_inner(&a, &normal_order_product(&b, &embed(&x, &c)).unwrap(), &c, Normalization::Averaged)
            .unwrap();
        assert!(right.distance(&normal_order_product(&ab, &x).unwrap()) < 1e-12);
    }

    #[test]
    fn orthogonal_split_examples() {
        let c = params(2, 2, 0);
        let base = angle(0.4);
        let th = theta_prime(base, &c);
        let b = embed(&AlgebraElement::monomial(base, 1, -1), &c);
        assert_eq!(orthogonal_split(&b, &c), (b.clone(), AlgebraElement::zero(th)));
        let u = AlgebraElement::monomial(th, 1, 0);
        assert_eq!(orthogonal_split(&u, &c), (AlgebraElement::zero(th), u.clone()));
        let mut rg = rng::seeded(25);
        let a = rng::element(&mut rg, th, 5, 30);
        let (inv, comp) = orthogonal_split(&a, &c);
        assert_eq!(inv.try_add(&comp).unwrap(), a);
        assert!(inv.terms().all(|(w, _)| comp.coefficient(w.r, w.s) == ZERO));
        assert!(module_inner(&inv, &comp, &c, Normalization::Averaged).unwrap().is_zero());
        let x = embed(&rng::element(&mut rg, base, 2, 4), &c);
        assert!(module_inner(&x, &comp, &c, Normalization::Averaged).unwrap().is_zero());
    }

    /// Oracle: build every `e_ι` as an algebra element and multiply naively.
    fn naive_completeness(theta: DeformationAngle, c: &CoveringParams, cutoff: usize, g: &GroupElement) -> AlgebraElement {
        let th = theta_prime(theta, c);
        let pair = build_partition(1024, cutoff).unwrap();
        let series = |fold: u32, along_u: bool| -> Vec<AlgebraElement> {
            lift_to_cover(&pair, fold)
                .unwrap()
                .members()
                .iter()
                .map(|(_, f)| {
                    let s = functional_calculus_coeffs(f, cutoff).unwrap();
                    AlgebraElement::from_terms(
                        th,
                        s.coefficients
                            .iter()
                            .map(|(&j, &x)| (if along_u { Monomial::new(j, 0) } else { Monomial::new(0, j) }, x)),
                    )
                })
                .collect()
        };
        let us = series(c.m, true);
        let vs = series(c.n, false);
        let mut total = AlgebraElement::zero(th);
        for eu in &us {
            for ev in &vs {
                let e = normal_order_product(eu, ev).unwrap();
                let e_prime = normal_order_product(ev, eu).unwrap();
                let term = normal_order_product(&e_prime, &group_act(g, &e, c)).unwrap();
                total = total.try_add(&term).unwrap();
            }
        }
        total
    }

    #[test]
    fn completeness_sum_matches_naive_oracle() {
        let theta = angle(1.0);
        let c = params(2, 3, 1);
        for g in c.group() {
            let fast = completeness_sum(theta, &c, 8, &g).unwrap();
            let naive = naive_completeness(theta, &c, 8, &g);
            assert!(fast.distance(&naive) < 1e-13, "{g:?}: {}", fast.distance(&naive));
        }
    }

    #[test]
    fn trivial_cover_completeness() {
        let r = verify_covering_completeness(angle(0.3), &CoveringParams::trivial(), 512).unwrap();
        assert!(r.report.residual <= 1e-12, "{r:?}");
        assert_eq!(r.group_residuals.len(), 1);
    }

    #[test]
    fn completeness_rejects_small_cutoff() {
        assert!(verify_covering_completeness(angle(0.3), &params(2, 2, 0), 4).is_err());
    }

    fn tower() -> TowerSpec {
        TowerSpec::new(angle(1.0), vec![params(2, 1, 0), params(2, 3, 1), params(1, 2, 0)]).unwrap()
    }

    #[test]
    fn tower_json_round_trip() {
        let t = tower();
        let text = t.to_json();
        assert_eq!(
            text,
            r#"{"theta0":1.0,"levels":[{"m":2,"n":1,"k":0},{"m":2,"n":3,"k":1},{"m":1,"n":2,"k":0}]}"#
        );
        assert_eq!(TowerSpec::from_json(&text).unwrap(), t);
        assert!(TowerSpec::from_json(r#"{"theta0":1.0,"levels":[{"m":0,"n":1,"k":0}]}"#).is_err());
    }

    #[test]
    fn tower_angles_and_composites() {
        let t = tower();
        for k in 0..=t.depth() {
            let c = t.cumulative(k);
            assert_eq!(t.theta(k), theta_prime(t.theta0(), &c));
        }
        for from in 0..t.depth() {
            for to in from..=t.depth() {
                let c = t.composite(from, to);
                assert_eq!(t.theta(to), theta_prime(t.theta(from), &c));
            }
        }
        assert_eq!(t.cumulative(3), CoveringParams { m: 4, n: 6, k: 2 });
    }

    #[test]
    fn tower_quotients_commute_with_embedding() {
        let t = tower();
        let mut rg = rng::seeded(26);
        for k in 1..=t.depth() {
            let upper = t.cumulative(k);
            let lower = t.cumulative(k - 1);
            let rel = t.relative(k - 1);
            assert_eq!(upper.order(), lower.order() * rel.order());
            let a = rng::element(&mut rg, t.theta(k - 1), 4, 6);
            for g in upper.group() {
                let h = t.quotient(&g, k);
                let lhs = embed(&group_act(&h, &a, &lower), &rel);
                let rhs = group_act(&g, &embed(&a, &rel), &upper);
                assert!(lhs.distance(&rhs) < 1e-15, "level {k}, {g:?}");
            }
            let kernel = upper.group().filter(|g| t.quotient(g, k).is_identity()).count() as u64;
            assert_eq!(kernel, rel.order());
        }
    }

    #[test]
    fn descend_examples() {
        let t = tower();
        let mut rg = rng::seeded(27);
        let b = rng::element(&mut rg, t.theta(1), 3, 6);
        let rel = t.relative(1);
        let down = descend(&embed(&b, &rel), 1, &t).unwrap();
        assert!(down.distance(&b.scale(Complex64::new(rel.order() as f64, 0.0))) < 1e-14);
        assert!(descend(&AlgebraElement::monomial(t.theta(1), 1, 0), 0, &t).unwrap().is_zero());
        let top = rng::element(&mut rg, t.theta(3), 12, 200);
        let chained = descend(&descend(&top, 2, &t).unwrap(), 1, &t).unwrap();
        let direct = descend_to(&top, 3, 1, &t).unwrap();
        assert!(chained.distance(&direct) < 1e-13);
        assert!(descend_to(&top, 1, 3, &t).is_err());
    }

    #[test]
    fn coherence_of_descended_prefix() {
        let t = tower();
        let mut rg = rng::seeded(28);
        let top = rng::element(&mut rg, t.theta(3), 12, 200);
        let prefix = CoherentPrefix::from_top(top, &t).unwrap();
        let report = coherence_check(&prefix, &t).unwrap();
        assert_eq!(report.residual(), 0.0);
        assert!(report.pass());
        for level in 0..=3 {
            let bumped = prefix
                .element(level)
                .try_add(&AlgebraElement::term(t.theta(level), 0, 0, Complex64::new(1e-3, 0.0)))
                .unwrap();
            let corrupted = coherence_check(&prefix.with_replaced(level, bumped), &t).unwrap();
            assert_eq!(corrupted.flagged(), vec![level]);
        }
    }
}
