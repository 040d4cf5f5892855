//! Smooth partitions of unity on the circle, their lifts to finite covers,
//! Fourier data for functional calculus, and the fiberwise `L²` module.
//!
//! A function on the `n`-fold cover lives on `[0, 2πn)` and is sampled with
//! `P` points per sheet. Its Fourier coefficients `c_j` are taken with respect
//! to `e^{ijx/n}`, so `c_j` is the coefficient of `u_n^j` when the function is
//! evaluated on the generator of the covering algebra.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{NcgError, Result};
use crate::report::AxiomReport;

/// Smallest admissible number of samples per sheet.
pub const MIN_GRID: usize = 64;
/// Tolerance of the pointwise covering identities.
pub const CIRC_SUM_TOLERANCE: f64 = 1e-12;
/// Fourier tails above this level raise the cutoff warning.
pub const TAIL_WARNING: f64 = 1e-9;

/// Sampled function on the `sheets`-fold cover of the circle together with
/// its truncated Fourier series.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleFunction {
    sheets: u32,
    samples: Vec<Complex64>,
    cutoff: usize,
    coefficients: Vec<Complex64>,
    tail: f64,
    smooth: bool,
}

fn dft(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    plan.process(data);
}

impl CircleFunction {
    /// `cutoff` is in base-circle frequency units: coefficients with
    /// `|j| ≤ sheets·cutoff` are kept.
    pub fn from_samples(sheets: u32, samples: Vec<Complex64>, cutoff: usize, smooth: bool) -> Result<Self> {
        if sheets == 0 {
            return Err(NcgError::invalid("sheets", "must be positive"));
        }
        let s = sheets as usize;
        if !samples.len().is_multiple_of(s) {
            return Err(NcgError::Resolution(format!(
                "{} samples do not split into {sheets} sheets",
                samples.len()
            )));
        }
        let per_sheet = samples.len() / s;
        if per_sheet < MIN_GRID {
            return Err(NcgError::Resolution(format!(
                "{per_sheet} samples per sheet is below the minimum of {MIN_GRID}"
            )));
        }
        if cutoff > per_sheet / 2 {
            return Err(NcgError::Resolution(format!(
                "cutoff {cutoff} exceeds half the grid ({per_sheet})"
            )));
        }
        let len = samples.len();
        let mut spectrum = samples.clone();
        dft(&mut spectrum, false);
        let scale = 1.0 / len as f64;
        let keep = (s * cutoff) as i64;
        let coefficients = (-keep..=keep)
            .map(|j| spectrum[j.rem_euclid(len as i64) as usize] * scale)
            .collect();
        let tail = (0..len)
            .filter(|&i| {
                let j = if i <= len / 2 { i as i64 } else { i as i64 - len as i64 };
                j.abs() > keep
            })
            .map(|i| (spectrum[i] * scale).norm())
            .fold(0.0, f64::max);
        Ok(CircleFunction {
            sheets,
            samples,
            cutoff,
            coefficients,
            tail,
            smooth,
        })
    }

    /// Samples `f` at `x_k = 2πk/P` for `k < P·sheets`.
    pub fn from_fn<F>(sheets: u32, per_sheet: usize, cutoff: usize, smooth: bool, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Complex64,
    {
        let samples = (0..per_sheet * sheets as usize)
            .map(|k| f(TAU * k as f64 / per_sheet as f64))
            .collect();
        Self::from_samples(sheets, samples, cutoff, smooth)
    }

    pub fn sheets(&self) -> u32 {
        self.sheets
    }

    pub fn per_sheet(&self) -> usize {
        self.samples.len() / self.sheets as usize
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// Largest discarded coefficient magnitude.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    /// Largest retained frequency index, `sheets·cutoff`.
    pub fn max_frequency(&self) -> i64 {
        (self.sheets as usize * self.cutoff) as i64
    }

    pub fn coefficient(&self, j: i64) -> Complex64 {
        let k = self.max_frequency();
        if j.abs() > k {
            return Complex64::new(0.0, 0.0);
        }
        self.coefficients[(j + k) as usize]
    }

    /// Retained coefficients as `(j, c_j)` pairs, ascending in `j`.
    pub fn coefficients(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let k = self.max_frequency();
        self.coefficients.iter().enumerate().map(move |(i, c)| (i as i64 - k, *c))
    }

    /// `max_x |f(x) − Σ_{|j| ≤ sheets·K} c_j e^{ijx/sheets}|` over the grid.
    pub fn reconstruction_error(&self) -> f64 {
        let len = self.samples.len();
        let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
        for (j, c) in self.coefficients() {
            spectrum[j.rem_euclid(len as i64) as usize] = c;
        }
        dft(&mut spectrum, true);
        spectrum
            .iter()
            .zip(&self.samples)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Deck transformation `(g·f)(x) = f(x + 2πg)`.
    pub fn translate(&self, g: u32) -> CircleFunction {
        let len = self.samples.len();
        let shift = (g % self.sheets) as usize * self.per_sheet();
        let samples = (0..len).map(|k| self.samples[(k + shift) % len]).collect();
        let coefficients = self
            .coefficients()
            .map(|(j, c)| c * Complex64::from_polar(1.0, TAU * (j * i64::from(g)) as f64 / f64::from(self.sheets)))
            .collect();
        CircleFunction {
            samples,
            coefficients,
            ..self.clone()
        }
    }

    fn same_grid(&self, other: &CircleFunction) -> Result<()> {
        if self.sheets != other.sheets || self.samples.len() != other.samples.len() {
            return Err(NcgError::invalid("grid", "functions live on different grids"));
        }
        Ok(())
    }

    fn with_samples(&self, sheets: u32, samples: Vec<Complex64>) -> Result<Self> {
        Self::from_samples(sheets, samples, self.cutoff, self.smooth)
    }
}

/// `S(t) = f(t) / (f(t) + f(1−t))` with `f(t) = e^{-1/t}` for `t > 0`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    f(t) / (f(t) + f(1.0 - t))
}

/// Transition `h: S¹ → [0,1]` with `h = 1` off `U₁ = (−π−½, ½)` and `h = 0`
/// off `U₂ = (−½, π+½)`; `x` is taken in `[0, 2π)`.
pub fn transition(x: f64) -> f64 {
    let x = x.rem_euclid(TAU);
    if x <= FRAC_PI_2 {
        smooth_step(x + 0.5)
    } else if x <= 3.0 * FRAC_PI_2 {
        smooth_step(PI + 0.5 - x)
    } else {
        smooth_step(x - TAU + 0.5)
    }
}

/// `e₁ = cos(πh/2)` written as `sin(π(1−h)/2)` so that it vanishes exactly
/// where `h = 1`.
pub fn e1(x: f64) -> f64 {
    (FRAC_PI_2 * (1.0 - transition(x))).sin()
}

pub fn e2(x: f64) -> f64 {
    (FRAC_PI_2 * transition(x)).sin()
}

/// Smooth partition `a₁ + a₂ = 1` subordinate to `{U₁, U₂}` with square roots
/// `eᵢ`, `e₁² + e₂² = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionPair {
    pub a1: CircleFunction,
    pub a2: CircleFunction,
    pub e1: CircleFunction,
    pub e2: CircleFunction,
}

pub fn build_partition(grid: usize, cutoff: usize) -> Result<PartitionPair> {
    if grid < MIN_GRID {
        return Err(NcgError::Resolution(format!(
            "grid {grid} cannot resolve the supports (needs at least {MIN_GRID})"
        )));
    }
    let real = |v: f64| Complex64::new(v, 0.0);
    Ok(PartitionPair {
        a1: CircleFunction::from_fn(1, grid, cutoff, true, |x| real(e1(x).powi(2)))?,
        a2: CircleFunction::from_fn(1, grid, cutoff, true, |x| real(e2(x).powi(2)))?,
        e1: CircleFunction::from_fn(1, grid, cutoff, true, |x| real(e1(x)))?,
        e2: CircleFunction::from_fn(1, grid, cutoff, true, |x| real(e2(x)))?,
    })
}

impl PartitionPair {
    /// Replaces `e₂` by `factor·e₂` (and `a₂` accordingly).
    pub fn with_scaled_e2(&self, factor: f64) -> Result<Self> {
        let scaled: Vec<Complex64> = self.e2.samples.iter().map(|z| z * factor).collect();
        let squared: Vec<Complex64> = scaled.iter().map(|z| z * z).collect();
        Ok(PartitionPair {
            a1: self.a1.clone(),
            a2: self.a2.with_samples(1, squared)?,
            e1: self.e1.clone(),
            e2: self.e2.with_samples(1, scaled)?,
        })
    }

    fn member(&self, i: u8) -> &CircleFunction {
        if i == 1 {
            &self.e1
        } else {
            &self.e2
        }
    }

    pub fn grid(&self) -> usize {
        self.e1.samples.len()
    }
}

/// Family `e^n_ι`, `ι = (g, i) ∈ Z_n × {1, 2}`, on the `n`-fold cover.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedFamily {
    fold: u32,
    members: Vec<((u32, u8), CircleFunction)>,
}

impl LiftedFamily {
    pub fn fold(&self) -> u32 {
        self.fold
    }

    pub fn members(&self) -> &[((u32, u8), CircleFunction)] {
        &self.members
    }

    pub fn member(&self, g: u32, i: u8) -> Option<&CircleFunction> {
        self.members.iter().find(|(idx, _)| *idx == (g, i)).map(|(_, f)| f)
    }
}

/// Lifts `e₁, e₂` to the sheet-0 preimages of `U₁, U₂` in the `n`-fold cover
/// and adds their deck translates.
pub fn lift_to_cover(pair: &PartitionPair, n: u32) -> Result<LiftedFamily> {
    if n == 0 {
        return Err(NcgError::invalid("fold", "must be positive"));
    }
    let p = pair.grid();
    let cutoff = pair.e1.cutoff;
    let last = n as usize - 1;
    let mut members = Vec::with_capacity(2 * n as usize);
    for i in [1u8, 2] {
        let base = pair.member(i);
        // Preimage of U₁ = (−π−½, ½) on sheet 0 is [0, ½) on sheet 0 plus
        // (π−½, 2π) on the last sheet; U₂ = (−½, π+½) likewise.
        let samples: Vec<Complex64> = (0..p * n as usize)
            .map(|k| {
                let (sheet, kb) = (k / p, k % p);
                let x = TAU * kb as f64 / p as f64;
                let inside = if i == 1 {
                    (sheet == 0 && x < 0.5) || (sheet == last && x > PI - 0.5)
                } else {
                    (sheet == 0 && x < PI + 0.5) || (sheet == last && x > TAU - 0.5)
                };
                if inside {
                    base.samples[kb]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let lifted = CircleFunction::from_samples(n, samples, cutoff, base.smooth)?;
        for g in 0..n {
            members.push(((g, i), lifted.translate(g)));
        }
    }
    Ok(LiftedFamily { fold: n, members })
}

/// Residual of `Σ_ι e^n_ι·(g e^n_ι) = δ_{g,e}` over all `g ∈ Z_n`, as the
/// largest pointwise deviation.
pub fn verify_circ_sum(family: &LiftedFamily) -> AxiomReport {
    let residuals = circ_sum_residuals(family);
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let grid = family.members.first().map(|(_, f)| f.per_sheet()).unwrap_or(0);
    AxiomReport::new(
        format!("circle covering identity, fold {}", family.fold),
        worst,
        CIRC_SUM_TOLERANCE,
        grid as u64,
        0,
    )
}

/// Pointwise deviation for each group element `g = 0..n`.
pub fn circ_sum_residuals(family: &LiftedFamily) -> Vec<f64> {
    (0..family.fold)
        .map(|g| {
            let len = family.members[0].1.samples.len();
            let mut total = vec![Complex64::new(0.0, 0.0); len];
            for (_, f) in &family.members {
                let shifted = f.translate(g);
                for (t, (a, b)) in total.iter_mut().zip(f.samples.iter().zip(&shifted.samples)) {
                    *t += a * b;
                }
            }
            let target = if g == 0 { 1.0 } else { 0.0 };
            total
                .iter()
                .map(|z| (z - Complex64::new(target, 0.0)).norm())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Truncated Fourier series `f(u) = Σ c_j u^j` with its measured tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub coefficients: BTreeMap<i64, Complex64>,
    pub tail: f64,
    pub warning: bool,
}

/// Coefficients `c_j`, `|j| ≤ sheets·cutoff`, for evaluating `f` on the
/// generator of the `sheets`-fold covering algebra.
pub fn functional_calculus_coeffs(f: &CircleFunction, cutoff: usize) -> Result<FourierSeries> {
    let g = if cutoff == f.cutoff {
        f.clone()
    } else {
        CircleFunction::from_samples(f.sheets, f.samples.clone(), cutoff, f.smooth)?
    };
    Ok(FourierSeries {
        coefficients: g.coefficients().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect(),
        tail: g.tail,
        warning: g.tail > TAIL_WARNING,
    })
}

/// `⟨ξ, η⟩(x) = Σ_{x̃ over x} conj(ξ(x̃)) η(x̃)`, a function on the base circle.
pub fn l2_module_inner(xi: &CircleFunction, eta: &CircleFunction) -> Result<CircleFunction> {
    xi.same_grid(eta)?;
    let p = xi.per_sheet();
    let samples = (0..p)
        .map(|k| {
            (0..xi.sheets as usize)
                .map(|sheet| xi.samples[sheet * p + k].conj() * eta.samples[sheet * p + k])
                .sum()
        })
        .collect();
    CircleFunction::from_samples(1, samples, xi.cutoff, xi.smooth && eta.smooth)
}

/// Fiber sum over the relative covering group `Z_fold`: a function on the
/// `s`-fold cover descends to the `s/fold`-fold cover.
pub fn descend_function(f: &CircleFunction, relative_fold: u32) -> Result<CircleFunction> {
    if relative_fold == 0 || !f.sheets.is_multiple_of(relative_fold) {
        return Err(NcgError::invalid(
            "fold",
            format!("{relative_fold} does not divide the {} sheets", f.sheets),
        ));
    }
    let lower = f.sheets / relative_fold;
    let span = f.per_sheet() * lower as usize;
    let samples = (0..span)
        .map(|k| (0..relative_fold as usize).map(|j| f.samples[k + j * span]).sum())
        .collect();
    f.with_samples(lower, samples)
}

/// Places `f` on sheet `sheet` of its `fold`-fold cover, zero elsewhere.
pub fn lift_to_sheet(f: &CircleFunction, fold: u32, sheet: u32) -> Result<CircleFunction> {
    if sheet >= fold {
        return Err(NcgError::invalid("sheet", format!("{sheet} is not below the fold {fold}")));
    }
    let span = f.samples.len();
    let mut samples = vec![Complex64::new(0.0, 0.0); span * fold as usize];
    samples[sheet as usize * span..(sheet as usize + 1) * span].copy_from_slice(&f.samples);
    f.with_samples(f.sheets * fold, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn partition_identities() {
        for grid in [64, 100, 1024] {
            let pair = build_partition(grid, 16).unwrap();
            for k in 0..grid {
                let s = pair.e1.samples[k].norm_sqr() + pair.e2.samples[k].norm_sqr();
                assert!((s - 1.0).abs() < 1e-12);
                assert!((pair.a1.samples[k] + pair.a2.samples[k] - 1.0).norm() < 1e-12);
            }
        }
        assert!(matches!(build_partition(32, 8), Err(NcgError::Resolution(_))));
        assert!(matches!(build_partition(64, 40), Err(NcgError::Resolution(_))));
    }

    #[test]
    fn supports_follow_the_open_cover() {
        // e₂ vanishes off U₂ = (−½, π+½), e.g. at −π/2.
        assert_eq!(e2(-FRAC_PI_2), 0.0);
        assert_eq!(e2(PI + 0.6), 0.0);
        // e₁ vanishes off U₁ = (−π−½, ½), e.g. at π/2.
        assert_eq!(e1(FRAC_PI_2), 0.0);
        assert!(e1(-FRAC_PI_2) > 0.99);
        assert!(e2(PI) > 0.0 && e1(PI) > 0.0);
    }

    #[test]
    fn partition_fourier_tail() {
        let pair = build_partition(4096, 256).unwrap();
        assert!(pair.e1.tail() < 1e-9, "{}", pair.e1.tail());
        assert!(pair.e2.tail() < 1e-9);
        assert!(pair.e1.reconstruction_error() < 1e-9);
        assert!(pair.e2.reconstruction_error() < 1e-9);
    }

    #[test]
    fn functional_calculus_of_simple_functions() {
        let one = CircleFunction::from_fn(1, 64, 8, true, |_| real(1.0)).unwrap();
        let series = functional_calculus_coeffs(&one, 8).unwrap();
        assert_eq!(series.coefficients.len(), 1);
        assert!((series.coefficients[&0] - 1.0).norm() < 1e-15);
        let cos = CircleFunction::from_fn(1, 64, 8, true, |x| real(x.cos())).unwrap();
        let series = functional_calculus_coeffs(&cos, 8).unwrap();
        assert!((series.coefficients[&1] - 0.5).norm() < 1e-15);
        assert!((series.coefficients[&-1] - 0.5).norm() < 1e-15);
        assert!(series.coefficients.iter().filter(|(_, c)| c.norm() > 1e-15).count() == 2);
    }

    #[test]
    fn trivial_lift_is_the_pair() {
        let pair = build_partition(256, 32).unwrap();
        let fam = lift_to_cover(&pair, 1).unwrap();
        assert_eq!(fam.member(0, 1).unwrap().samples(), pair.e1.samples());
        assert_eq!(fam.member(0, 2).unwrap().samples(), pair.e2.samples());
        assert_eq!(verify_circ_sum(&fam).residual, circ_sum_residuals(&fam)[0]);
        assert!(verify_circ_sum(&fam).pass);
    }

    #[test]
    fn translates_have_disjoint_supports() {
        let pair = build_partition(512, 32).unwrap();
        for n in 2..=8 {
            let fam = lift_to_cover(&pair, n).unwrap();
            for ((_, _), f) in fam.members() {
                for g in 1..n {
                    let moved = f.translate(g);
                    let overlap = f
                        .samples()
                        .iter()
                        .zip(moved.samples())
                        .filter(|(a, b)| a.norm() > 0.0 && b.norm() > 0.0)
                        .count();
                    assert_eq!(overlap, 0, "fold {n}, g {g}");
                }
            }
            let total: Vec<f64> = (0..fam.members()[0].1.samples().len())
                .map(|k| fam.members().iter().map(|(_, f)| f.samples()[k].norm_sqr()).sum())
                .collect();
            assert!(total.iter().all(|t| (t - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn negative_control_is_flagged() {
        let pair = build_partition(1024, 64).unwrap().with_scaled_e2(0.5).unwrap();
        let fam = lift_to_cover(&pair, 3).unwrap();
        let r = verify_circ_sum(&fam);
        assert!(!r.pass);
        assert!((r.residual - 0.75).abs() < 1e-12, "{}", r.residual);
    }

    #[test]
    fn module_inner_of_partition_lifts() {
        let pair = build_partition(256, 32).unwrap();
        let n = 3;
        let fam = lift_to_cover(&pair, n).unwrap();
        let mut over_all = vec![Complex64::new(0.0, 0.0); 256];
        for g in 0..n {
            let mut over_i = vec![Complex64::new(0.0, 0.0); 256];
            for i in [1u8, 2] {
                let f = fam.member(g, i).unwrap();
                let inner = l2_module_inner(f, f).unwrap();
                for k in 0..256 {
                    over_i[k] += inner.samples()[k];
                    over_all[k] += inner.samples()[k];
                }
            }
            assert!(over_i.iter().all(|z| (z - 1.0).norm() < 1e-12));
        }
        assert!(over_all.iter().all(|z| (z - f64::from(n)).norm() < 1e-12));
        let a = fam.member(1, 1).unwrap();
        let b = fam.member(0, 2).unwrap();
        let ab = l2_module_inner(a, b).unwrap();
        let ba = l2_module_inner(b, a).unwrap();
        assert!(ab.samples().iter().zip(ba.samples()).all(|(x, y)| *x == y.conj()));
    }

    #[test]
    fn descent_round_trips_and_composes() {
        let bump = CircleFunction::from_fn(1, 128, 16, true, |x| real((x - 2.0).cos().max(0.0).powi(3))).unwrap();
        let lifted = lift_to_sheet(&bump, 4, 2).unwrap();
        assert_eq!(descend_function(&lifted, 4).unwrap().samples(), bump.samples());
        let symmetric = CircleFunction::from_fn(3, 128, 16, true, |x| real((x.sin()).powi(2))).unwrap();
        let down = descend_function(&symmetric, 3).unwrap();
        for (d, s) in down.samples().iter().zip(symmetric.samples()) {
            assert!((d - 3.0 * s).norm() < 1e-12);
        }
        let top = CircleFunction::from_fn(6, 128, 16, true, |x| Complex64::from_polar(1.0, x / 6.0) * (x / 6.0).sin()).unwrap();
        let two_step = descend_function(&descend_function(&top, 2).unwrap(), 3).unwrap();
        let one_step = descend_function(&top, 6).unwrap();
        for (a, b) in two_step.samples().iter().zip(one_step.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(descend_function(&top, 4).is_err());
    }
}
