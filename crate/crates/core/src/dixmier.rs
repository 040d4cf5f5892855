//! Singular-value functionals `σ_n`, `σ_λ`, the Cesàro mean `τ_λ`, and the
//! noncommutative integral `∮T = lim τ_λ(T)` estimated by extrapolation.

use std::f64::consts::{E, TAU};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NcgError, Result};
use crate::report::AxiomReport;
use crate::torus::check_tau;

/// Number of `λ` samples in the upper decade used by the fit.
pub const FIT_SAMPLES: usize = 64;
/// Relative fit residual above which an estimate is flagged.
pub const POOR_FIT: f64 = 1e-4;
/// Tolerance of the covering-scaling ratio, relative to `mn`.
pub const SCALING_TOLERANCE: f64 = 0.05;

/// Where a stream of singular values came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    /// A finite-rank operator; values past the end are zero.
    Explicit,
    /// Eigenvalues of `|D|^{-power}` on the `(m, n)` covering lattice.
    DiracLattice { tau: Complex64, m: u32, n: u32, power: f64 },
}

/// Nonincreasing sequence of nonnegative singular values with prefix sums.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularValueStream {
    values: Vec<f64>,
    partial: Vec<f64>,
    provenance: Provenance,
}

impl SingularValueStream {
    fn build(values: Vec<f64>, provenance: Provenance) -> Self {
        let mut partial = Vec::with_capacity(values.len() + 1);
        let mut sum = 0.0;
        partial.push(0.0);
        for v in &values {
            sum += v;
            partial.push(sum);
        }
        SingularValueStream {
            values,
            partial,
            provenance,
        }
    }

    /// A finite-rank operator with the given nonincreasing singular values.
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(NcgError::invalid("stream", format!("{v} is not a nonnegative number")));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(NcgError::invalid("stream", "values are not nonincreasing"));
        }
        Ok(Self::build(values, Provenance::Explicit))
    }

    /// Singular values of the diagonal operator `diag(entries)`.
    pub fn from_diagonal(entries: &[f64]) -> Result<Self> {
        let mut values: Vec<f64> = entries.iter().map(|x| x.abs()).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        Self::explicit(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Whether values past the end are known to be zero.
    pub fn is_complete(&self) -> bool {
        self.provenance == Provenance::Explicit
    }

    /// Stream of `c·T` for `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(NcgError::invalid("scale", format!("{c} is not a nonnegative number")));
        }
        Ok(Self::build(
            self.values.iter().map(|v| v * c).collect(),
            self.provenance.clone(),
        ))
    }

    fn require(&self, count: usize) -> Result<()> {
        if count > self.values.len() && !self.is_complete() {
            return Err(NcgError::InsufficientStream {
                available: self.values.len(),
                required: count,
            });
        }
        Ok(())
    }

    /// The `i`-th largest value, 1-based.
    fn value(&self, i: usize) -> f64 {
        self.values.get(i - 1).copied().unwrap_or(0.0)
    }

    fn partial_sum(&self, n: usize) -> f64 {
        if n < self.partial.len() {
            self.partial[n]
        } else {
            *self.partial.last().expect("prefix sums start at zero")
        }
    }

    /// Writes `index,value` rows, 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, v)?;
        }
        Ok(())
    }
}

/// `σ_n = Σ_{i ≤ n} λ_i`.
pub fn sigma_n(sv: &SingularValueStream, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(NcgError::invalid("n", "must be at least 1"));
    }
    sv.require(n)?;
    Ok(sv.partial_sum(n))
}

/// Piecewise-linear interpolation `(1−t)σ_n + tσ_{n+1}` at `λ = n + t`, and
/// `λ‖T‖` for `0 < λ ≤ 1`.
pub fn sigma_lambda(sv: &SingularValueStream, lambda: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(NcgError::invalid("lambda", format!("{lambda} is not positive")));
    }
    if lambda <= 1.0 {
        sv.require(1)?;
        return Ok(lambda * sv.value(1));
    }
    let n = lambda.floor() as usize;
    let t = lambda - n as f64;
    if t == 0.0 {
        return sigma_n(sv, n);
    }
    sv.require(n + 1)?;
    Ok((1.0 - t) * sv.partial_sum(n) + t * sv.partial_sum(n + 1))
}

/// `τ_λ` together with a bound on its quadrature error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CesaroMean {
    pub lambda: f64,
    pub value: f64,
    pub error_bound: f64,
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// `∫_a^b σ_u/(u log u) du` on a piece where `σ_u = σ_n + (u − n)λ_{n+1}`.
/// The 5-point rule gives the value and its distance to the 3-point rule the
/// error estimate; pieces close to `u = 1` are split into panels.
fn piece(sigma: f64, slope: f64, n: f64, a: f64, b: f64) -> (f64, f64) {
    let f = |u: f64| (sigma + (u - n) * slope) / (u * u.ln());
    let panels = (32.0 / n).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let (mut value, mut error) = (0.0, 0.0);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        let half = 0.5 * width;
        let g5: f64 = GAUSS5.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
        let g3: f64 = GAUSS3.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half;
        value += g5;
        error += (g5 - g3).abs();
    }
    (value, error)
}

/// `τ_λ(T) = (1/log λ) ∫_e^λ (σ_u / log u) du/u` at every `λ` in `lambdas`.
pub fn cesaro_means(sv: &SingularValueStream, lambdas: &[f64]) -> Result<Vec<CesaroMean>> {
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= E)) {
        return Err(NcgError::invalid("lambda", format!("{l} is below e")));
    }
    let top = lambdas.iter().copied().fold(E, f64::max);
    sv.require(top.ceil() as usize + 1)?;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let mut out = vec![
        CesaroMean {
            lambda: 0.0,
            value: 0.0,
            error_bound: 0.0
        };
        lambdas.len()
    ];
    let (mut integral, mut error) = (0.0, 0.0);
    let mut start = E;
    let mut n = 2usize;
    for idx in order {
        let lambda = lambdas[idx];
        while (n + 1) as f64 <= lambda {
            let (v, e) = piece(sv.partial_sum(n), sv.value(n + 1), n as f64, start, (n + 1) as f64);
            integral += v;
            error += e;
            start = (n + 1) as f64;
            n += 1;
        }
        let (v, e) = if lambda > start {
            piece(sv.partial_sum(n), sv.value(n + 1), n as f64, start, lambda)
        } else {
            (0.0, 0.0)
        };
        let log = lambda.ln();
        out[idx] = CesaroMean {
            lambda,
            value: (integral + v) / log,
            error_bound: (error + e) / log,
        };
    }
    Ok(out)
}

pub fn tau_lambda(sv: &SingularValueStream, lambda: f64) -> Result<CesaroMean> {
    Ok(cesaro_means(sv, &[lambda])?[0])
}

/// Extrapolation model for `τ_λ` as `λ → ∞`, with `L = log λ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `c + (b + d·log L)/L`, exact for `σ_u = A log u + B`.
    #[default]
    LogLogarithmic,
    /// `c + b/L`.
    Logarithmic,
}

/// Extrapolated `∮T` with the fit that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DixmierEstimate {
    pub value: f64,
    pub fit_b: f64,
    pub fit_residual: f64,
    pub lambda_max: f64,
    pub fit_d: f64,
    #[serde(skip)]
    pub model: FitModel,
    #[serde(skip)]
    pub warning: bool,
}

/// Fits `τ_λ` over the upper decade `[λ_max/10, λ_max]` and returns the
/// constant term of the model; the residual is the RMS misfit.
pub fn ncint_estimate(sv: &SingularValueStream, lambda_max: f64, model: FitModel) -> Result<DixmierEstimate> {
    if !(lambda_max.is_finite() && lambda_max >= 10.0 * E) {
        return Err(NcgError::invalid("lambda_max", format!("{lambda_max} is below 10e")));
    }
    let lambdas: Vec<f64> = (0..FIT_SAMPLES)
        .map(|j| lambda_max * 10f64.powf(-(j as f64) / (FIT_SAMPLES - 1) as f64))
        .collect();
    let means = cesaro_means(sv, &lambdas)?;
    let cols = match model {
        FitModel::LogLogarithmic => 3,
        FitModel::Logarithmic => 2,
    };
    let design = DMatrix::from_fn(FIT_SAMPLES, cols, |i, j| {
        let l = lambdas[i].ln();
        match j {
            0 => 1.0,
            1 => 1.0 / l,
            _ => l.ln() / l,
        }
    });
    let rhs = DVector::from_iterator(FIT_SAMPLES, means.iter().map(|m| m.value));
    let coeffs = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| NcgError::invalid("fit", e))?;
    let misfit = &design * &coeffs - &rhs;
    let fit_residual = (misfit.norm_squared() / FIT_SAMPLES as f64).sqrt();
    let value = coeffs[0];
    let scale = rhs.amax().max(f64::MIN_POSITIVE);
    Ok(DixmierEstimate {
        value,
        fit_b: coeffs[1],
        fit_residual,
        lambda_max,
        fit_d: if cols == 3 { coeffs[2] } else { 0.0 },
        model,
        warning: fit_residual > POOR_FIT * scale,
    })
}

/// Lattice points `(r, s) ≠ 0` with `|r/m + τs/n|² ≤ radius²`, as
/// `(|r/m + τs/n|², r, s)` sorted by norm and then by index.
pub fn lattice_points(tau: Complex64, m: u32, n: u32, radius: f64) -> Vec<(f64, i64, i64)> {
    let (mf, nf) = (f64::from(m), f64::from(n));
    let s_max = (radius * nf / tau.im.abs()).floor() as i64;
    let mut points: Vec<(f64, i64, i64)> = (-s_max..=s_max)
        .into_par_iter()
        .flat_map_iter(|s| {
            let y = tau.im * s as f64 / nf;
            let x0 = -tau.re * s as f64 / nf;
            let rem = radius * radius - y * y;
            let half = rem.max(0.0).sqrt();
            let lo = (mf * (x0 - half)).floor() as i64 - 1;
            let hi = (mf * (x0 + half)).ceil() as i64 + 1;
            (lo..=hi).filter_map(move |r| {
                let x = r as f64 / mf + tau.re * s as f64 / nf;
                let norm = x * x + y * y;
                ((r, s) != (0, 0) && norm <= radius * radius).then_some((norm, r, s))
            })
        })
        .collect();
    points.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    points
}

/// The `count` largest eigenvalues of `|D|^{-power}` on the `(m, n)` covering
/// lattice `2π|r/m + τs/n|`, kernel excluded, each with spinor multiplicity 2.
pub fn dirac_inverse_power_stream(
    tau: Complex64,
    m: u32,
    n: u32,
    power: f64,
    count: usize,
) -> Result<SingularValueStream> {
    check_tau(tau)?;
    if m == 0 || n == 0 {
        return Err(NcgError::invalid("covering", format!("m = {m}, n = {n} must be positive")));
    }
    if !(power.is_finite() && power >= 1.0) {
        return Err(NcgError::invalid("power", format!("{power} is below 1")));
    }
    let needed = count.div_ceil(2);
    let density = f64::from(m) * f64::from(n) / tau.im.abs();
    let mut radius = ((needed as f64 + 16.0) / (std::f64::consts::PI * density)).sqrt() * 1.05 + 1.0 / f64::from(m.min(n));
    let points = loop {
        let points = lattice_points(tau, m, n, radius);
        if points.len() >= needed {
            break points;
        }
        radius *= 1.2;
    };
    let values = points
        .iter()
        .take(needed)
        .flat_map(|(norm, _, _)| {
            let v = (TAU * TAU * norm).powf(-power / 2.0);
            [v, v]
        })
        .take(count)
        .collect();
    Ok(SingularValueStream::build(
        values,
        Provenance::DiracLattice { tau, m, n, power },
    ))
}

/// Comparison of `∮|D̃|⁻²` on the `(m, n)` cover with `mn·∮|D|⁻²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub report: AxiomReport,
    pub base: DixmierEstimate,
    pub cover: DixmierEstimate,
    pub ratio: f64,
    pub warning: bool,
}

pub fn verify_covering_scaling(tau: Complex64, m: u32, n: u32, lambda_max: f64) -> Result<ScalingReport> {
    if !(lambda_max.is_finite() && lambda_max >= 10.0 * E) {
        return Err(NcgError::invalid("lambda_max", format!("{lambda_max} is below 10e")));
    }
    let count = lambda_max.ceil() as usize + 2;
    let estimate = |m, n| -> Result<DixmierEstimate> {
        let sv = dirac_inverse_power_stream(tau, m, n, 2.0, count)?;
        ncint_estimate(&sv, lambda_max, FitModel::default())
    };
    let (base, cover) = rayon::join(|| estimate(1, 1), || estimate(m, n));
    let (base, cover) = (base?, cover?);
    let ratio = cover.value / base.value;
    let order = f64::from(m) * f64::from(n);
    let warning = base.warning || cover.warning;
    Ok(ScalingReport {
        report: AxiomReport::new(
            format!("integral covering scaling (m={m}, n={n})"),
            (ratio / order - 1.0).abs(),
            SCALING_TOLERANCE,
            count as u64,
            0,
        ),
        base,
        cover,
        ratio,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn diag321() -> SingularValueStream {
        SingularValueStream::explicit(vec![3.0, 2.0, 1.0]).unwrap()
    }

    #[test]
    fn sigma_examples() {
        let sv = diag321();
        assert_eq!(sigma_n(&sv, 2).unwrap(), 5.0);
        assert_eq!(sigma_n(&sv, 1).unwrap(), 3.0);
        assert_eq!(sigma_n(&sv, 7).unwrap(), 6.0);
        assert_eq!(sigma_lambda(&sv, 2.5).unwrap(), 5.5);
        assert_eq!(sigma_lambda(&sv, 0.5).unwrap(), 1.5);
        assert_eq!(sigma_lambda(&sv, 3.0).unwrap(), 6.0);
        let zero = SingularValueStream::explicit(vec![]).unwrap();
        assert_eq!(sigma_n(&zero, 3).unwrap(), 0.0);
        assert!(sigma_n(&sv, 0).is_err());
        assert!(sigma_lambda(&sv, 0.0).is_err());
        assert!(SingularValueStream::explicit(vec![1.0, 2.0]).is_err());
        assert!(SingularValueStream::explicit(vec![-1.0]).is_err());
    }

    #[test]
    fn cesaro_mean_basics() {
        let zero = SingularValueStream::explicit(vec![]).unwrap();
        assert_eq!(tau_lambda(&zero, 100.0).unwrap().value, 0.0);
        let sv = SingularValueStream::explicit((1..=500).map(|i| 1.0 / f64::from(i)).collect()).unwrap();
        let a = tau_lambda(&sv, 300.0).unwrap();
        let b = tau_lambda(&sv.scaled(2.5).unwrap(), 300.0).unwrap();
        assert!((b.value - 2.5 * a.value).abs() < 1e-12);
        assert!(a.error_bound < 1e-6);
        assert!(tau_lambda(&sv, 2.0).is_err());
        let lattice = dirac_inverse_power_stream(Complex64::new(0.0, 1.0), 1, 1, 2.0, 100).unwrap();
        assert!(matches!(
            tau_lambda(&lattice, 1000.0),
            Err(NcgError::InsufficientStream { .. })
        ));
    }

    #[test]
    fn cesaro_mean_of_constant_sigma() {
        // σ_u = 1 for u ≥ 1 gives τ_λ = log log λ / log λ.
        let sv = SingularValueStream::explicit(vec![1.0]).unwrap();
        for lambda in [10.0, 123.4, 5000.0] {
            let l: f64 = f64::ln(lambda);
            assert!((tau_lambda(&sv, lambda).unwrap().value - l.ln() / l).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_and_trace_class_estimates() {
        let harmonic =
            SingularValueStream::explicit((1..=200_002).map(|i| 1.0 / f64::from(i)).collect()).unwrap();
        let est = ncint_estimate(&harmonic, 2e5, FitModel::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-3, "{est:?}");
        assert!(!est.warning);
        let triple = ncint_estimate(&harmonic.scaled(3.0).unwrap(), 2e5, FitModel::default()).unwrap();
        assert!((triple.value - 3.0 * est.value).abs() < 1e-9);
        let geometric = SingularValueStream::explicit((0..60).map(|i| 0.5f64.powi(i)).collect()).unwrap();
        assert!(ncint_estimate(&geometric, 2e5, FitModel::default()).unwrap().value.abs() < 1e-6);
    }

    #[test]
    fn nearest_lattice_shell() {
        let sv = dirac_inverse_power_stream(Complex64::new(0.0, 1.0), 1, 1, 2.0, 20).unwrap();
        let top = (2.0 * PI).powi(-2);
        assert!(sv.values()[..8].iter().all(|v| (v - top).abs() < 1e-15 * top));
        assert!(sv.values()[8] < top * 0.9);
        assert!(sv.values().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn extending_a_stream_keeps_its_prefix() {
        let tau = Complex64::new(0.5, 1.0);
        let short = dirac_inverse_power_stream(tau, 2, 3, 2.0, 1001).unwrap();
        let long = dirac_inverse_power_stream(tau, 2, 3, 2.0, 20000).unwrap();
        assert_eq!(short.values(), &long.values()[..1001]);
    }

    #[test]
    fn covering_lattice_is_a_rescaled_base_lattice() {
        // |r/m + τ s/n| = |r + (τm/n) s| / m.
        let tau = Complex64::new(0.0, 1.3);
        let (m, n) = (2u32, 3u32);
        let cover = dirac_inverse_power_stream(tau, m, n, 2.0, 4000).unwrap();
        let base = dirac_inverse_power_stream(tau * f64::from(m) / f64::from(n), 1, 1, 2.0, 4000).unwrap();
        for (a, b) in cover.values().iter().zip(base.values()) {
            assert!((a - b * f64::from(m * m)).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn trivial_cover_scales_by_one() {
        let r = verify_covering_scaling(Complex64::new(0.0, 1.0), 1, 1, 1e4).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.report.residual, 0.0);
    }

    #[test]
    fn estimate_json_fields() {
        let est = DixmierEstimate {
            value: 0.5,
            fit_b: -1.0,
            fit_residual: 1e-9,
            lambda_max: 1e6,
            fit_d: 0.25,
            model: FitModel::default(),
            warning: false,
        };
        assert_eq!(
            serde_json::to_string(&est).unwrap(),
            r#"{"value":0.5,"fit_b":-1.0,"fit_residual":1e-9,"lambda_max":1000000.0,"fit_d":0.25}"#
        );
    }

    #[test]
    fn csv_output() {
        let mut buf = Vec::new();
        diag321().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,value\n1,3\n2,2\n3,1\n");
    }
}
