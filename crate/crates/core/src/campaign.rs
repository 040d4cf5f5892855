//! Verification campaigns: JSON-configured lists of checks dispatched to the
//! module entry points, with a versioned machine-readable report.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle::{build_partition, descend_function, l2_module_inner, lift_to_cover, verify_circ_sum, CircleFunction};
use crate::coverings::{
    coherence_check, embed, limit_inner_estimate, module_inner, orthogonal_split, partition_lift_element,
    theta_prime, verify_covering_completeness, CoherentPrefix, CoveringParams, Generator, Normalization,
    TowerConfig, TowerSpec,
};
use crate::dixmier::{
    dirac_inverse_power_stream, ncint_estimate, sigma_lambda, sigma_n, verify_covering_scaling, FitModel,
    SingularValueStream,
};
use crate::error::{NcgError, Result};
use crate::report::AxiomReport;
use crate::rng;
use crate::spectral::{
    check_first_order, check_real_structure, check_sign_table, dirac_spectrum, local_covering_check_theta0,
    seminorm, CheckConfig, DiracParams, GnsWindow,
};
use crate::torus::{adjoint, normal_order_product, AlgebraElement, DeformationAngle, Monomial};

pub const SCHEMA: &str = "ncg-report/1";
pub const PRESETS: [&str; 2] = ["paper-identities", "extended"];

/// Registered verifications.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    DiracSpectrum,
    FirstOrder,
    RealStructure,
    SignTable,
    TorusCompleteness,
    CircleIdentity,
    CircleNegativeControl,
    ModuleDecomposition,
    EmbeddingHomomorphism,
    Integral,
    IntegralScaling,
    CoherentTower,
    DixmierFunctionals,
    LocalCovering,
    Seminorms,
}

/// One check and its parameters; unset parameters take per-check defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub check: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_im: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tower: Option<TowerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl CheckSpec {
    pub fn new(check: CheckKind) -> Self {
        CheckSpec {
            check,
            theta: None,
            tau_re: None,
            tau_im: None,
            m: None,
            n: None,
            k: None,
            tower: None,
            window: None,
            guard: None,
            grid: None,
            cutoff: None,
            lambda_max: None,
            fold: None,
            depth: None,
            count: None,
            support: None,
            seed: None,
            tolerance: None,
        }
    }

    pub fn theta_value(&self) -> f64 {
        self.theta.unwrap_or(match self.check {
            CheckKind::LocalCovering => 0.0,
            _ => 1.0,
        })
    }

    pub fn theta(&self) -> Result<DeformationAngle> {
        DeformationAngle::new(self.theta_value())
    }

    pub fn tau(&self) -> Complex64 {
        Complex64::new(self.tau_re.unwrap_or(0.0), self.tau_im.unwrap_or(1.0))
    }

    pub fn orders(&self) -> (u32, u32) {
        let (m, n) = match self.check {
            CheckKind::TorusCompleteness
            | CheckKind::IntegralScaling
            | CheckKind::ModuleDecomposition
            | CheckKind::EmbeddingHomomorphism => (2, 3),
            CheckKind::LocalCovering | CheckKind::CoherentTower => (2, 1),
            _ => (1, 1),
        };
        (self.m.unwrap_or(m), self.n.unwrap_or(n))
    }

    pub fn covering(&self) -> Result<CoveringParams> {
        let (m, n) = self.orders();
        CoveringParams::new(m, n, self.k.unwrap_or(0))
    }

    pub fn window(&self) -> Result<GnsWindow> {
        let (radius, guard) = match self.check {
            CheckKind::FirstOrder => (32, 8),
            CheckKind::RealStructure => (16, 8),
            CheckKind::Seminorms => (16, 3),
            _ => (16, 0),
        };
        GnsWindow::new(self.window.unwrap_or(radius), self.guard.unwrap_or(guard))
    }

    pub fn grid(&self) -> usize {
        self.grid.unwrap_or(match self.check {
            CheckKind::LocalCovering => 256,
            _ => 4096,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff.unwrap_or(match self.check {
            CheckKind::CircleIdentity | CheckKind::CircleNegativeControl => self.grid() / 8,
            _ => 256,
        })
    }

    pub fn count(&self) -> usize {
        self.count.unwrap_or(match self.check {
            CheckKind::FirstOrder => 100,
            CheckKind::RealStructure => 20,
            CheckKind::ModuleDecomposition => 500,
            CheckKind::EmbeddingHomomorphism | CheckKind::DixmierFunctionals => 1000,
            CheckKind::Seminorms => 3,
            _ => 1,
        })
    }

    pub fn support(&self) -> i64 {
        i64::from(self.support.unwrap_or(match self.check {
            CheckKind::ModuleDecomposition => 6,
            CheckKind::EmbeddingHomomorphism => 50,
            _ => 4,
        }))
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max.unwrap_or(1e6)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn tolerance(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }

    pub fn tower(&self) -> Result<TowerSpec> {
        match &self.tower {
            Some(config) => TowerSpec::from_config(config),
            None => TowerSpec::new(self.theta()?, vec![self.covering()?; self.depth.unwrap_or(4)]),
        }
    }

    /// Validates every parameter this check reads, naming the offending
    /// field relative to `path`, or as a command-line flag when `path` is
    /// empty.
    pub fn validate(&self, path: &str) -> Result<()> {
        let q = |name: &str| {
            if path.is_empty() {
                format!("--{}", name.replace('_', "-"))
            } else {
                format!("{path}.{name}")
            }
        };
        let field = |name: &str, e: NcgError| NcgError::invalid(q(name), e.to_string());
        let positive = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(x) if !(x.is_finite() && x > 0.0) => {
                    Err(NcgError::invalid(q(name), format!("{x} is not a positive number")))
                }
                _ => Ok(()),
            }
        };
        positive("tolerance", self.tolerance)?;
        positive("lambda_max", self.lambda_max)?;
        self.theta().map_err(|e| field("theta", e))?;
        crate::torus::check_tau(self.tau()).map_err(|e| field("tau_im", e))?;
        self.covering().map_err(|e| field("m", e))?;
        if self.count() == 0 {
            return Err(NcgError::invalid(q("count"), "must be positive"));
        }
        match self.check {
            CheckKind::DiracSpectrum
            | CheckKind::FirstOrder
            | CheckKind::RealStructure
            | CheckKind::SignTable
            | CheckKind::Seminorms => {
                self.window().map_err(|e| field("window", e))?;
            }
            CheckKind::CircleIdentity | CheckKind::CircleNegativeControl => {
                build_partition(self.grid(), self.cutoff()).map_err(|e| field("grid", e))?;
                if self.fold == Some(0) {
                    return Err(NcgError::invalid(q("fold"), "must be positive"));
                }
            }
            CheckKind::TorusCompleteness if self.cutoff() < 8 => {
                return Err(NcgError::invalid(q("cutoff"), "must be at least 8"));
            }
            CheckKind::Integral | CheckKind::IntegralScaling if self.lambda_max() < 10.0 * std::f64::consts::E => {
                return Err(NcgError::invalid(q("lambda_max"), "must be at least 10e"));
            }
            CheckKind::CoherentTower => {
                let tower = self.tower().map_err(|e| field("tower", e))?;
                tower_generator(&tower).map_err(|e| field("tower", e))?;
            }
            CheckKind::LocalCovering => {
                if self.theta_value() != 0.0 {
                    return Err(NcgError::invalid(q("theta"), "local coverings need theta = 0"));
                }
                if self.grid() < 8 {
                    return Err(NcgError::invalid(q("grid"), "must be at least 8"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Vec<AxiomReport>> {
        match self.check {
            CheckKind::DiracSpectrum => run_dirac_spectrum(self),
            CheckKind::FirstOrder => run_first_order(self),
            CheckKind::RealStructure => run_real_structure(self),
            CheckKind::SignTable => run_sign_table(self),
            CheckKind::TorusCompleteness => run_torus_completeness(self),
            CheckKind::CircleIdentity => run_circle_identity(self),
            CheckKind::CircleNegativeControl => run_circle_negative_control(self),
            CheckKind::ModuleDecomposition => run_module_decomposition(self),
            CheckKind::EmbeddingHomomorphism => run_embedding(self),
            CheckKind::Integral => run_integral(self),
            CheckKind::IntegralScaling => run_integral_scaling(self),
            CheckKind::CoherentTower => run_coherent_tower(self),
            CheckKind::DixmierFunctionals => run_dixmier_functionals(self),
            CheckKind::LocalCovering => run_local_covering(self),
            CheckKind::Seminorms => run_seminorms(self),
        }
    }
}

/// Analytic spectrum `±2π|r/m + τs/n|` over the window, sorted like
/// [`dirac_spectrum`].
pub fn analytic_dirac_spectrum(tau: Complex64, m: u32, n: u32, radius: u32) -> Vec<f64> {
    let r = i64::from(radius);
    let mut values: Vec<f64> = (-r..=r)
        .flat_map(|a| (-r..=r).map(move |b| (a, b)))
        .flat_map(|(a, b)| {
            let mu = 2.0 * PI * (a as f64 / f64::from(m) + tau * (b as f64 / f64::from(n))).norm();
            [-mu, mu]
        })
        .collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()).then(x.total_cmp(y)));
    values
}

fn run_dirac_spectrum(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let (m, n) = spec.orders();
    let window = spec.window()?;
    let p = DiracParams::scaled(spec.tau(), spec.theta()?, m, n)?;
    let mut numeric: Vec<f64> = dirac_spectrum(&p, window.radius())?
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.eigenvalue, e.multiplicity))
        .collect();
    let mut analytic = analytic_dirac_spectrum(spec.tau(), m, n, window.radius());
    numeric.sort_by(f64::total_cmp);
    analytic.sort_by(f64::total_cmp);
    let mut residual = if numeric.len() == analytic.len() {
        numeric.iter().zip(&analytic).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let kernel = numeric.iter().filter(|v| **v == 0.0).count();
    if kernel != 2 {
        residual = f64::INFINITY;
    }
    Ok(vec![AxiomReport::new(
        format!("Dirac spectrum (tau={}, m={m}, n={n})", spec.tau()),
        residual,
        spec.tolerance(1e-10),
        u64::from(window.radius()),
        0,
    )])
}

fn random_pairs(spec: &CheckSpec, theta: DeformationAngle) -> Vec<(AlgebraElement, AlgebraElement)> {
    let mut g = rng::seeded(spec.seed());
    let support = spec.support();
    (0..spec.count())
        .map(|_| {
            let a = rng::element(&mut g, theta, support, 12);
            let b = rng::element(&mut g, theta, support, 12);
            (a, b)
        })
        .collect()
}

fn check_config(spec: &CheckSpec, default: f64) -> CheckConfig {
    CheckConfig {
        tolerance: spec.tolerance(default),
        seed: spec.seed(),
        ..CheckConfig::default()
    }
}

fn worst(label: String, reports: Vec<AxiomReport>, tolerance: f64, window: GnsWindow) -> AxiomReport {
    let residual = reports.iter().map(|r| r.residual).fold(0.0, f64::max);
    AxiomReport::new(
        label,
        residual,
        tolerance,
        u64::from(window.radius()),
        u64::from(window.guard()),
    )
}

fn run_first_order(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let theta = spec.theta()?;
    let window = spec.window()?;
    let p = DiracParams::new(spec.tau(), theta)?;
    let cfg = check_config(spec, 1e-12);
    let reports = random_pairs(spec, theta)
        .par_iter()
        .map(|(a, b)| check_first_order(&p, a, b, window, &cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![worst(
        format!("first-order condition, {} pairs (theta={})", spec.count(), theta),
        reports,
        cfg.tolerance,
        window,
    )])
}

fn run_real_structure(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let theta = spec.theta()?;
    let window = spec.window()?;
    let cfg = check_config(spec, 1e-12);
    let reports = random_pairs(spec, theta)
        .par_iter()
        .map(|(a, b)| check_real_structure(a, b, window, &cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![worst(
        format!("real-structure commutant, {} pairs (theta={})", spec.count(), theta),
        reports,
        cfg.tolerance,
        window,
    )])
}

fn run_sign_table(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let p = DiracParams::new(spec.tau(), spec.theta()?)?;
    Ok(check_sign_table(&p, spec.window()?, &check_config(spec, 1e-12)))
}

fn run_torus_completeness(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let c = spec.covering()?;
    let out = verify_covering_completeness(spec.theta()?, &c, spec.cutoff())?;
    let tolerance = spec.tolerance(out.tolerance);
    let cutoff = spec.cutoff() as u64;
    let mut reports = vec![AxiomReport::new(out.report.axiom.clone(), out.report.residual, tolerance, cutoff, 0)];
    reports.extend(out.group_residuals.iter().filter(|(g, _)| !g.is_identity()).map(|(g, r)| {
        AxiomReport::new(
            format!("completeness twisted by g=({}, {})", g.p, g.q),
            *r,
            tolerance,
            cutoff,
            0,
        )
    }));
    Ok(reports)
}

fn run_circle_identity(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let pair = build_partition(spec.grid(), spec.cutoff())?;
    let r = verify_circ_sum(&lift_to_cover(&pair, spec.fold.unwrap_or(3))?);
    Ok(vec![AxiomReport::new(r.axiom, r.residual, spec.tolerance(1e-12), r.window, 0)])
}

fn run_circle_negative_control(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let pair = build_partition(spec.grid(), spec.cutoff())?.with_scaled_e2(0.5)?;
    let fold = spec.fold.unwrap_or(3);
    let r = verify_circ_sum(&lift_to_cover(&pair, fold)?);
    Ok(vec![AxiomReport::detection(
        format!("circle identity violated by scaled e2, fold {fold}"),
        r.residual,
        spec.tolerance(0.1),
        r.window,
        0,
    )])
}

fn run_module_decomposition(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let c = spec.covering()?;
    let base = spec.theta()?;
    let theta = theta_prime(base, &c);
    let mut g = rng::seeded(spec.seed());
    let (mut orthogonality, mut reconstruction, mut module): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..spec.count() {
        let a = rng::element(&mut g, theta, spec.support(), 20);
        let x = rng::element(&mut g, base, 2, 4);
        let (inv, comp) = orthogonal_split(&a, &c);
        let overlap = inv.terms().filter(|(w, _)| comp.coefficient(w.r, w.s) != Complex64::new(0.0, 0.0)).count();
        orthogonality = orthogonality
            .max(module_inner(&inv, &comp, &c, Normalization::Averaged)?.sup_norm())
            .max(overlap as f64);
        reconstruction = reconstruction.max(inv.try_add(&comp)?.distance(&a));
        module = module.max(module_inner(&embed(&x, &c), &comp, &c, Normalization::Averaged)?.sup_norm());
    }
    let tolerance = spec.tolerance(0.0);
    Ok(vec![
        AxiomReport::new("invariant and complement parts are orthogonal", orthogonality, tolerance, 0, 0),
        AxiomReport::new("orthogonal split reconstructs the element", reconstruction, tolerance, 0, 0),
        AxiomReport::new("complement is orthogonal to the embedded base", module, tolerance, 0, 0),
    ])
}

fn run_embedding(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let c = spec.covering()?;
    let base = spec.theta()?;
    let cover = theta_prime(base, &c);
    let (m, n) = (i64::from(c.m), i64::from(c.n));
    let mut g = rng::seeded(spec.seed());
    let (mut mismatches, mut amplitude): (usize, f64) = (0, 0.0);
    for _ in 0..spec.count() {
        let w1 = rng::monomial(&mut g, spec.support());
        let w2 = rng::monomial(&mut g, spec.support());
        if base.rotation(-w1.s * w2.r) != cover.rotation(-(n * w1.s) * (m * w2.r)) {
            mismatches += 1;
        }
        let a = AlgebraElement::term(base, w1.r, w1.s, rng::complex(&mut g));
        let b = AlgebraElement::term(base, w2.r, w2.s, rng::complex(&mut g));
        let lhs = embed(&normal_order_product(&a, &b)?, &c);
        let rhs = normal_order_product(&embed(&a, &c), &embed(&b, &c))?;
        amplitude = amplitude
            .max(lhs.distance(&rhs))
            .max(embed(&adjoint(&a), &c).distance(&adjoint(&embed(&a, &c))));
    }
    let one = embed(&AlgebraElement::one(base), &c);
    if one != AlgebraElement::term(cover, 0, 0, Complex64::new(1.0, 0.0)) || one.coefficient(0, 0) != 1.0.into() {
        mismatches += 1;
    }
    Ok(vec![
        AxiomReport::new(
            format!("embedding phase identity, {} monomial pairs", spec.count()),
            mismatches as f64,
            0.0,
            0,
            0,
        ),
        AxiomReport::new("embedding amplitude arithmetic", amplitude, spec.tolerance(1e-12), 0, 0),
    ])
}

fn run_integral(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let (m, n) = spec.orders();
    let tau = spec.tau();
    let lambda_max = spec.lambda_max();
    let count = lambda_max.ceil() as usize + 2;
    let sv = dirac_inverse_power_stream(tau, m, n, 2.0, count)?;
    let est = ncint_estimate(&sv, lambda_max, FitModel::default())?;
    let target = f64::from(m) * f64::from(n) / (2.0 * PI * tau.im.abs());
    Ok(vec![AxiomReport::new(
        format!(
            "integral of |D|^-2 = {:.6} (target {:.6}, fit residual {:.2e})",
            est.value, target, est.fit_residual
        ),
        (est.value / target - 1.0).abs(),
        spec.tolerance(0.05),
        count as u64,
        0,
    )])
}

fn run_integral_scaling(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let (m, n) = spec.orders();
    let r = verify_covering_scaling(spec.tau(), m, n, spec.lambda_max())?;
    Ok(vec![AxiomReport::new(
        format!("{} ratio {:.6}", r.report.axiom, r.ratio),
        r.report.residual,
        spec.tolerance(0.05),
        r.report.window,
        0,
    )])
}

/// Direction along which a tower covers: towers whose levels all have
/// `n = 1` (or all `m = 1`) admit single-sheet elements in one generator.
pub fn tower_generator(tower: &TowerSpec) -> Result<Generator> {
    if tower.levels().iter().all(|c| c.n == 1) {
        Ok(Generator::U)
    } else if tower.levels().iter().all(|c| c.m == 1) {
        Ok(Generator::V)
    } else {
        Err(NcgError::invalid(
            "levels",
            "descent constancy needs every level to cover along one generator (all n = 1 or all m = 1)",
        ))
    }
}

/// Circle picture of a one-direction tower: a single-sheet function on the
/// top cover, descended fold by fold; returns the largest deviation of
/// `⟨φ_k, φ_k⟩` from `φ₀*φ₀`.
pub fn circle_descent_spread(folds: &[u32], grid: usize, cutoff: usize) -> Result<f64> {
    let total: u32 = folds.iter().product();
    let pair = build_partition(grid, cutoff)?;
    let top = lift_to_cover(&pair, total)?
        .member(0, 2)
        .cloned()
        .ok_or_else(|| NcgError::invalid("fold", "empty family"))?;
    let mut levels: Vec<CircleFunction> = vec![top];
    for fold in folds.iter().rev() {
        let next = descend_function(levels.last().expect("nonempty"), *fold)?;
        levels.push(next);
    }
    let base = levels.last().expect("nonempty");
    let target: Vec<f64> = base.samples().iter().map(|z| z.norm_sqr()).collect();
    let mut spread: f64 = 0.0;
    for f in &levels {
        let inner = l2_module_inner(f, f)?;
        for (a, b) in inner.samples().iter().zip(&target) {
            spread = spread.max((a - b).norm());
        }
    }
    Ok(spread)
}

/// Summary of a coherent-tower run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerOutcome {
    pub reports: Vec<AxiomReport>,
    /// `τ₀(⟨a_k, a_k⟩)` per level, summed normalization.
    pub summed_trace: Vec<f64>,
    /// `τ₀(⟨a_k, a_k⟩)` per level, averaged normalization.
    pub averaged_trace: Vec<f64>,
    /// Successive-difference norms of the summed trajectory.
    pub differences: Vec<f64>,
    pub corrupted_level: usize,
    pub flagged: Vec<usize>,
}

/// Descends a lifted partition function from the top of `tower`, checks
/// coherence, the constancy of `⟨a_k, a_k⟩`, and that corrupting one level
/// is flagged there.
pub fn coherent_tower_run(tower: &TowerSpec, cutoff: usize, tolerance: f64) -> Result<TowerOutcome> {
    let depth = tower.depth();
    if depth == 0 {
        return Err(NcgError::invalid("levels", "the tower needs at least one level"));
    }
    let generator = tower_generator(tower)?;
    let top_cover = tower.cumulative(depth);
    let fold = match generator {
        Generator::U => top_cover.m,
        Generator::V => top_cover.n,
    };
    let top = partition_lift_element(tower.theta(depth), fold, (0, 2), cutoff, generator)?;
    let prefix = CoherentPrefix::from_top(top, tower)?;
    let coherence = coherence_check(&prefix, tower)?;
    let summed = limit_inner_estimate(&prefix, &prefix, tower, Normalization::Summed)?;
    let averaged = limit_inner_estimate(&prefix, &prefix, tower, Normalization::Averaged)?;
    let corrupted_level = depth.div_ceil(2);
    let level = prefix.element(corrupted_level);
    let bumped = level.try_add(&AlgebraElement::term(level.theta(), 0, 0, Complex64::new(1e-6, 0.0)))?;
    let corrupted = coherence_check(&prefix.with_replaced(corrupted_level, bumped), tower)?;
    let flagged = corrupted.flagged();
    let at_level = corrupted.levels.get(corrupted_level).map(|r| r.residual).unwrap_or(0.0);
    let folds: Vec<u32> = tower
        .levels()
        .iter()
        .map(|c| match generator {
            Generator::U => c.m,
            Generator::V => c.n,
        })
        .collect();
    let circle = circle_descent_spread(&folds, 256, 32)?;
    let reports = vec![
        AxiomReport::new(
            format!("coherence of the descended prefix, depth {depth}"),
            coherence.residual(),
            coherence
                .levels
                .iter()
                .zip(prefix.elements())
                .map(|(_, a)| 1e-12 * a.sup_norm().max(1.0))
                .fold(f64::INFINITY, f64::min),
            cutoff as u64,
            0,
        ),
        AxiomReport::new(
            format!("inner-product constancy along the tower ({})", Normalization::Summed),
            summed.spread(),
            tolerance,
            cutoff as u64,
            0,
        ),
        AxiomReport::detection(
            format!("corrupted level {corrupted_level} flagged"),
            if flagged == [corrupted_level] { at_level } else { 0.0 },
            0.0,
            cutoff as u64,
            0,
        ),
        AxiomReport::new("circle descent constancy (grid)", circle, tolerance, 256, 0),
    ];
    let trace = |t: &crate::coverings::InnerTrajectory| t.values.iter().map(|v| v.coefficient(0, 0).re).collect();
    Ok(TowerOutcome {
        reports,
        summed_trace: trace(&summed),
        averaged_trace: trace(&averaged),
        differences: summed.differences.clone(),
        corrupted_level,
        flagged,
    })
}

fn run_coherent_tower(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    Ok(coherent_tower_run(&spec.tower()?, spec.cutoff(), spec.tolerance(1e-10))?.reports)
}

fn random_diagonal<R: Rng>(g: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| g.random_range(0.0..1.0)).collect()
}

fn run_dixmier_functionals(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let mut g = rng::seeded(spec.seed());
    let stream = SingularValueStream::from_diagonal(&random_diagonal(&mut g, 200))?;
    let mut breakpoints: f64 = 0.0;
    for n in 1..=250 {
        breakpoints = breakpoints.max((sigma_lambda(&stream, n as f64)? - sigma_n(&stream, n)?).abs());
    }
    let half = (sigma_lambda(&stream, 0.5)? - 0.5 * stream.values()[0]).abs();
    let mut sandwich: f64 = 0.0;
    for _ in 0..spec.count() {
        let len = g.random_range(1..60);
        let a = random_diagonal(&mut g, len);
        let b = random_diagonal(&mut g, len);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (sa, sb, ss) = (
            SingularValueStream::from_diagonal(&a)?,
            SingularValueStream::from_diagonal(&b)?,
            SingularValueStream::from_diagonal(&sum)?,
        );
        let lambda = g.random_range(0.1..80.0);
        let lower = sigma_lambda(&ss, lambda)?;
        let middle = sigma_lambda(&sa, lambda)? + sigma_lambda(&sb, lambda)?;
        let upper = sigma_lambda(&ss, 2.0 * lambda)?;
        sandwich = sandwich.max(lower - middle).max(middle - upper);
    }
    let lambda_max = spec.lambda_max();
    let harmonic = SingularValueStream::explicit(
        (1..=lambda_max.ceil() as usize + 2).map(|i| 1.0 / i as f64).collect(),
    )?;
    let est = ncint_estimate(&harmonic, lambda_max, FitModel::default())?;
    Ok(vec![
        AxiomReport::new("interpolated sigma is exact at integer breakpoints", breakpoints, 0.0, 0, 0),
        AxiomReport::new("sigma_0.5 equals half the operator norm", half, 0.0, 0, 0),
        AxiomReport::new(
            format!("sandwich inequality on {} commuting positive pairs", spec.count()),
            sandwich.max(0.0),
            1e-12,
            0,
            0,
        ),
        AxiomReport::new(
            format!("harmonic stream integral = {:.6}", est.value),
            (est.value - 1.0).abs(),
            spec.tolerance(0.02),
            lambda_max as u64,
            0,
        ),
    ])
}

fn run_local_covering(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let (m, n) = spec.orders();
    let p = DiracParams::scaled(spec.tau(), spec.theta()?, m, n)?;
    local_covering_check_theta0(&p, spec.grid(), spec.seed())
}

fn run_seminorms(spec: &CheckSpec) -> Result<Vec<AxiomReport>> {
    let theta = spec.theta()?;
    let window = spec.window()?;
    let wider = GnsWindow::new(window.radius() + 8, window.guard())?;
    let p = DiracParams::new(spec.tau(), theta)?;
    let a = AlgebraElement::from_terms(
        theta,
        [
            (Monomial::new(1, 0), Complex64::new(1.0, 0.0)),
            (Monomial::new(0, 1), Complex64::new(1.0, 0.0)),
        ],
    );
    let cfg = CheckConfig {
        iterations: 200,
        ..check_config(spec, 1e-6)
    };
    let max_s = spec.count() as u32;
    let mut reports = Vec::new();
    let mut previous = 0.0;
    let mut monotone = true;
    for s in 0..=max_s {
        let (x, y) = rayon::join(|| seminorm(&p, &a, s, window, &cfg), || seminorm(&p, &a, s, wider, &cfg));
        let (x, y) = (x?, y?);
        monotone &= y >= previous;
        previous = y;
        reports.push(AxiomReport::new(
            format!("seminorm s={s} of u+v is window-stable ({x:.6} vs {y:.6})"),
            (x - y).abs() / x.abs().max(1.0),
            cfg.tolerance,
            u64::from(wider.radius()),
            u64::from(window.guard()),
        ));
    }
    reports.push(AxiomReport::new(
        "seminorms are nondecreasing in s",
        if monotone { 0.0 } else { 1.0 },
        0.0,
        u64::from(wider.radius()),
        u64::from(window.guard()),
    ));
    Ok(reports)
}

/// A list of checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub checks: Vec<CheckSpec>,
}

impl CampaignConfig {
    /// Parses and validates a config; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: CampaignConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            NcgError::invalid(if path == "." { "config".to_string() } else { path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.checks.iter().enumerate() {
            c.validate(&format!("checks[{i}]"))?;
        }
        Ok(())
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-identities" => Some(identity_preset()),
            "extended" => {
                let mut config = identity_preset();
                for (m, n) in [(2, 1), (2, 2)] {
                    config.checks.push(CheckSpec {
                        m: Some(m),
                        n: Some(n),
                        ..CheckSpec::new(CheckKind::LocalCovering)
                    });
                }
                config.checks.push(CheckSpec::new(CheckKind::Seminorms));
                Some(config)
            }
            _ => None,
        }
    }
}

fn identity_preset() -> CampaignConfig {
    let mut checks = Vec::new();
    for tau_re in [0.0, 0.5] {
        for (m, n) in [(1, 1), (2, 3)] {
            checks.push(CheckSpec {
                tau_re: Some(tau_re),
                m: Some(m),
                n: Some(n),
                ..CheckSpec::new(CheckKind::DiracSpectrum)
            });
        }
    }
    for theta in [0.0, 1.0, SQRT_2] {
        checks.push(CheckSpec {
            theta: Some(theta),
            tau_re: Some(0.5),
            ..CheckSpec::new(CheckKind::FirstOrder)
        });
    }
    checks.push(CheckSpec::new(CheckKind::RealStructure));
    checks.push(CheckSpec {
        tau_re: Some(0.5),
        ..CheckSpec::new(CheckKind::SignTable)
    });
    for (m, n, k) in [(2, 3, 0), (2, 3, 1), (3, 5, 0)] {
        checks.push(CheckSpec {
            m: Some(m),
            n: Some(n),
            k: Some(k),
            ..CheckSpec::new(CheckKind::TorusCompleteness)
        });
    }
    for fold in [2, 3, 5] {
        checks.push(CheckSpec {
            fold: Some(fold),
            ..CheckSpec::new(CheckKind::CircleIdentity)
        });
    }
    checks.push(CheckSpec::new(CheckKind::CircleNegativeControl));
    checks.push(CheckSpec::new(CheckKind::ModuleDecomposition));
    checks.push(CheckSpec::new(CheckKind::EmbeddingHomomorphism));
    checks.push(CheckSpec::new(CheckKind::Integral));
    for (m, n) in [(2, 1), (2, 3)] {
        checks.push(CheckSpec {
            m: Some(m),
            n: Some(n),
            ..CheckSpec::new(CheckKind::IntegralScaling)
        });
    }
    checks.push(CheckSpec::new(CheckKind::CoherentTower));
    checks.push(CheckSpec::new(CheckKind::DixmierFunctionals));
    CampaignConfig { checks }
}

/// Result of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub params: CheckSpec,
    pub reports: Vec<AxiomReport>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
    pub reports: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema: String,
    pub generator: String,
    pub pass: bool,
    pub summary: Summary,
    pub checks: Vec<CheckOutcome>,
}

impl CampaignReport {
    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.checks.iter_mut().for_each(|c| c.wall_clock_seconds = 0.0);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

fn run_check(spec: &CheckSpec) -> CheckOutcome {
    let start = Instant::now();
    let result = spec.run();
    let wall_clock_seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(reports) => CheckOutcome {
            params: spec.clone(),
            pass: reports.iter().all(|r| r.pass),
            reports,
            error: None,
            wall_clock_seconds,
        },
        Err(e) => CheckOutcome {
            params: spec.clone(),
            reports: Vec::new(),
            pass: false,
            error: Some(e.to_string()),
            wall_clock_seconds,
        },
    }
}

/// Runs every check on a pool of `workers` threads (all cores when `None`).
pub fn run_campaign(config: &CampaignConfig, workers: Option<usize>) -> Result<CampaignReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| NcgError::invalid("workers", e.to_string()))?;
    let checks: Vec<CheckOutcome> = pool.install(|| config.checks.par_iter().map(run_check).collect());
    let passed = checks.iter().filter(|c| c.pass).count();
    Ok(CampaignReport {
        schema: SCHEMA.to_string(),
        generator: rng::GENERATOR.to_string(),
        pass: passed == checks.len(),
        summary: Summary {
            checks: checks.len(),
            passed,
            failed: checks.len() - passed,
            reports: checks.iter().map(|c| c.reports.len()).sum(),
        },
        checks,
    })
}

/// Worker count from `NCG_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var("NCG_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(NcgError::invalid("NCG_WORKERS", format!("{v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_campaign_passes() {
        let config = CampaignConfig::from_json(r#"{"checks": []}"#).unwrap();
        let report = run_campaign(&config, Some(1)).unwrap();
        assert!(report.pass);
        assert_eq!(report.summary.checks, 0);
        assert_eq!(report.schema, SCHEMA);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = CampaignConfig::from_json(r#"{"checks": [{"check": "integral", "theta": "abc"}]}"#).unwrap_err();
        assert!(err.to_string().contains("checks[0].theta"), "{err}");
        let err = CampaignConfig::from_json(r#"{"checks": [{"check": "bogus"}]}"#).unwrap_err();
        assert!(err.to_string().contains("checks[0].check"), "{err}");
        let err = CampaignConfig::from_json(r#"{"checks": [{"check": "first-order", "window": 4, "guard": 8}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("checks[0].window"), "{err}");
        let err = CampaignConfig::from_json(r#"{"checks": [{"check": "integral", "tau_im": 0}]}"#).unwrap_err();
        assert!(err.to_string().contains("checks[0].tau_im"), "{err}");
        let err = CampaignConfig::from_json(r#"{"checks": [{"check": "integral", "color": 1}]}"#).unwrap_err();
        assert!(err.to_string().contains("color"), "{err}");
    }

    #[test]
    fn analytic_spectrum_matches_numeric() {
        let spec = CheckSpec {
            tau_re: Some(0.5),
            m: Some(2),
            n: Some(3),
            window: Some(6),
            ..CheckSpec::new(CheckKind::DiracSpectrum)
        };
        let r = spec.run().unwrap();
        assert!(r[0].pass && r[0].residual < 1e-10, "{r:?}");
    }

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            CampaignConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(CampaignConfig::preset("nope").is_none());
    }

    #[test]
    fn small_campaign_is_deterministic() {
        let config = CampaignConfig::from_json(
            r#"{"checks": [
                {"check": "first-order", "count": 3, "window": 10, "guard": 4, "support": 2, "seed": 5},
                {"check": "circle-identity", "fold": 2, "grid": 512},
                {"check": "circle-negative-control", "grid": 512}
            ]}"#,
        )
        .unwrap();
        let a = run_campaign(&config, Some(2)).unwrap();
        let b = run_campaign(&config, Some(1)).unwrap();
        assert!(a.pass, "{}", a.to_json());
        assert_eq!(a.without_timings().to_json(), b.without_timings().to_json());
    }

    #[test]
    fn failing_check_fails_the_campaign() {
        let config = CampaignConfig {
            checks: vec![CheckSpec {
                fold: Some(2),
                grid: Some(512),
                tolerance: Some(1e-300),
                ..CheckSpec::new(CheckKind::CircleNegativeControl)
            }],
        };
        let mut spec = config.clone();
        spec.checks[0].check = CheckKind::CircleIdentity;
        spec.checks[0].tolerance = None;
        let pair = build_partition(512, 64).unwrap().with_scaled_e2(2.0).unwrap();
        assert!(!verify_circ_sum(&lift_to_cover(&pair, 2).unwrap()).pass);
        assert!(run_campaign(&config, Some(1)).unwrap().pass);
        let strict = CampaignConfig {
            checks: vec![CheckSpec {
                tolerance: Some(0.9),
                ..config.checks[0].clone()
            }],
        };
        assert!(!run_campaign(&strict, Some(1)).unwrap().pass);
    }
}
