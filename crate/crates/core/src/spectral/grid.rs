//! Sample picture of the commutative (`θ = 0`) torus.
//!
//! `w(r,s)` is identified with `e^{2πi(rx + sy)}` on `[0,1)²`. An `m×n`-fold
//! cover is sampled on `[0,m)×[0,n)` with the same number of points per unit
//! length, so that `∂/∂x̃` is the scaled derivation with multiplier
//! `2πi r/m` on the cover frequency `r`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use super::dirac::DiracParams;
use super::window::{GnsVector, GnsWindow};
use crate::error::{NcgError, Result};
use crate::report::AxiomReport;
use crate::rng;

/// Uniform samples `data[k·nx + j] = f(j/nx·Lx, k/ny·Ly)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSamples {
    nx: usize,
    ny: usize,
    data: Vec<Complex64>,
}

impl GridSamples {
    pub fn new(nx: usize, ny: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(NcgError::invalid(
                "samples",
                format!("expected {} samples, got {}", nx * ny, data.len()),
            ));
        }
        Ok(GridSamples { nx, ny, data })
    }

    pub fn zeros(nx: usize, ny: usize) -> Self {
        GridSamples {
            nx,
            ny,
            data: vec![Complex64::new(0.0, 0.0); nx * ny],
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.data[k * self.nx + j]
    }

    /// Mean of `|f|²` over the grid.
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }

    fn map2<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &GridSamples, f: F) -> GridSamples {
        GridSamples {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

/// Two-dimensional DFT. `inverse` computes the unnormalized synthesis
/// `Σ F_{rs} e^{+2πi(rj/nx + sk/ny)}`.
fn fft2(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny))
    } else {
        (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny))
    };
    for chunk in data.chunks_mut(nx) {
        row.process(chunk);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    for j in 0..nx {
        for k in 0..ny {
            column[k] = data[k * nx + j];
        }
        col.process(&mut column);
        for k in 0..ny {
            data[k * nx + j] = column[k];
        }
    }
}

fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn require_commutative(theta: f64) -> Result<()> {
    if theta != 0.0 {
        return Err(NcgError::NonzeroTheta(theta));
    }
    Ok(())
}

/// Coefficients of a `θ = 0` GNS vector to samples on a `grid × grid` mesh.
pub fn commutative_grid_transform(x: &GnsVector, grid: usize) -> Result<GridSamples> {
    require_commutative(x.theta().value())?;
    let w = x.window();
    if grid < w.side() {
        return Err(NcgError::Resolution(format!(
            "grid {grid} cannot resolve window radius {} (needs at least {})",
            w.radius(),
            w.side()
        )));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); grid * grid];
    let g = grid as i64;
    for (i, c) in x.coefficients().iter().enumerate() {
        let m = w.monomial(i);
        let (j, k) = (m.r.rem_euclid(g) as usize, m.s.rem_euclid(g) as usize);
        data[k * grid + j] = *c;
    }
    fft2(&mut data, grid, grid, true);
    Ok(GridSamples { nx: grid, ny: grid, data })
}

/// Samples back to window coefficients; frequencies outside the window are
/// discarded.
pub fn inverse_grid_transform(samples: &GridSamples, window: GnsWindow) -> Result<GnsVector> {
    let grid = samples.nx;
    if samples.ny != grid || grid < window.side() {
        return Err(NcgError::Resolution(format!(
            "a {}×{} grid cannot resolve window radius {}",
            samples.nx,
            samples.ny,
            window.radius()
        )));
    }
    let mut data = samples.data.clone();
    fft2(&mut data, grid, grid, false);
    let scale = 1.0 / (grid * grid) as f64;
    let g = grid as i64;
    let coeffs = (0..window.dim())
        .map(|i| {
            let m = window.monomial(i);
            data[m.s.rem_euclid(g) as usize * grid + m.r.rem_euclid(g) as usize] * scale
        })
        .collect();
    GnsVector::from_coefficients(window, crate::torus::DeformationAngle::zero(), coeffs)
}

/// Applies `∂` (or `∂†` when `dagger`) spectrally on an `Lx × Ly` periodic grid
/// using the multiplier of `p`.
fn spectral_partial(p: &DiracParams, f: &GridSamples, dagger: bool) -> GridSamples {
    let (nx, ny) = (f.nx, f.ny);
    let mut data = f.data.clone();
    fft2(&mut data, nx, ny, false);
    let scale = 1.0 / (nx * ny) as f64;
    for k in 0..ny {
        let s = signed_frequency(k, ny);
        for j in 0..nx {
            let r = signed_frequency(j, nx);
            let mu = p.multiplier(r, s);
            let mu = if dagger { mu.conj() } else { mu };
            data[k * nx + j] *= mu * scale;
        }
    }
    fft2(&mut data, nx, ny, true);
    GridSamples { nx, ny, data }
}

/// `D` on a pair of grid functions.
fn grid_dirac(p: &DiracParams, psi: &(GridSamples, GridSamples)) -> (GridSamples, GridSamples) {
    (spectral_partial(p, &psi.1, true), spectral_partial(p, &psi.0, false))
}

/// Covering grid of `m×n` sheets with `grid` points per unit length.
struct Cover {
    m: usize,
    n: usize,
    grid: usize,
}

impl Cover {
    fn nx(&self) -> usize {
        self.m * self.grid
    }

    fn ny(&self) -> usize {
        self.n * self.grid
    }

    /// Sheet `(p, q)` containing the cover sample `(j, k)`.
    fn sheet(&self, j: usize, k: usize) -> (usize, usize) {
        (j / self.grid, k / self.grid)
    }

    /// Restriction to the translate `g·Ĥ` of the fundamental domain.
    fn restrict(&self, f: &GridSamples, g: (usize, usize)) -> GridSamples {
        let mut out = f.clone();
        for k in 0..self.ny() {
            for j in 0..self.nx() {
                if self.sheet(j, k) != g {
                    out.data[k * self.nx() + j] = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    /// `φ: ξ ↦ Σ_g gξ`, evaluated on the base grid.
    fn periodize(&self, f: &GridSamples) -> GridSamples {
        let mut out = GridSamples::zeros(self.grid, self.grid);
        for k in 0..self.ny() {
            for j in 0..self.nx() {
                out.data[(k % self.grid) * self.grid + j % self.grid] += f.data[k * self.nx() + j];
            }
        }
        out
    }

    /// Inverse of `φ` on `Ĥ`: place the base function on the identity sheet.
    fn lift_to_domain(&self, f: &GridSamples) -> GridSamples {
        let mut out = GridSamples::zeros(self.nx(), self.ny());
        for k in 0..self.grid {
            for j in 0..self.grid {
                out.data[k * self.nx() + j] = f.data[k * self.grid + j];
            }
        }
        out
    }

    fn elements(&self) -> Vec<(usize, usize)> {
        (0..self.m).flat_map(|p| (0..self.n).map(move |q| (p, q))).collect()
    }
}

/// Inner product with the measure of the base torus, `(1/grid²) Σ conj(f) g`.
fn grid_inner(a: &GridSamples, b: &GridSamples, grid: usize) -> Complex64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum::<Complex64>() / (grid * grid) as f64
}

fn pair_inner(a: &(GridSamples, GridSamples), b: &(GridSamples, GridSamples), grid: usize) -> Complex64 {
    grid_inner(&a.0, &b.0, grid) + grid_inner(&a.1, &b.1, grid)
}

fn pair_norm(a: &(GridSamples, GridSamples), grid: usize) -> f64 {
    pair_inner(a, a, grid).re.sqrt()
}

fn pair_map<F: Fn(&GridSamples) -> GridSamples>(a: &(GridSamples, GridSamples), f: F) -> (GridSamples, GridSamples) {
    (f(&a.0), f(&a.1))
}

fn pair_sub(a: &(GridSamples, GridSamples), b: &(GridSamples, GridSamples)) -> (GridSamples, GridSamples) {
    (a.0.map2(&b.0, |x, y| x - y), a.1.map2(&b.1, |x, y| x - y))
}

fn random_grid<R: Rng>(rng: &mut R, nx: usize, ny: usize) -> GridSamples {
    GridSamples {
        nx,
        ny,
        data: (0..nx * ny)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    }
}

fn bump(t: f64) -> f64 {
    let z = (t - 0.5) / 0.4;
    if z.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - z * z)).exp()
    }
}

/// Smooth spinor compactly supported inside the identity sheet.
fn smooth_domain_spinor(cover: &Cover) -> (GridSamples, GridSamples) {
    let (nx, ny, g) = (cover.nx(), cover.ny(), cover.grid as f64);
    let make = |fx: f64, fy: f64| {
        let mut data = vec![Complex64::new(0.0, 0.0); nx * ny];
        for k in 0..cover.grid {
            for j in 0..cover.grid {
                let (x, y) = (j as f64 / g, k as f64 / g);
                let phase = Complex64::from_polar(1.0, 2.0 * PI * (fx * x + fy * y));
                data[k * nx + j] = phase * bump(x) * bump(y);
            }
        }
        GridSamples { nx, ny, data }
    };
    (make(1.0, 2.0), make(-3.0, 1.0))
}

/// Tolerance of the exact (grid-algebraic) local covering residuals.
pub const LOCAL_EXACT_TOLERANCE: f64 = 1e-10;
/// Tolerance of the intertwining residual, which includes spectral
/// differentiation error.
pub const LOCAL_INTERTWINING_TOLERANCE: f64 = 1e-6;

/// Local covering projection of the commutative torus onto its
/// `m×n`-fold cover, where `p` carries `τ` and the cover orders `(m, n)`.
///
/// Returns three reports: orthogonality and completeness of the deck
/// translates of `Ĥ` (the fundamental-domain subspace), unitarity of
/// `φ: Ĥ → H`, and the intertwining `φ D̃ = D φ` on a smooth spinor of `Ĥ`.
pub fn local_covering_check_theta0(p: &DiracParams, grid: usize, seed: u64) -> Result<Vec<AxiomReport>> {
    require_commutative(p.theta().value())?;
    if grid < 8 {
        return Err(NcgError::Resolution(format!("grid {grid} is below the minimum of 8")));
    }
    let cover = Cover {
        m: p.m() as usize,
        n: p.n() as usize,
        grid,
    };
    let base = DiracParams::new(p.tau(), p.theta())?;
    let elements = cover.elements();
    let mut rng = rng::seeded(seed);
    let (nx, ny) = (cover.nx(), cover.ny());

    let xi = (random_grid(&mut rng, nx, ny), random_grid(&mut rng, nx, ny));
    let eta = (random_grid(&mut rng, nx, ny), random_grid(&mut rng, nx, ny));
    let scale = pair_norm(&xi, grid) * pair_norm(&eta, grid);
    let parts_xi: Vec<_> = elements.iter().map(|g| pair_map(&xi, |f| cover.restrict(f, *g))).collect();
    let parts_eta: Vec<_> = elements.iter().map(|g| pair_map(&eta, |f| cover.restrict(f, *g))).collect();
    let mut orthogonality: f64 = 0.0;
    for (a, pa) in parts_xi.iter().enumerate() {
        for (b, pb) in parts_eta.iter().enumerate() {
            if a != b {
                orthogonality = orthogonality.max(pair_inner(pa, pb, grid).norm() / scale);
            }
        }
    }
    let mut sum = pair_map(&xi, |f| GridSamples::zeros(f.nx, f.ny));
    for part in &parts_xi {
        sum = (sum.0.map2(&part.0, |x, y| x + y), sum.1.map2(&part.1, |x, y| x + y));
    }
    let completeness = pair_norm(&pair_sub(&sum, &xi), grid) / pair_norm(&xi, grid);

    let in_domain = &parts_xi[0];
    let image = pair_map(in_domain, |f| cover.periodize(f));
    let isometry = (pair_norm(&image, grid).powi(2) - pair_norm(in_domain, grid).powi(2)).abs()
        / pair_norm(in_domain, grid).powi(2);
    let back = pair_map(&image, |f| cover.lift_to_domain(f));
    let left_inverse = pair_norm(&pair_sub(&back, in_domain), grid) / pair_norm(in_domain, grid);
    let base_vec = (random_grid(&mut rng, grid, grid), random_grid(&mut rng, grid, grid));
    let round = pair_map(&pair_map(&base_vec, |f| cover.lift_to_domain(f)), |f| cover.periodize(f));
    let right_inverse = pair_norm(&pair_sub(&round, &base_vec), grid) / pair_norm(&base_vec, grid);
    let unitarity = isometry.max(left_inverse).max(right_inverse);

    let smooth = smooth_domain_spinor(&cover);
    let lhs = pair_map(&grid_dirac(p, &smooth), |f| cover.periodize(f));
    let rhs = grid_dirac(&base, &pair_map(&smooth, |f| cover.periodize(f)));
    let intertwining = pair_norm(&pair_sub(&lhs, &rhs), grid) / pair_norm(&rhs, grid);

    let g = grid as u64;
    Ok(vec![
        AxiomReport::new(
            "deck-translate orthogonality and completeness of the fundamental-domain subspace",
            orthogonality.max(completeness),
            LOCAL_EXACT_TOLERANCE,
            g,
            0,
        ),
        AxiomReport::new(
            "unitarity of the periodization (summed normalization)",
            unitarity,
            LOCAL_EXACT_TOLERANCE,
            g,
            0,
        ),
        AxiomReport::new(
            "periodization intertwines the cover and base Dirac operators",
            intertwining,
            LOCAL_INTERTWINING_TOLERANCE,
            g,
            0,
        ),
    ])
}
