use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::window::{GnsWindow, SpinorVector};
use crate::rng;
use crate::torus::DeformationAngle;

pub type ApplyFn = Arc<dyn Fn(&SpinorVector) -> SpinorVector + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Linearity {
    Linear,
    Antilinear,
}

impl Linearity {
    fn then(self, other: Linearity) -> Linearity {
        if self == other {
            Linearity::Linear
        } else {
            Linearity::Antilinear
        }
    }
}

/// Matrix-free operator on a truncated spinor space, carried together with
/// its adjoint.
///
/// For an antilinear map `A` the adjoint is the antilinear `A†` with
/// `(Ax, y) = (A†y, x)`; with that convention `(AB)† = B†A†` holds for every
/// combination of linear and antilinear factors.
#[derive(Clone)]
pub struct LinearMapHandle {
    label: String,
    linearity: Linearity,
    window: GnsWindow,
    theta: DeformationAngle,
    components: usize,
    forward: ApplyFn,
    backward: ApplyFn,
}

impl fmt::Debug for LinearMapHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearMapHandle")
            .field("label", &self.label)
            .field("linearity", &self.linearity)
            .field("window", &self.window)
            .field("components", &self.components)
            .finish()
    }
}

impl LinearMapHandle {
    pub fn new(
        label: impl Into<String>,
        linearity: Linearity,
        window: GnsWindow,
        theta: DeformationAngle,
        components: usize,
        forward: ApplyFn,
        backward: ApplyFn,
    ) -> Self {
        LinearMapHandle {
            label: label.into(),
            linearity,
            window,
            theta,
            components,
            forward,
            backward,
        }
    }

    pub fn identity(window: GnsWindow, theta: DeformationAngle, components: usize) -> Self {
        let id: ApplyFn = Arc::new(|x: &SpinorVector| x.clone());
        Self::new("1", Linearity::Linear, window, theta, components, id.clone(), id)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn linearity(&self) -> Linearity {
        self.linearity
    }

    pub fn window(&self) -> GnsWindow {
        self.window
    }

    pub fn theta(&self) -> DeformationAngle {
        self.theta
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Panics if `x` does not live on this handle's window and component count.
    pub fn apply(&self, x: &SpinorVector) -> SpinorVector {
        self.check_shape(x);
        (self.forward)(x)
    }

    pub fn apply_adjoint(&self, x: &SpinorVector) -> SpinorVector {
        self.check_shape(x);
        (self.backward)(x)
    }

    fn check_shape(&self, x: &SpinorVector) {
        assert_eq!(
            x.shape(),
            (self.window, self.components),
            "vector shape does not match operator `{}`",
            self.label
        );
    }

    pub fn adjoint(&self) -> Self {
        LinearMapHandle {
            label: format!("({})†", self.label),
            linearity: self.linearity,
            window: self.window,
            theta: self.theta,
            components: self.components,
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LinearMapHandle) -> Self {
        assert_eq!(self.components, other.components, "component counts differ");
        let (f1, f2) = (self.forward.clone(), other.forward.clone());
        let (b1, b2) = (self.backward.clone(), other.backward.clone());
        LinearMapHandle {
            label: format!("{}·{}", self.label, other.label),
            linearity: self.linearity.then(other.linearity),
            window: self.window,
            theta: self.theta,
            components: self.components,
            forward: Arc::new(move |x| f1(&f2(x))),
            backward: Arc::new(move |y| b2(&b1(y))),
        }
    }

    pub fn plus(&self, other: &LinearMapHandle) -> Self {
        self.combine(other, "+", |a, b| a.add(b))
    }

    pub fn minus(&self, other: &LinearMapHandle) -> Self {
        self.combine(other, "-", |a, b| a.sub(b))
    }

    fn combine<F>(&self, other: &LinearMapHandle, op: &str, f: F) -> Self
    where
        F: Fn(&SpinorVector, &SpinorVector) -> SpinorVector + Send + Sync + Copy + 'static,
    {
        assert_eq!(self.linearity, other.linearity, "cannot add linear and antilinear maps");
        assert_eq!(self.components, other.components, "component counts differ");
        let (f1, f2) = (self.forward.clone(), other.forward.clone());
        let (b1, b2) = (self.backward.clone(), other.backward.clone());
        LinearMapHandle {
            label: format!("({} {op} {})", self.label, other.label),
            linearity: self.linearity,
            window: self.window,
            theta: self.theta,
            components: self.components,
            forward: Arc::new(move |x| f(&f1(x), &f2(x))),
            backward: Arc::new(move |y| f(&b1(y), &b2(y))),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let adjoint_factor = match self.linearity {
            Linearity::Linear => factor.conj(),
            Linearity::Antilinear => factor,
        };
        let (f, b) = (self.forward.clone(), self.backward.clone());
        LinearMapHandle {
            label: format!("{factor}·{}", self.label),
            linearity: self.linearity,
            window: self.window,
            theta: self.theta,
            components: self.components,
            forward: Arc::new(move |x| f(x).scale(factor)),
            backward: Arc::new(move |y| b(y).scale(adjoint_factor)),
        }
    }

    /// `[a, b] = ab − ba`.
    pub fn commutator(a: &LinearMapHandle, b: &LinearMapHandle) -> Self {
        a.compose(b).minus(&b.compose(a))
    }

    /// `ab + ba`.
    pub fn anticommutator(a: &LinearMapHandle, b: &LinearMapHandle) -> Self {
        a.compose(b).plus(&b.compose(a))
    }

    /// Block operator `[[top, 0], [lower, diagonal]]` on the doubled space.
    pub fn block_lower(top: &LinearMapHandle, lower: &LinearMapHandle, diagonal: &LinearMapHandle) -> Self {
        let k = top.components;
        assert!(lower.components == k && diagonal.components == k, "block sizes differ");
        let (tf, lf, df) = (top.forward.clone(), lower.forward.clone(), diagonal.forward.clone());
        let (tb, lb, db) = (top.backward.clone(), lower.backward.clone(), diagonal.backward.clone());
        let forward: ApplyFn = Arc::new(move |x: &SpinorVector| {
            let (x1, x2) = split(x, k);
            let y1 = tf(&x1);
            let y2 = lf(&x1).add(&df(&x2));
            join(&y1, &y2)
        });
        let backward: ApplyFn = Arc::new(move |y: &SpinorVector| {
            let (y1, y2) = split(y, k);
            let x1 = tb(&y1).add(&lb(&y2));
            let x2 = db(&y2);
            join(&x1, &x2)
        });
        LinearMapHandle {
            label: format!("[[{}, 0], [{}, {}]]", top.label, lower.label, diagonal.label),
            linearity: top.linearity,
            window: top.window,
            theta: top.theta,
            components: 2 * k,
            forward,
            backward,
        }
    }
}

fn split(x: &SpinorVector, k: usize) -> (SpinorVector, SpinorVector) {
    let c = x.components();
    (x.with_components(c[..k].to_vec()), x.with_components(c[k..].to_vec()))
}

fn join(a: &SpinorVector, b: &SpinorVector) -> SpinorVector {
    let mut c = a.components().to_vec();
    c.extend_from_slice(b.components());
    a.with_components(c)
}

/// Power-iteration result. `value` is a lower bound on the norm of the
/// operator compressed to interior inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const CONVERGENCE: f64 = 1e-13;

/// Estimates `‖h P_int‖` by power iteration on `P_int h† h P_int`, started
/// from a seeded random interior vector.
pub fn op_norm_estimate(h: &LinearMapHandle, iterations: usize, seed: u64) -> NormEstimate {
    let mut x = SpinorVector::random(&mut rng::seeded(seed), h.window, h.theta, h.components, true);
    let start = x.norm();
    if start == 0.0 {
        return NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    x = x.scale(Complex64::new(1.0 / start, 0.0));
    let mut best: f64 = 0.0;
    let mut previous = f64::NAN;
    for i in 1..=iterations.max(1) {
        let y = h.apply(&x);
        let z = h.apply_adjoint(&y).project_interior();
        let zn = z.norm();
        best = best.max(y.norm()).max(zn.sqrt());
        if zn == 0.0 {
            return NormEstimate {
                value: best,
                iterations: i,
                converged: true,
            };
        }
        if (best - previous).abs() <= CONVERGENCE * best {
            return NormEstimate {
                value: best,
                iterations: i,
                converged: true,
            };
        }
        previous = best;
        x = z.scale(Complex64::new(1.0 / zn, 0.0));
    }
    NormEstimate {
        value: best,
        iterations: iterations.max(1),
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> GnsWindow {
        GnsWindow::new(4, 1).unwrap()
    }

    #[test]
    fn identity_norm_is_one() {
        let h = LinearMapHandle::identity(window(), DeformationAngle::zero(), 2);
        let est = op_norm_estimate(&h, 50, 3);
        assert!((est.value - 1.0).abs() < 1e-10);
        assert!(est.converged);
    }

    #[test]
    fn scalar_norm() {
        let h = LinearMapHandle::identity(window(), DeformationAngle::zero(), 2).scaled(Complex64::new(3.0, 0.0));
        assert!((op_norm_estimate(&h, 50, 3).value - 3.0).abs() < 1e-10);
    }

    #[test]
    fn block_adjoint_is_consistent() {
        let th = DeformationAngle::zero();
        let w = window();
        let id = LinearMapHandle::identity(w, th, 1);
        let two = id.scaled(Complex64::new(0.0, 2.0));
        let b = LinearMapHandle::block_lower(&id, &two, &id);
        let mut g = rng::seeded(5);
        let x = SpinorVector::random(&mut g, w, th, 2, false);
        let y = SpinorVector::random(&mut g, w, th, 2, false);
        let lhs = b.apply(&x).inner(&y);
        let rhs = x.inner(&b.apply_adjoint(&y));
        assert!((lhs - rhs).norm() < 1e-12);
    }
}
