use serde::{Deserialize, Serialize};

/// Outcome of one verification. Checks built with [`AxiomReport::new`] pass
/// when `residual <= tolerance`; negative controls built with
/// [`AxiomReport::detection`] pass when the residual exceeds a threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub axiom: String,
    pub residual: f64,
    pub pass: bool,
    pub window: u64,
    pub guard: u64,
}

impl AxiomReport {
    pub fn new(axiom: impl Into<String>, residual: f64, tolerance: f64, window: u64, guard: u64) -> Self {
        AxiomReport {
            axiom: axiom.into(),
            residual,
            pass: residual.is_finite() && residual <= tolerance,
            window,
            guard,
        }
    }

    pub fn detection(axiom: impl Into<String>, residual: f64, threshold: f64, window: u64, guard: u64) -> Self {
        AxiomReport {
            axiom: axiom.into(),
            residual,
            pass: residual.is_finite() && residual > threshold,
            window,
            guard,
        }
    }
}
