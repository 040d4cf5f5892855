//! Finite-truncation toolkit for the noncommutative torus: algebra arithmetic,
//! the torus spectral triple, finite covering projections and coherent towers,
//! commutative circle coverings, and Dixmier-trace estimation.

pub mod campaign;
pub mod circle;
pub mod coverings;
pub mod dixmier;
pub mod error;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod torus;

pub use error::{NcgError, Result};
pub use report::AxiomReport;
pub use torus::{AlgebraElement, DeformationAngle, Monomial};
