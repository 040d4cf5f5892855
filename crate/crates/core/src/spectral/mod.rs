//! Truncated spinor space of the torus, its Dirac operator, real structure
//! and grading, matrix-free operator handles, and the axiom checks.

pub mod axioms;
pub mod dirac;
pub mod grid;
pub mod handle;
pub mod window;

pub use axioms::{check_first_order, check_real_structure, check_sign_table, seminorm, CheckConfig};
pub use dirac::{
    commutator_with_dirac, dirac_apply, dirac_handle, dirac_spectrum, gamma_apply, j_apply, j_handle,
    pi_s_representation, represent, right_multiplication, DiracParams, SpectrumEntry,
};
pub use grid::{commutative_grid_transform, inverse_grid_transform, local_covering_check_theta0, GridSamples};
pub use handle::{op_norm_estimate, LinearMapHandle, Linearity, NormEstimate};
pub use window::{GnsVector, GnsWindow, SpinorVector};
