//! Shared numerical kernels.
//!
//! Everything in here is deterministic and free of global state; callers own
//! any parallelism.

pub mod cubic;
pub mod eig;
pub mod expm;
pub mod lsq;
pub mod ode;
pub mod scalar;

pub use cubic::{cubic_roots, discriminant, discriminant_sign, CubicRoots, IMAG_THRESHOLD};
pub use eig::{hermitian_eig, HermitianEig};
pub use expm::expm;
pub use lsq::{curve_fit, least_squares, numerical_jacobian, Bounds, FitOptions, FitReport};
pub use ode::{ode_solve, ode_solve_fixed, ode_solve_with_stats, OdeOptions, OdeScalar, OdeState, OdeStats};
pub use scalar::{bisect, golden_section_min, scan_then_refine_min};
