//! Simulation and analysis toolkit for a parametrically driven phonon mode
//! coupled to a transmon qubit.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: ODE integration, Levenberg-Marquardt, Hermitian
//!   eigendecomposition, matrix exponential, cubic roots, scalar search.
//! - [`fock`]: truncated Fock-space operators and density matrices for a
//!   qubit ⊗ phonon system (tensor ordering is always qubit first).
//! - [`model`]: device/drive parameters, closed-form effective-model
//!   constants and Hamiltonian builders.
//! - [`dynamics`]: Lindblad integration, moment equations and closed-form
//!   variance evolutions, squeezing-rate extraction.
//! - [`tomography`]: Wigner maps, 2D Gaussian fits, maximum-likelihood
//!   reconstruction and quantum Fisher information.
//! - [`duffing`]: classical driven Duffing steady state, spectroscopy fit and
//!   bistability analysis.
//! - [`limits`]: maximum-squeezing sweeps.
//!
//! Units: angular frequencies in rad/μs, times in μs. Use [`units`] to convert
//! from linear MHz/kHz.

// `!(x > 0.0)` style checks are how NaN is rejected alongside bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod duffing;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod limits;
pub mod model;
pub mod numerics;
pub mod tomography;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
