//! Conversions between linear frequencies and the internal angular units.
//!
//! Internally every frequency is an angular frequency in rad/μs and every
//! time is in μs, so 1 MHz (linear) is 2π rad/μs.

use std::f64::consts::TAU;

/// Linear frequency in MHz to rad/μs.
pub fn mhz(f: f64) -> f64 {
    TAU * f
}

/// Linear frequency in kHz to rad/μs.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e-3
}

/// rad/μs to linear MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / TAU
}

/// rad/μs to linear kHz.
pub fn to_khz(w: f64) -> f64 {
    w / TAU * 1e3
}

/// Squeezing in dB relative to the vacuum variance 1/2; negative when squeezed.
pub fn variance_to_db(v: f64) -> f64 {
    10.0 * (v / 0.5).log10()
}

pub fn db_to_variance(db: f64) -> f64 {
    0.5 * 10f64.powf(db / 10.0)
}
