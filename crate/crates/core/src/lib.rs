//! Multi-arm multi-stage trials with a shared control: closed-test design,
//! conditional-error amendment when arms are added mid-trial, and Monte Carlo
//! operating characteristics.

pub mod amend;
pub mod design;
pub mod document;
pub mod gaussian;
pub mod rng;
pub mod simulator;
pub mod twoarm;

mod error;
mod estimate;

pub use error::{Error, Result};
pub use estimate::Estimate;

/// Effect giving 90% power for the planned two-arm test at one-sided 5%.
pub fn delta_two_arm() -> f64 {
    gaussian::normal_quantile(0.95) + gaussian::normal_quantile(0.9)
}

/// Clinically relevant effect of the multi-arm example, `Φ⁻¹(0.75)√2`.
pub fn delta_mams() -> f64 {
    gaussian::normal_quantile(0.75) * std::f64::consts::SQRT_2
}
