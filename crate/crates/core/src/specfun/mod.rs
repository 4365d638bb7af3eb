//! Scalar special functions and fractional-integral quadrature.
//!
//! All routines are deterministic and reentrant.

mod bessel;
mod fractional;
mod gamma;
mod mittag_leffler;
pub mod quadrature;

pub use bessel::{bessel_j, bessel_j_derivative, bessel_j_zeros, bessel_j_zeros_below};
pub use fractional::{fractional_integral, SampledTrace, TraceValue};
pub use gamma::{gamma_fn, ln_gamma_pos, rgamma, sinpi};
pub use mittag_leffler::{mittag_leffler, mittag_leffler_with, MLAccuracy, MittagLeffler};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFunError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("Gamma function pole at x = {0}")]
    Pole(f64),
    #[error("accuracy target not met: achieved error bound {achieved:e}")]
    Accuracy { achieved: f64 },
    #[error("invalid sampled trace: {0}")]
    InvalidTrace(&'static str),
    #[error("root bracketing failed for J_{m} zero #{k}")]
    Bracketing { m: u32, k: usize },
}
