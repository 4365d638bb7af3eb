//! Forward and inverse toolkit for the time-fractional diffusion equation
//! on the unit disc with a source that is piecewise constant in time.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is pure
//! numerics; file formats, the command line and noise injection live in the
//! `fracsource` companion crate.
//!
//! Module map:
//!
//! - [`specfun`]: Gamma, Mittag-Leffler, Bessel functions, Bessel zeros,
//!   Gauss-Legendre rules and the Riemann-Liouville integral.
//! - [`spectrum`]: Dirichlet eigensystem of the Laplacian on the unit disc.
//! - [`forward`]: spectral solution, boundary flux synthesis, identities.
//! - [`laplace`]: Laplace-domain flux representation and adjoint objects.
//! - [`inversion`]: staged reconstruction of order, change points and modes.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// reference values are quoted with every published digit
#![allow(clippy::excessive_precision)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod forward;
pub mod inversion;
pub mod laplace;
pub mod linalg;
pub mod specfun;
pub mod spectrum;

pub use num_complex::Complex64;

pub use forward::{FluxTrace, ModelError, SensorConfig, SourceModel};
pub use inversion::{
    reconstruct, AlphaWindow, GroupedAmplitudes, InversionConfig, InversionError, ReconstructionResult,
    StageRecord,
};
pub use laplace::{LaplaceError, LaplacePoint, LaplaceSamples, TailSpec};
pub use specfun::{MLAccuracy, SampledTrace, SpecFunError};
pub use spectrum::{build_spectrum, EigenMode, ModeCoefficients, SpectrumError, SpectrumTable};

