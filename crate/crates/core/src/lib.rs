//! Desk-scale numerical laboratory for nonlinear potential theory on
//! conformally flat backgrounds.
//!
//! The crate is organized around a handful of interlocking pieces:
//!
//! * [`spectra`] - pointwise linear algebra of Schouten eigenvalue spectra:
//!   intermediate curvature spectra, positivity cones, and the curvature
//!   operator eigenvalue on r-forms.
//! * [`measure`] - nonnegative finite Radon measures with ball-mass queries
//!   and growth-exponent estimation.
//! * [`wolff`] - Wolff potentials with certified dyadic quadrature bounds,
//!   the Kilpelainen-Maly sandwich harness, and the four-term dyadic split
//!   with its exceptional-set capacity budgets.
//! * [`capacity`] - variational p-capacity of condensers by grid
//!   minimization of the p-Dirichlet energy, with closed-form radial oracles.
//! * [`thinness`] - dyadic annulus machinery, p-thinness partial sums (both
//!   the capacity-density sum and the Wiener-type sum), and escape-ray search.
//! * [`conformal`] - curvature of conformally flat metrics from a conformal
//!   factor, p-Laplacians, equation residuals, and conformal ray length.
//! * [`dimension`] - box-counting dimension, Frostman point selection, and
//!   the orchestrated tightness experiment.
//! * [`verify`] - the acceptance suites wired into both `cargo test` and the
//!   CLI `verify` subcommand.
//!
//! All randomness is derived from explicit seeds and all floating-point
//! reductions are order-deterministic, so reports are bit-reproducible for a
//! fixed configuration and build.

// Parameter guards are written as negated comparisons (`!(p > 1.0)`) on
// purpose: they reject NaN along with out-of-range values. Stencil and
// tensor kernels keep explicit index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod capacity;
pub mod conformal;
pub mod dimension;
pub mod error;
pub mod geom;
pub mod grid;
pub mod measure;
pub mod report;
pub mod spectra;
pub mod thinness;
pub mod verify;
pub mod wolff;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
