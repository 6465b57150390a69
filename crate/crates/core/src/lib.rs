//! Robust predictor feedback for reaction-diffusion PDEs with an uncertain
//! time- and space-varying input delay.
//!
//! The pipeline is:
//!
//! 1. [`spectral`] solves the Robin Sturm–Liouville eigenproblem of the
//!    diffusion operator and projects functions on `[0, 1]` onto its modes.
//! 2. [`design`] truncates to the unstable modes, places the closed-loop
//!    poles of the nominal predictor design and searches for the largest
//!    delay deviation certified by the small-gain condition.
//! 3. [`delay`] describes the delay field `D(t, ξ)` and stores the past
//!    control samples needed to evaluate `w(t - D(t, ξ))`.
//! 4. [`control`] implements the transition ramp and the discretized
//!    constant-delay predictor.
//! 5. [`sim`] integrates the closed loop in modal coordinates and checks it
//!    against an independent finite-difference solver.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod delay;
pub mod design;
mod error;
pub mod linalg;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
