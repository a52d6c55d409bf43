//! Profile Bayesian optimization.
//!
//! Estimates the profile optima `T(x*) = min over x^{-*} of f(x*, x^{-*})`
//! of an expensive deterministic black box across the full range of one
//! control input. Joint posterior draws from a GP or two-layer deep GP
//! surrogate are taken over a triangulation-based candidate set; slice
//! minima of those draws give the estimate and its credible band. New
//! evaluations come from a two-stage rule: pick the control value whose
//! band is widest, then maximize profile expected improvement on that slice.

pub mod candidates;
pub mod dgp;
pub mod error;
pub mod gp;
pub mod harness;
pub mod optim;
pub mod profile;
pub mod rng;
pub mod testbed;

pub use error::{PboError, Result};
