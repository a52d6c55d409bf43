//! Two-layer deep GP: a latent layer `W` (one node per input, prior mean
//! `X`) warps the inputs of a stationary outer GP. The latent layer is
//! inferred by elliptical slice sampling, lengthscales by random-walk
//! Metropolis.

mod ess;
mod fit;
mod predict;

pub use ess::{ellipse_point, ess_update, EssOutcome};
pub use fit::{fit_dgp, fit_dgp_warm, DgpDraw, DgpOptions, DgpState, GammaPrior, McmcLog};
pub use predict::{dgp_predict_marginal, dgp_sample_joint, dgp_sample_joint_subset};
