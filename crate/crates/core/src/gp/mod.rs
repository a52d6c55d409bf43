//! Stationary GP regression with separable Matérn kernels.

mod fit;
mod kernel;
mod vecchia;

pub use fit::{fit_gp, GpFit, GpOptions, Hyperparameters, Posterior};
pub use kernel::{matern_corr, Kernel, Smoothness};
pub use vecchia::{sample_joint, JointSamples, VecchiaPlan, VecchiaStructure};
