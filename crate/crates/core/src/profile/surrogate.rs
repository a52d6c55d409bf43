use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::{dgp_predict_marginal, dgp_sample_joint_subset, fit_dgp, fit_dgp_warm, DgpOptions, DgpState};
use crate::error::{invalid, Result};
use crate::gp::{fit_gp, sample_joint, GpFit, GpOptions, JointSamples};
use crate::rng::stream_rng;
use crate::testbed::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateKind {
    Gp,
    Dgp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    pub gp: GpOptions,
    pub dgp: DgpOptions,
    /// Joint posterior samples per profile estimate.
    pub samples: usize,
    pub cond_size: usize,
    /// Retained DGP draws used for joint sampling; `None` uses all of them.
    pub dgp_draws_used: Option<usize>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kind: SurrogateKind::Gp,
            gp: GpOptions::default(),
            dgp: DgpOptions::default(),
            samples: 1000,
            cond_size: 40,
            dgp_draws_used: None,
        }
    }
}

/// A trained surrogate of either kind.
#[derive(Debug, Clone)]
pub enum FittedSurrogate {
    Gp(GpFit),
    Dgp(DgpState),
}

impl FittedSurrogate {
    /// Fits from scratch.
    pub fn fit(data: &Dataset, cfg: &SurrogateConfig, seed: u64) -> Result<Self> {
        match cfg.kind {
            SurrogateKind::Gp => Ok(Self::Gp(fit_gp(data, &cfg.gp)?)),
            SurrogateKind::Dgp => Ok(Self::Dgp(fit_dgp(
                data,
                &cfg.dgp,
                cfg.dgp.iters_initial,
                &mut stream_rng(seed, 0),
            )?)),
        }
    }

    /// Refits after `data` grew; a DGP continues its previous chain.
    pub fn refit(&self, data: &Dataset, cfg: &SurrogateConfig, seed: u64) -> Result<Self> {
        match self {
            Self::Gp(_) => Ok(Self::Gp(fit_gp(data, &cfg.gp)?)),
            Self::Dgp(prev) => Ok(Self::Dgp(fit_dgp_warm(
                prev,
                data,
                cfg.dgp.iters_warm,
                &mut stream_rng(seed, 0),
            )?)),
        }
    }

    pub fn data(&self) -> &Dataset {
        match self {
            Self::Gp(f) => &f.data,
            Self::Dgp(s) => &s.data,
        }
    }

    /// `cfg.samples` joint posterior draws at `xp`.
    pub fn sample_joint(&self, xp: &DMatrix<f64>, cfg: &SurrogateConfig, seed: u64) -> Result<JointSamples> {
        match self {
            Self::Gp(f) => sample_joint(f, xp, cfg.samples, cfg.cond_size, &mut stream_rng(seed, 0)),
            Self::Dgp(s) => {
                let used = cfg.dgp_draws_used.unwrap_or(s.draws.len()).min(s.draws.len());
                if used == 0 || cfg.samples % used != 0 {
                    return invalid(format!(
                        "{} samples cannot be split evenly over {used} DGP draws",
                        cfg.samples
                    ));
                }
                dgp_sample_joint_subset(s, xp, used, cfg.samples / used, cfg.cond_size, seed)
            }
        }
    }

    /// Pointwise predictive mean and sd on the response scale.
    pub fn predict_marginal(&self, xp: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Gp(f) => f.predict_marginal(xp),
            Self::Dgp(s) => dgp_predict_marginal(s, xp),
        }
    }
}
