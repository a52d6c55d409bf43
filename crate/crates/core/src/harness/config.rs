use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dgp::DgpOptions;
use crate::error::{PboError, Result};
use crate::gp::GpOptions;
use crate::profile::{LoopConfig, Method, SurrogateConfig, SurrogateKind};
use crate::testbed::{benchmark, BlackBox, OracleSettings, SubprocessBlackBox};

/// External simulator run over the line protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Native-scale bounds, one `[lo, hi]` pair per input.
    pub bounds: Vec<(f64, f64)>,
    /// Optional `xstar,T` table on the final grid; without it no metrics are
    /// computed.
    #[serde(default)]
    pub truth_csv: Option<PathBuf>,
}

/// One experiment: a function, a surrogate, a method and a repetition count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub function: String,
    pub surrogate: SurrogateKind,
    pub method: Method,
    pub n_init: usize,
    pub m_total: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub control_index: usize,
    pub axis_size: usize,
    pub final_axis_size: usize,
    pub samples: usize,
    pub cond_size: usize,
    pub dgp_iters_initial: usize,
    pub dgp_iters_warm: usize,
    pub dgp_retained: usize,
    pub dgp_draws_used: Option<usize>,
    pub fringe_frac: f64,
    pub ei_starts: usize,
    pub gp: GpOptions,
    pub oracle: OracleSettings,
    pub external: Option<ExternalSpec>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lc = LoopConfig::default();
        let dgp = DgpOptions::default();
        Self {
            function: "branin".into(),
            surrogate: SurrogateKind::Gp,
            method: Method::Pbo,
            n_init: 10,
            m_total: 30,
            repetitions: 1,
            seed: 1,
            control_index: 0,
            axis_size: lc.axis_size,
            final_axis_size: lc.final_axis_size,
            samples: lc.surrogate.samples,
            cond_size: lc.surrogate.cond_size,
            dgp_iters_initial: dgp.iters_initial,
            dgp_iters_warm: dgp.iters_warm,
            dgp_retained: dgp.retained,
            dgp_draws_used: None,
            fringe_frac: lc.fringe_frac,
            ei_starts: lc.ei_starts,
            gp: GpOptions::default(),
            oracle: OracleSettings::default(),
            external: None,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| PboError::Config(format!("bad experiment config: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PboError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PboError::Config(m));
        if self.n_init > self.m_total {
            return bad(format!("n_init {} exceeds m_total {}", self.n_init, self.m_total));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.axis_size == 0 || self.final_axis_size == 0 || self.samples == 0 || self.cond_size == 0 {
            return bad("axis sizes, samples and cond_size must be positive".into());
        }
        if !(self.fringe_frac > 0.0 && self.fringe_frac <= 1.0) {
            return bad(format!("fringe_frac {} not in (0, 1]", self.fringe_frac));
        }
        if self.surrogate == SurrogateKind::Dgp {
            if self.n_init < 5 && self.method != Method::Lhs {
                return bad("DGP surrogates need n_init >= 5".into());
            }
            let used = self.dgp_draws_used.unwrap_or(self.dgp_retained);
            if used == 0 || used > self.dgp_retained || self.samples % used != 0 {
                return bad(format!(
                    "samples ({}) must split evenly over {used} of {} retained DGP draws",
                    self.samples, self.dgp_retained
                ));
            }
        }
        match &self.external {
            None => {
                benchmark(&self.function, self.control_index)?;
            }
            Some(ext) => {
                if self.control_index >= ext.bounds.len() || ext.bounds.len() < 2 {
                    return bad("external black box needs d >= 2 and a valid control index".into());
                }
            }
        }
        Ok(())
    }

    /// Builds the black box named by the config.
    pub fn black_box(&self) -> Result<Box<dyn BlackBox>> {
        match &self.external {
            None => Ok(Box::new(benchmark(&self.function, self.control_index)?)),
            Some(ext) => Ok(Box::new(SubprocessBlackBox::spawn(
                self.function.clone(),
                &ext.command,
                &ext.args,
                ext.bounds.clone(),
                self.control_index,
            )?)),
        }
    }

    /// Loop settings for one repetition.
    pub fn loop_config(&self, seed: u64) -> LoopConfig {
        let mut dgp = DgpOptions::default();
        dgp.iters_initial = self.dgp_iters_initial;
        dgp.iters_warm = self.dgp_iters_warm;
        dgp.retained = self.dgp_retained;
        LoopConfig {
            surrogate: SurrogateConfig {
                kind: self.surrogate,
                gp: self.gp.clone(),
                dgp,
                samples: self.samples,
                cond_size: self.cond_size,
                dgp_draws_used: self.dgp_draws_used,
            },
            axis_size: self.axis_size,
            final_axis_size: self.final_axis_size,
            fringe_frac: self.fringe_frac,
            ei_starts: self.ei_starts,
            seed,
            checkpoint: None,
        }
    }

    /// Directory name of this experiment inside `output_dir`.
    pub fn label(&self) -> String {
        let s = match self.surrogate {
            SurrogateKind::Gp => "gp",
            SurrogateKind::Dgp => "dgp",
        };
        format!("{}_{}_{}", self.function, s, self.method.name())
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.function = "kyger3d".into();
        c.method = Method::BoEi;
        c.surrogate = SurrogateKind::Dgp;
        c.dgp_draws_used = Some(20);
        c.external = Some(ExternalSpec {
            command: "sim".into(),
            args: vec!["-q".into()],
            bounds: vec![(0.0, 1.0), (-2.0, 3.5)],
            truth_csv: None,
        });
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_documents_take_defaults() {
        let c = ExperimentConfig::from_json(r#"{"function": "kyger2d", "method": "lhs"}"#).unwrap();
        assert_eq!(c.method, Method::Lhs);
        assert_eq!(c.axis_size, 50);
        c.validate().unwrap();
    }

    #[test]
    fn validation_errors() {
        let unknown = ExperimentConfig::from_json(r#"{"function": "nope"}"#).unwrap();
        assert_eq!(unknown.validate().unwrap_err().kind(), "config");
        assert!(ExperimentConfig::from_json(r#"{"n_init": 40, "m_total": 30}"#).unwrap().validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"repetitions": 0}"#).unwrap().validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
