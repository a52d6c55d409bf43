use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::acquisition::{
    argmax_admissible, expected_improvement, profile_expected_improvement, select_nuisance, select_xstar,
};
use super::estimate::{estimate_profile, ProfileEstimate};
use super::surrogate::{FittedSurrogate, SurrogateConfig};
use crate::candidates::{tricands_plus, CandidateSet, DEFAULT_FRINGE_FRAC};
use crate::error::{invalid, PboError, Result};
use crate::optim::nelder_mead_box;
use crate::rng::{split_seed, stream_rng};
use crate::testbed::{eval_function, lhs_sample, lhs_sample_1d, linspace, BlackBox, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lhs,
    BoEi,
    Pei,
    Pbo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lhs => "lhs",
            Method::BoEi => "bo_ei",
            Method::Pei => "pei",
            Method::Pbo => "pbo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub surrogate: SurrogateConfig,
    /// Control-axis size of the random axis used during acquisition.
    pub axis_size: usize,
    /// Evenly spaced control grid for the reported estimate.
    pub final_axis_size: usize,
    pub fringe_frac: f64,
    /// Multistarts for EI maximization in the BO comparator.
    pub ei_starts: usize,
    pub seed: u64,
    /// Where to dump the design and trace when a loop aborts.
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            surrogate: SurrogateConfig::default(),
            axis_size: 50,
            final_axis_size: 100,
            fringe_frac: DEFAULT_FRINGE_FRAC,
            ei_starts: 20,
            seed: 0,
            checkpoint: None,
        }
    }
}

/// One acquisition, as written to the JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub iteration: usize,
    pub x_next: Vec<f64>,
    pub xstar_next: f64,
    pub criterion_value: f64,
    pub method: Method,
    /// Credible-interval width of the chosen slice (two-stage rule only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub xstar_width: Option<f64>,
    #[serde(default)]
    pub zero_utility: bool,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub data: Dataset,
    /// Estimate on the evenly spaced final grid.
    pub estimate: ProfileEstimate,
    /// Same grid, from the initial design's fit.
    pub initial_estimate: ProfileEstimate,
    pub records: Vec<AcquisitionRecord>,
    pub surrogate: FittedSurrogate,
}

/// Profile estimate of `sur` on the evenly spaced final grid.
pub fn final_estimate(sur: &FittedSurrogate, cfg: &LoopConfig, seed: u64) -> Result<ProfileEstimate> {
    let data = sur.data();
    let axis = linspace(cfg.final_axis_size);
    let cands = tricands_plus(&data.x, data.control_index, &axis, cfg.fringe_frac)?;
    let samples = sur.sample_joint(&cands.full, &cfg.surrogate, seed)?;
    estimate_profile(&samples, &cands)
}

struct Step {
    x: Vec<f64>,
    value: f64,
    width: Option<f64>,
    zero_utility: bool,
}

fn random_axis_estimate(
    sur: &FittedSurrogate,
    cfg: &LoopConfig,
    seed: u64,
) -> Result<(CandidateSet, ProfileEstimate)> {
    let data = sur.data();
    let axis = lhs_sample_1d(cfg.axis_size, &mut stream_rng(seed, 1))?;
    let cands = tricands_plus(&data.x, data.control_index, &axis, cfg.fringe_frac)?;
    let samples = sur.sample_joint(&cands.full, &cfg.surrogate, split_seed(seed, 2))?;
    let est = estimate_profile(&samples, &cands)?;
    Ok((cands, est))
}

fn pbo_step(sur: &FittedSurrogate, cfg: &LoopConfig, seed: u64) -> Result<Step> {
    let (cands, est) = random_axis_estimate(sur, cfg, seed)?;
    let choice = select_xstar(&est)?;
    let nu = select_nuisance(
        |xp| sur.predict_marginal(xp),
        &cands,
        choice.xstar,
        est.mu_t[choice.index],
        sur.data(),
    )?;
    Ok(Step {
        x: nu.x,
        value: nu.value,
        width: Some(choice.width),
        zero_utility: nu.zero_utility,
    })
}

fn pei_step(sur: &FittedSurrogate, cfg: &LoopConfig, seed: u64) -> Result<Step> {
    let (cands, est) = random_axis_estimate(sur, cfg, seed)?;
    let data = sur.data();
    let (mu, sd) = sur.predict_marginal(&cands.full)?;
    let c = cands.per_slice();
    let y_min = data.y_min();
    let values: Vec<f64> = (0..cands.full.nrows())
        .map(|r| profile_expected_improvement(mu[r], sd[r], y_min, est.mu_t[r / c]))
        .collect();
    let rows: Vec<Vec<f64>> = (0..cands.full.nrows())
        .map(|r| cands.full.row(r).iter().copied().collect())
        .collect();
    let excluded: Vec<bool> = rows.iter().map(|x| data.contains(x, 1e-9)).collect();
    let best = argmax_admissible(&values, &excluded)
        .ok_or_else(|| PboError::Degenerate("every candidate was already evaluated".into()))?;
    Ok(Step {
        x: rows[best].clone(),
        value: values[best],
        width: None,
        zero_utility: !(values[best] > 0.0),
    })
}

fn ei_step(sur: &FittedSurrogate, cfg: &LoopConfig, seed: u64) -> Result<Step> {
    let data = sur.data();
    let d = data.dim();
    let y_min = data.y_min();
    let ei = |x: &[f64]| -> f64 {
        let xp = DMatrix::from_row_slice(1, d, x);
        match sur.predict_marginal(&xp) {
            Ok((m, s)) => expected_improvement(m[0], s[0], y_min),
            Err(_) => 0.0,
        }
    };
    let starts = lhs_sample(cfg.ei_starts.max(1), d, &mut stream_rng(seed, 1))?;
    let (lo, hi) = (vec![0.0; d], vec![1.0; d]);
    let mut found: Vec<(Vec<f64>, f64)> = (0..starts.nrows())
        .map(|i| {
            let x0: Vec<f64> = starts.row(i).iter().copied().collect();
            let r = nelder_mead_box(&|x: &[f64]| -ei(x), &x0, &lo, &hi, 0.05, 200, 1e-10);
            (r.x, -r.value)
        })
        .collect();
    // Stable sort keeps start order on ties.
    found.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (x, value) = found
        .into_iter()
        .find(|(x, _)| !data.contains(x, 1e-9))
        .ok_or_else(|| PboError::Degenerate("every EI optimum was already evaluated".into()))?;
    Ok(Step {
        x,
        value,
        width: None,
        zero_utility: !(value > 0.0),
    })
}

fn write_checkpoint(cfg: &LoopConfig, data: &Dataset, records: &[AcquisitionRecord]) {
    if let Some(path) = &cfg.checkpoint {
        let doc = serde_json::json!({ "data": data, "records": records });
        let _ = std::fs::write(path, doc.to_string());
    }
}

fn sequential(
    method: Method,
    bb: &dyn BlackBox,
    init: &Dataset,
    m: usize,
    cfg: &LoopConfig,
) -> Result<LoopOutcome> {
    if m < init.n() {
        return invalid(format!("budget {m} is below the initial design size {}", init.n()));
    }
    let mut data = init.clone();
    let mut sur = FittedSurrogate::fit(&data, &cfg.surrogate, split_seed(cfg.seed, 1))?;
    let initial_estimate = final_estimate(&sur, cfg, split_seed(cfg.seed, 2))?;
    let mut records = Vec::with_capacity(m - init.n());
    for it in 0..m - init.n() {
        let seed = split_seed(cfg.seed, 1000 + it as u64);
        let step = match method {
            Method::Pbo => pbo_step(&sur, cfg, seed),
            Method::Pei => pei_step(&sur, cfg, seed),
            Method::BoEi => ei_step(&sur, cfg, seed),
            Method::Lhs => unreachable!("the LHS baseline is not sequential"),
        };
        let step = step.map_err(|e| {
            write_checkpoint(cfg, &data, &records);
            annotate(e, it)
        })?;
        let y = eval_function(bb, &step.x)?;
        data.push(&step.x, y)?;
        records.push(AcquisitionRecord {
            iteration: it,
            xstar_next: step.x[data.control_index],
            x_next: step.x,
            criterion_value: step.value,
            method,
            xstar_width: step.width,
            zero_utility: step.zero_utility,
            y,
        });
        sur = sur.refit(&data, &cfg.surrogate, split_seed(seed, 3)).map_err(|e| {
            write_checkpoint(cfg, &data, &records);
            annotate(e, it)
        })?;
    }
    let estimate = if records.is_empty() {
        initial_estimate.clone()
    } else {
        final_estimate(&sur, cfg, split_seed(cfg.seed, 3))?
    };
    Ok(LoopOutcome {
        data,
        estimate,
        initial_estimate,
        records,
        surrogate: sur,
    })
}

fn annotate(e: PboError, it: usize) -> PboError {
    match e {
        PboError::NumericalFailure(m) => PboError::NumericalFailure(format!("acquisition {it}: {m}")),
        PboError::Degenerate(m) => PboError::Degenerate(format!("acquisition {it}: {m}")),
        other => other,
    }
}

/// Two-stage profile BO: widest-interval slice, then PEI on that slice.
pub fn pbo_loop(bb: &dyn BlackBox, init: &Dataset, m: usize, cfg: &LoopConfig) -> Result<LoopOutcome> {
    sequential(Method::Pbo, bb, init, m, cfg)
}

/// Single-stage comparator: PEI maximized over the whole candidate set.
pub fn pei_loop(bb: &dyn BlackBox, init: &Dataset, m: usize, cfg: &LoopConfig) -> Result<LoopOutcome> {
    sequential(Method::Pei, bb, init, m, cfg)
}

/// Classic BO comparator: EI maximized by multistart local search.
pub fn bo_ei_loop(bb: &dyn BlackBox, init: &Dataset, m: usize, cfg: &LoopConfig) -> Result<LoopOutcome> {
    sequential(Method::BoEi, bb, init, m, cfg)
}

/// Space-filling baseline: one fresh `m`-point Latin hypercube.
pub fn lhs_baseline(bb: &dyn BlackBox, m: usize, control_index: usize, cfg: &LoopConfig) -> Result<LoopOutcome> {
    let d = bb.dim();
    let x = lhs_sample(m, d, &mut stream_rng(cfg.seed, 7))?;
    let y = DVector::from_iterator(
        m,
        (0..m).map(|i| eval_function(bb, &x.row(i).iter().copied().collect::<Vec<_>>())).collect::<Result<Vec<_>>>()?,
    );
    let data = Dataset::new(x, y, control_index)?;
    let sur = FittedSurrogate::fit(&data, &cfg.surrogate, split_seed(cfg.seed, 1))?;
    let estimate = final_estimate(&sur, cfg, split_seed(cfg.seed, 3))?;
    Ok(LoopOutcome {
        data,
        initial_estimate: estimate.clone(),
        estimate,
        records: Vec::new(),
        surrogate: sur,
    })
}

/// Dispatches on `method`; the LHS baseline only uses `init` for its shape.
pub fn run_method(
    method: Method,
    bb: &dyn BlackBox,
    init: &Dataset,
    m: usize,
    cfg: &LoopConfig,
) -> Result<LoopOutcome> {
    match method {
        Method::Lhs => lhs_baseline(bb, m, init.control_index, cfg),
        other => sequential(other, bb, init, m, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::benchmark;

    fn setup(n: usize) -> (crate::testbed::Benchmark, Dataset, LoopConfig) {
        let f = benchmark("branin", 0).unwrap();
        let x = lhs_sample(n, 2, &mut stream_rng(3, 0)).unwrap();
        let y = DVector::from_fn(n, |i, _| eval_function(&f, &[x[(i, 0)], x[(i, 1)]]).unwrap());
        let mut cfg = LoopConfig::default();
        cfg.axis_size = 10;
        cfg.final_axis_size = 11;
        cfg.surrogate.samples = 100;
        cfg.ei_starts = 4;
        (f, Dataset::new(x, y, 0).unwrap(), cfg)
    }

    #[test]
    fn zero_acquisitions_return_initial_estimate() {
        let (f, init, cfg) = setup(8);
        let out = pbo_loop(&f, &init, 8, &cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.estimate, out.initial_estimate);
        assert_eq!(out.estimate.xstar_values.len(), 11);
    }

    #[test]
    fn every_method_adds_new_points() {
        let (f, init, cfg) = setup(8);
        for method in [Method::Pbo, Method::Pei, Method::BoEi] {
            let out = run_method(method, &f, &init, 11, &cfg).unwrap();
            assert_eq!(out.data.n(), 11);
            assert_eq!(out.records.len(), 3);
            for (i, r) in out.records.iter().enumerate() {
                assert_eq!(r.xstar_next, r.x_next[0]);
                assert!(r.x_next.iter().all(|v| (0.0..=1.0).contains(v)));
                for j in 0..8 + i {
                    let prev = out.data.row(j);
                    assert!(prev.iter().zip(&r.x_next).any(|(a, b)| (a - b).abs() > 1e-9));
                }
            }
        }
    }

    #[test]
    fn budget_below_design_is_rejected() {
        let (f, init, cfg) = setup(8);
        assert!(pbo_loop(&f, &init, 7, &cfg).is_err());
    }

    #[test]
    fn lhs_baseline_has_budget_points() {
        let (f, _, cfg) = setup(8);
        let out = lhs_baseline(&f, 12, 0, &cfg).unwrap();
        assert_eq!(out.data.n(), 12);
        assert!(out.records.is_empty());
    }

    #[test]
    fn record_serializes_as_one_line() {
        let r = AcquisitionRecord {
            iteration: 0,
            x_next: vec![0.1, 0.2],
            xstar_next: 0.1,
            criterion_value: 0.5,
            method: Method::BoEi,
            xstar_width: None,
            zero_utility: false,
            y: 1.0,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(!s.contains('\n'));
        assert!(s.contains("\"bo_ei\""));
        assert_eq!(serde_json::from_str::<AcquisitionRecord>(&s).unwrap(), r);
    }
}
