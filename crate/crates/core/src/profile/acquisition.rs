use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::estimate::ProfileEstimate;
use crate::candidates::CandidateSet;
use crate::error::{invalid, PboError, Result};
use crate::testbed::Dataset;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Expected improvement below `threshold` of `Y ~ N(mu, sigma^2)`.
pub fn expected_improvement(mu: f64, sigma: f64, threshold: f64) -> f64 {
    let gap = threshold - mu;
    if !(sigma > 0.0) {
        return gap.max(0.0);
    }
    let z = gap / sigma;
    (gap * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0)
}

/// Expected improvement with the threshold raised to the slice's estimated
/// profile value when that exceeds the best observation.
pub fn profile_expected_improvement(mu: f64, sigma: f64, y_min: f64, mu_t: f64) -> f64 {
    if mu_t <= y_min {
        expected_improvement(mu, sigma, y_min)
    } else {
        expected_improvement(mu, sigma, mu_t)
    }
}

/// Slice picked by the exploration stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XstarChoice {
    pub index: usize,
    pub xstar: f64,
    pub width: f64,
}

/// Axis value with the widest credible interval; lowest index on ties.
pub fn select_xstar(estimate: &ProfileEstimate) -> Result<XstarChoice> {
    if estimate.is_empty() {
        return invalid("empty profile estimate");
    }
    let mut best = 0;
    for (k, &w) in estimate.ci_width.iter().enumerate() {
        if w > estimate.ci_width[best] {
            best = k;
        }
    }
    Ok(XstarChoice {
        index: best,
        xstar: estimate.xstar_values[best],
        width: estimate.ci_width[best],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceChoice {
    pub x: Vec<f64>,
    pub candidate: usize,
    pub value: f64,
    /// Every admissible candidate had zero utility.
    pub zero_utility: bool,
}

/// Index of the largest value among those not excluded; lowest index on ties.
pub(crate) fn argmax_admissible(values: &[f64], excluded: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if excluded[i] {
            continue;
        }
        match best {
            Some(b) if !(v > values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Exploitation stage: maximizes PEI over the nuisance candidates of the
/// slice at `xstar`. `predict` returns pointwise mean and sd on the response
/// scale. Candidates already in `data` are skipped.
pub fn select_nuisance<P>(
    predict: P,
    cands: &CandidateSet,
    xstar: f64,
    mu_t: f64,
    data: &Dataset,
) -> Result<NuisanceChoice>
where
    P: Fn(&nalgebra::DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let c = cands.per_slice();
    if c == 0 {
        return invalid("empty candidate set");
    }
    let rows: Vec<Vec<f64>> = (0..c).map(|j| cands.assemble(xstar, j)).collect();
    let xp = nalgebra::DMatrix::from_fn(c, data.dim(), |i, k| rows[i][k]);
    let (mu, sd) = predict(&xp)?;
    let y_min = data.y_min();
    let values: Vec<f64> = mu
        .iter()
        .zip(&sd)
        .map(|(&m, &s)| profile_expected_improvement(m, s, y_min, mu_t))
        .collect();
    let excluded: Vec<bool> = rows.iter().map(|r| data.contains(r, 1e-9)).collect();
    let best = argmax_admissible(&values, &excluded)
        .ok_or_else(|| PboError::Degenerate(format!("every candidate on slice x* = {xstar} was already evaluated")))?;
    Ok(NuisanceChoice {
        x: rows[best].clone(),
        candidate: best,
        value: values[best],
        zero_utility: !(values[best] > 0.0),
    })
}
