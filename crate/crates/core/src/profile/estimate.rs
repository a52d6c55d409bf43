use std::io::Write;

use nalgebra::DMatrix;

use crate::candidates::CandidateSet;
use crate::error::{invalid, Result};
use crate::gp::JointSamples;

/// Empirical distribution of slice minima, summarized per control value.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEstimate {
    pub xstar_values: Vec<f64>,
    pub mu_t: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub ci_width: Vec<f64>,
    /// Sampled minima, one row per control value and one column per draw.
    pub per_slice_minima: DMatrix<f64>,
}

/// Sample quantile with linear interpolation between order statistics
/// (the usual "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ProfileEstimate {
    /// Builds an estimate from precomputed summaries (no per-draw minima).
    pub fn from_summaries(xstar: Vec<f64>, mu: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let width = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
        let g = xstar.len();
        Self {
            xstar_values: xstar,
            mu_t: mu,
            ci_lo: lo,
            ci_hi: hi,
            ci_width: width,
            per_slice_minima: DMatrix::zeros(g, 0),
        }
    }

    /// Summarizes a `g x S` matrix of sampled slice minima.
    pub fn from_minima(xstar: Vec<f64>, minima: DMatrix<f64>) -> Self {
        let g = minima.nrows();
        let mut mu = Vec::with_capacity(g);
        let mut lo = Vec::with_capacity(g);
        let mut hi = Vec::with_capacity(g);
        for k in 0..g {
            let mut row: Vec<f64> = minima.row(k).iter().copied().collect();
            mu.push(row.iter().sum::<f64>() / row.len() as f64);
            row.sort_by(f64::total_cmp);
            lo.push(quantile_sorted(&row, 0.025));
            hi.push(quantile_sorted(&row, 0.975));
        }
        let mut est = Self::from_summaries(xstar, mu, lo, hi);
        est.per_slice_minima = minima;
        est
    }

    pub fn len(&self) -> usize {
        self.xstar_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xstar_values.is_empty()
    }

    /// Writes `xstar,mu_T,ci_lo,ci_hi` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "xstar,mu_T,ci_lo,ci_hi")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.xstar_values[k], self.mu_t[k], self.ci_lo[k], self.ci_hi[k]
            )?;
        }
        Ok(())
    }
}

/// Profile estimate from joint draws over a modified-tricands set: for each
/// draw and control value, the minimum over that slice's candidates.
pub fn estimate_profile(samples: &JointSamples, candidates: &CandidateSet) -> Result<ProfileEstimate> {
    let c = candidates.per_slice();
    let g = candidates.xstar_axis.len();
    if c == 0 {
        return invalid("slices contain no candidates");
    }
    if samples.draws.ncols() != g * c || samples.locations.nrows() != g * c {
        return invalid(format!(
            "samples cover {} locations but the candidate set has {}",
            samples.draws.ncols(),
            g * c
        ));
    }
    let s = samples.draws.nrows();
    let mut minima = DMatrix::zeros(g, s);
    for draw in 0..s {
        let row = samples.draws.row(draw);
        for k in 0..g {
            let mut m = f64::INFINITY;
            for j in 0..c {
                m = m.min(row[k * c + j]);
            }
            minima[(k, draw)] = m;
        }
    }
    Ok(ProfileEstimate::from_minima(candidates.xstar_axis.clone(), minima))
}
