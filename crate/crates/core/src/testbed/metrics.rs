use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::profile::ProfileEstimate;

/// Accuracy and uncertainty summary of a profile estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub maxad: f64,
    pub avgci: f64,
    pub coverage: f64,
    pub grid_size: usize,
}

pub fn compute_metrics(estimate: &ProfileEstimate, truth: &[f64]) -> Result<MetricsReport> {
    let g = estimate.xstar_values.len();
    if g == 0 || truth.len() != g {
        return invalid(format!(
            "estimate has {g} grid points but truth has {}",
            truth.len()
        ));
    }
    let mut sq = 0.0;
    let mut maxad: f64 = 0.0;
    let mut width = 0.0;
    let mut covered = 0usize;
    for k in 0..g {
        let err = estimate.mu_t[k] - truth[k];
        sq += err * err;
        maxad = maxad.max(err.abs());
        width += estimate.ci_width[k];
        if estimate.ci_lo[k] <= truth[k] && truth[k] <= estimate.ci_hi[k] {
            covered += 1;
        }
    }
    Ok(MetricsReport {
        rmse: (sq / g as f64).sqrt(),
        maxad,
        avgci: width / g as f64,
        coverage: covered as f64 / g as f64,
        grid_size: g,
    })
}
