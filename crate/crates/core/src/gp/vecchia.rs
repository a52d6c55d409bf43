//! Vecchia-approximated joint posterior sampling.
//!
//! Prediction locations are visited in maximin order. Each one is drawn from
//! its univariate Gaussian conditional given its `cond_size` nearest
//! neighbours (lengthscale-scaled distance) among the training inputs and
//! the locations already sampled. With a conditioning set covering every
//! earlier point the sampler is exact.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::fit::GpFit;
use super::kernel::Kernel;
use crate::error::{invalid, PboError, Result};

/// Joint posterior realizations at a fixed set of locations.
#[derive(Debug, Clone)]
pub struct JointSamples {
    pub locations: DMatrix<f64>,
    /// One joint realization per row.
    pub draws: DMatrix<f64>,
    pub conditioning_size: usize,
}

struct Step {
    target: usize,
    base_mean: f64,
    pred_neighbors: Vec<usize>,
    pred_weights: Vec<f64>,
    sd: f64,
}

/// Precomputed conditional weights; independent of the random draws, so one
/// plan serves any number of samples.
pub struct VecchiaPlan {
    n_pred: usize,
    steps: Vec<Step>,
}

/// Maximin ordering of `pred`, treating `fixed` as already placed.
fn maximin_order(pred: &[Vec<f64>], fixed: &[Vec<f64>]) -> Vec<usize> {
    let n = pred.len();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut min_d: Vec<f64> = pred
        .iter()
        .map(|p| fixed.iter().map(|f| sq(p, f)).fold(f64::INFINITY, f64::min))
        .collect();
    if fixed.is_empty() {
        // Start from the point nearest the centroid.
        let dim = pred.first().map_or(0, |p| p.len());
        let mut c = vec![0.0; dim];
        for p in pred {
            for (ci, v) in c.iter_mut().zip(p) {
                *ci += v / n as f64;
            }
        }
        if let Some((first, _)) = pred
            .iter()
            .enumerate()
            .min_by(|a, b| sq(a.1, &c).total_cmp(&sq(b.1, &c)))
        {
            min_d[first] = f64::MAX;
        }
    }
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if !placed[i] && min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        placed[best] = true;
        order.push(best);
        let chosen = &pred[best];
        for i in 0..n {
            if !placed[i] {
                let d = sq(&pred[i], chosen);
                if d < min_d[i] {
                    min_d[i] = d;
                }
            }
        }
    }
    order
}

/// Visiting order and conditioning sets. Indices below `n_train` refer to
/// training points, the rest to prediction points offset by `n_train`.
#[derive(Debug, Clone)]
pub struct VecchiaStructure {
    n_train: usize,
    n_pred: usize,
    order: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
}

impl VecchiaStructure {
    /// Neighbour sets by Euclidean distance on the given (already scaled)
    /// coordinates.
    pub fn new(train: &[Vec<f64>], pred: &[Vec<f64>], cond_size: usize) -> Result<Self> {
        if cond_size == 0 {
            return invalid("conditioning set size must be at least 1");
        }
        let n_train = train.len();
        let order = maximin_order(pred, train);
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let mut neighbors = Vec::with_capacity(pred.len());
        let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n_train + pred.len());
        for (pos, &p) in order.iter().enumerate() {
            dists.clear();
            let sp = &pred[p];
            for (i, t) in train.iter().enumerate() {
                dists.push((sq(sp, t), i));
            }
            for &q in &order[..pos] {
                dists.push((sq(sp, &pred[q]), n_train + q));
            }
            let m = cond_size.min(dists.len());
            if m < dists.len() {
                dists.select_nth_unstable_by(m - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dists.truncate(m);
            }
            let mut nb: Vec<usize> = dists.iter().map(|&(_, i)| i).collect();
            nb.sort_unstable();
            neighbors.push(nb);
        }
        Ok(Self {
            n_train,
            n_pred: pred.len(),
            order,
            neighbors,
        })
    }
}

impl VecchiaPlan {
    /// Plans sampling of a zero-mean GP with covariance `kernel` at `pred`,
    /// conditioned on `train_values` observed at `train`.
    pub fn new(
        train: &[Vec<f64>],
        train_values: &[f64],
        pred: &[Vec<f64>],
        kernel: &Kernel,
        cond_size: usize,
    ) -> Result<Self> {
        let structure = VecchiaStructure::new(&kernel.scale_points(train), &kernel.scale_points(pred), cond_size)?;
        Self::with_structure(&structure, train, train_values, pred, kernel)
    }

    /// Plans with a precomputed ordering and conditioning sets, which must
    /// have been built for the same number of training and prediction points.
    pub fn with_structure(
        structure: &VecchiaStructure,
        train: &[Vec<f64>],
        train_values: &[f64],
        pred: &[Vec<f64>],
        kernel: &Kernel,
    ) -> Result<Self> {
        if train.len() != train_values.len() {
            return invalid("training values do not match training points");
        }
        if structure.n_train != train.len() || structure.n_pred != pred.len() {
            return invalid("conditioning structure was built for different point sets");
        }
        let n_train = train.len();
        let point = |i: usize| -> &[f64] {
            if i < n_train {
                &train[i]
            } else {
                &pred[i - n_train]
            }
        };
        let prior_var = kernel.diag();
        let mut steps = Vec::with_capacity(pred.len());
        for (&p, neighbors) in structure.order.iter().zip(&structure.neighbors) {
            let m = neighbors.len();
            if m == 0 {
                steps.push(Step {
                    target: p,
                    base_mean: 0.0,
                    pred_neighbors: Vec::new(),
                    pred_weights: Vec::new(),
                    sd: prior_var.sqrt(),
                });
                continue;
            }
            let mut kcc = DMatrix::from_element(m, m, prior_var);
            for a in 0..m {
                for b in 0..a {
                    let v = kernel.cross(point(neighbors[a]), point(neighbors[b]));
                    kcc[(a, b)] = v;
                    kcc[(b, a)] = v;
                }
            }
            let kc = DVector::from_fn(m, |a, _| kernel.cross(point(neighbors[a]), &pred[p]));
            let chol = Cholesky::new(kcc).ok_or_else(|| {
                PboError::NumericalFailure(format!(
                    "conditioning covariance for prediction point {p} is not positive definite"
                ))
            })?;
            let w = chol.solve(&kc);
            let var = prior_var - kc.dot(&w);
            if var < -1e-8 * prior_var || !var.is_finite() {
                return Err(PboError::NumericalFailure(format!(
                    "negative conditional variance {var:e} at prediction point {p}"
                )));
            }
            let mut base_mean = 0.0;
            let mut pred_neighbors = Vec::new();
            let mut pred_weights = Vec::new();
            for (a, &nb) in neighbors.iter().enumerate() {
                if nb < n_train {
                    base_mean += w[a] * train_values[nb];
                } else {
                    pred_neighbors.push(nb - n_train);
                    pred_weights.push(w[a]);
                }
            }
            steps.push(Step {
                target: p,
                base_mean,
                pred_neighbors,
                pred_weights,
                sd: var.max(0.0).sqrt(),
            });
        }
        Ok(Self {
            n_pred: pred.len(),
            steps,
        })
    }

    pub fn n_pred(&self) -> usize {
        self.n_pred
    }

    /// Writes one joint draw into `out` (indexed like the prediction points).
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for step in &self.steps {
            let mut v = step.base_mean;
            for (&q, &w) in step.pred_neighbors.iter().zip(&step.pred_weights) {
                v += w * out[q];
            }
            let z: f64 = rng.sample(StandardNormal);
            out[step.target] = v + step.sd * z;
        }
    }
}

/// Vecchia joint posterior samples of a fitted GP, original response scale.
pub fn sample_joint<R: Rng + ?Sized>(
    fit: &GpFit,
    xp: &DMatrix<f64>,
    samples: usize,
    cond_size: usize,
    rng: &mut R,
) -> Result<JointSamples> {
    if samples == 0 {
        return invalid("need at least one sample");
    }
    if xp.ncols() != fit.data.dim() {
        return invalid("prediction points have the wrong dimension");
    }
    let pred: Vec<Vec<f64>> = (0..xp.nrows()).map(|i| xp.row(i).iter().copied().collect()).collect();
    let y: Vec<f64> = fit.y_standardized().iter().copied().collect();
    let plan = VecchiaPlan::new(fit.train_points(), &y, &pred, &fit.kernel(), cond_size)?;
    let mut draws = DMatrix::zeros(samples, pred.len());
    let mut buf = vec![0.0; pred.len()];
    for s in 0..samples {
        plan.draw_into(rng, &mut buf);
        for (j, v) in buf.iter().enumerate() {
            draws[(s, j)] = fit.data.destandardize(*v);
        }
    }
    Ok(JointSamples {
        locations: xp.clone(),
        draws,
        conditioning_size: cond_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit_gp, GpOptions};
    use crate::rng::stream_rng;
    use crate::testbed::{lhs_sample, Dataset};

    fn fitted() -> GpFit {
        let x = lhs_sample(8, 2, &mut stream_rng(21, 0)).unwrap();
        let y = DVector::from_fn(8, |i, _| (4.0 * x[(i, 0)]).cos() * x[(i, 1)]);
        fit_gp(&Dataset::new(x, y, 0).unwrap(), &GpOptions::default()).unwrap()
    }

    #[test]
    fn maximin_visits_each_point_once() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let mut order = maximin_order(&pts, &[]);
        assert_eq!(order.len(), 20);
        order.sort();
        order.dedup();
        assert_eq!(order.len(), 20);
    }

    #[test]
    fn training_rows_reproduce_data() {
        let fit = fitted();
        let s = sample_joint(&fit, &fit.data.x, 50, 40, &mut stream_rng(1, 1)).unwrap();
        for j in 0..fit.data.n() {
            for i in 0..50 {
                assert!((s.draws[(i, j)] - fit.data.y[j]).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let fit = fitted();
        let xp = lhs_sample(15, 2, &mut stream_rng(2, 2)).unwrap();
        let a = sample_joint(&fit, &xp, 1, 10, &mut stream_rng(3, 3)).unwrap();
        let b = sample_joint(&fit, &xp, 1, 10, &mut stream_rng(3, 3)).unwrap();
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn rejects_zero_conditioning() {
        let fit = fitted();
        let xp = lhs_sample(3, 2, &mut stream_rng(2, 2)).unwrap();
        assert!(sample_joint(&fit, &xp, 1, 0, &mut stream_rng(3, 3)).is_err());
        assert!(sample_joint(&fit, &xp, 0, 5, &mut stream_rng(3, 3)).is_err());
    }
}
