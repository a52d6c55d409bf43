use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, Smoothness};
use crate::error::{invalid, PboError, Result};
use crate::optim::lbfgs_box;
use crate::testbed::Dataset;

/// Fitted covariance hyperparameters (standardized response scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub tau2: f64,
    pub lengthscales: Vec<f64>,
    pub nugget: f64,
    pub smoothness: Smoothness,
}

impl Hyperparameters {
    pub fn kernel(&self) -> Kernel {
        Kernel {
            lengthscales: self.lengthscales.clone(),
            tau2: self.tau2,
            nugget: self.nugget,
            smoothness: self.smoothness,
        }
    }
}

/// Settings for maximum-likelihood fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    pub nugget: f64,
    pub smoothness: Smoothness,
    pub n_starts: usize,
    pub lengthscale_bounds: (f64, f64),
    pub max_iters: u64,
    /// Largest nugget tried when the covariance is numerically singular.
    pub max_nugget: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            nugget: 1e-6,
            smoothness: Smoothness::Nu25,
            n_starts: 5,
            lengthscale_bounds: (1e-2, 5.0),
            max_iters: 100,
            max_nugget: 1e-4,
        }
    }
}

/// Smallest admissible scale, guarding constant responses.
const TAU2_FLOOR: f64 = 1e-10;

/// A trained GP: data, hyperparameters and the cached Cholesky factor of
/// the training covariance.
#[derive(Debug, Clone)]
pub struct GpFit {
    pub data: Dataset,
    pub hyp: Hyperparameters,
    pub loglik: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    pts: Vec<Vec<f64>>,
}

/// Multivariate normal restricted to a set of prediction points.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GpCheckpoint {
    data: Dataset,
    hyp: Hyperparameters,
}

struct Profiled {
    loglik: f64,
    grad: Vec<f64>,
}

/// Concentrated log-likelihood (tau2 profiled out) and its gradient with
/// respect to the log-lengthscales.
fn profiled_loglik(
    pts: &[Vec<f64>],
    y: &DVector<f64>,
    lengthscales: &[f64],
    nugget: f64,
    nu: Smoothness,
    with_grad: bool,
) -> Option<Profiled> {
    let n = pts.len();
    let kernel = Kernel {
        lengthscales: lengthscales.to_vec(),
        tau2: 1.0,
        nugget,
        smoothness: nu,
    };
    let k = kernel.matrix(pts);
    let chol = Cholesky::new(k)?;
    let alpha = chol.solve(y);
    let q = y.dot(&alpha);
    let tau2 = (q / n as f64).max(TAU2_FLOOR);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let nf = n as f64;
    let loglik = -0.5 * nf * tau2.ln() - 0.5 * logdet - 0.5 * nf * (1.0 + (2.0 * std::f64::consts::PI).ln());
    if !loglik.is_finite() {
        return None;
    }
    let mut grad = vec![0.0; lengthscales.len()];
    if with_grad {
        let kinv = chol.inverse();
        let floor_active = q / nf <= TAU2_FLOOR;
        for (kdim, g) in grad.iter_mut().enumerate() {
            let l = lengthscales[kdim];
            let mut quad = 0.0;
            let mut trace = 0.0;
            for i in 0..n {
                for j in 0..i {
                    let r = kernel.scaled_dist(&pts[i], &pts[j]);
                    let scaled = ((pts[i][kdim] - pts[j][kdim]) / l).powi(2);
                    let dk = nu.dcorr_factor(r) * scaled;
                    quad += 2.0 * alpha[i] * alpha[j] * dk;
                    trace += 2.0 * kinv[(i, j)] * dk;
                }
            }
            let data_term = if floor_active { 0.0 } else { 0.5 * nf * quad / q };
            *g = data_term - 0.5 * trace;
        }
    }
    Some(Profiled { loglik, grad })
}

fn closest_pair(pts: &[Vec<f64>]) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..pts.len() {
        for j in 0..i {
            let d = pts[i]
                .iter()
                .zip(&pts[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if d < best.2 {
                best = (j, i, d);
            }
        }
    }
    best
}

/// Maximum-likelihood GP fit with multistart L-BFGS over log-lengthscales.
pub fn fit_gp(data: &Dataset, opts: &GpOptions) -> Result<GpFit> {
    let n = data.n();
    if n < 2 {
        return invalid(format!("need at least 2 observations to fit, got {n}"));
    }
    if opts.nugget < 0.0 || opts.n_starts == 0 {
        return invalid("nugget must be non-negative and n_starts positive");
    }
    let pts = data.rows();
    let (a, b, dist) = closest_pair(&pts);
    if dist < 1e-12 {
        return invalid(format!("duplicate training rows {a} and {b}"));
    }
    let y = data.standardized_y();
    let d = data.dim();
    let (lo, hi) = (opts.lengthscale_bounds.0.ln(), opts.lengthscale_bounds.1.ln());
    let lo_v = vec![lo; d];
    let hi_v = vec![hi; d];

    let mut nugget = opts.nugget;
    loop {
        let objective = |theta: &[f64]| -> (f64, Vec<f64>) {
            let ls: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
            match profiled_loglik(&pts, &y, &ls, nugget, opts.smoothness, true) {
                Some(p) => (-p.loglik, p.grad.iter().map(|g| -g).collect()),
                None => (1e10, vec![0.0; d]),
            }
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in 0..opts.n_starts {
            let start = vec![lo + (s as f64 + 0.5) / opts.n_starts as f64 * (hi - lo); d];
            let (v0, _) = objective(&start);
            let run = lbfgs_box(&objective, &start, &lo_v, &hi_v, opts.max_iters);
            let (v, theta) = if run.value <= v0 { (run.value, run.x) } else { (v0, start) };
            if v < 1e10 && best.as_ref().map_or(true, |(bv, _)| v < *bv) {
                best = Some((v, theta));
            }
        }
        if let Some((_, theta)) = best {
            let ls: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
            if let Ok(fit) = GpFit::from_parts(data.clone(), ls, None, nugget, opts.smoothness) {
                return Ok(fit);
            }
        }
        if nugget == 0.0 {
            nugget = 1e-10;
        } else if nugget * 10.0 <= opts.max_nugget * (1.0 + 1e-9) {
            nugget *= 10.0;
        } else {
            return Err(PboError::NumericalFailure(format!(
                "covariance not positive definite at nugget {nugget:e}; closest inputs are rows {a} and {b} (distance {dist:e})"
            )));
        }
    }
}

impl GpFit {
    /// Builds a fit at given hyperparameters. With `tau2 = None` the scale is
    /// set to its profile-likelihood estimate.
    pub fn from_parts(
        data: Dataset,
        lengthscales: Vec<f64>,
        tau2: Option<f64>,
        nugget: f64,
        smoothness: Smoothness,
    ) -> Result<Self> {
        if lengthscales.len() != data.dim() || lengthscales.iter().any(|l| !(*l > 0.0)) {
            return invalid("one positive lengthscale per input dimension required");
        }
        let pts = data.rows();
        let y = data.standardized_y();
        let unit = Kernel {
            lengthscales: lengthscales.clone(),
            tau2: 1.0,
            nugget,
            smoothness,
        };
        let chol = Cholesky::new(unit.matrix(&pts)).ok_or_else(|| {
            PboError::NumericalFailure("training covariance is not positive definite".into())
        })?;
        let alpha_unit = chol.solve(&y);
        let n = pts.len() as f64;
        let tau2 = tau2.unwrap_or_else(|| (y.dot(&alpha_unit) / n).max(TAU2_FLOOR));
        if !(tau2 > 0.0) {
            return invalid("tau2 must be positive");
        }
        let logdet_unit: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let loglik = -0.5 * n * (2.0 * std::f64::consts::PI * tau2).ln()
            - 0.5 * logdet_unit
            - 0.5 * y.dot(&alpha_unit) / tau2;
        Ok(Self {
            data,
            hyp: Hyperparameters {
                tau2,
                lengthscales,
                nugget,
                smoothness,
            },
            loglik,
            chol,
            alpha: alpha_unit,
            pts,
        })
    }

    pub fn kernel(&self) -> Kernel {
        self.hyp.kernel()
    }

    pub(crate) fn train_points(&self) -> &[Vec<f64>] {
        &self.pts
    }

    fn check_points(&self, xp: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
        if xp.ncols() != self.data.dim() {
            return invalid(format!(
                "prediction points have {} columns, model has {}",
                xp.ncols(),
                self.data.dim()
            ));
        }
        Ok((0..xp.nrows())
            .map(|i| xp.row(i).iter().copied().collect())
            .collect())
    }

    fn cross_corr(&self, xp: &[Vec<f64>]) -> DMatrix<f64> {
        let k = self.kernel();
        DMatrix::from_fn(self.pts.len(), xp.len(), |i, j| k.corr(&self.pts[i], &xp[j]))
    }

    /// Exact posterior on the standardized response scale.
    pub fn posterior_standardized(&self, xp: &DMatrix<f64>) -> Result<Posterior> {
        let xp = self.check_points(xp)?;
        let kern = self.kernel();
        let cross = self.cross_corr(&xp);
        let mean = cross.transpose() * &self.alpha;
        let v = self.chol.solve(&cross);
        let mut prior = DMatrix::zeros(xp.len(), xp.len());
        for i in 0..xp.len() {
            prior[(i, i)] = 1.0 + kern.nugget;
            for j in 0..i {
                let c = kern.corr(&xp[i], &xp[j]);
                prior[(i, j)] = c;
                prior[(j, i)] = c;
            }
        }
        let mut cov = (prior - cross.transpose() * v) * kern.tau2;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Posterior { mean, cov })
    }

    /// Exact posterior on the original response scale.
    pub fn posterior(&self, xp: &DMatrix<f64>) -> Result<Posterior> {
        let p = self.posterior_standardized(xp)?;
        let sd = self.data.y_sd;
        Ok(Posterior {
            mean: p.mean.map(|m| self.data.destandardize(m)),
            cov: p.cov * (sd * sd),
        })
    }

    /// Pointwise posterior mean and standard deviation, original scale.
    pub fn predict_marginal(&self, xp: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let xp = self.check_points(xp)?;
        let kern = self.kernel();
        let cross = self.cross_corr(&xp);
        let mean = cross.transpose() * &self.alpha;
        let l = self.chol.l();
        let v = l
            .solve_lower_triangular(&cross)
            .ok_or_else(|| PboError::NumericalFailure("triangular solve failed".into()))?;
        let sd = self.data.y_sd;
        let mut mu = Vec::with_capacity(xp.len());
        let mut s = Vec::with_capacity(xp.len());
        for j in 0..xp.len() {
            let reduction: f64 = v.column(j).norm_squared();
            let var = kern.tau2 * (1.0 + kern.nugget - reduction).max(0.0);
            mu.push(self.data.destandardize(mean[j]));
            s.push(sd * var.sqrt());
        }
        Ok((mu, s))
    }

    /// Standardized training responses.
    pub(crate) fn y_standardized(&self) -> DVector<f64> {
        self.data.standardized_y()
    }

    /// JSON checkpoint holding the data and hyperparameters.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GpCheckpoint {
            data: self.data.clone(),
            hyp: self.hyp.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: GpCheckpoint = serde_json::from_str(s)?;
        Self::from_parts(
            c.data,
            c.hyp.lengthscales,
            Some(c.hyp.tau2),
            c.hyp.nugget,
            c.hyp.smoothness,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::testbed::lhs_sample;

    fn toy(n: usize, seed: u64) -> Dataset {
        let x = lhs_sample(n, 2, &mut stream_rng(seed, 0)).unwrap();
        let y = DVector::from_fn(n, |i, _| (5.0 * x[(i, 0)]).sin() + x[(i, 1)].powi(2));
        Dataset::new(x, y, 0).unwrap()
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let data = toy(12, 1);
        let pts = data.rows();
        let y = data.standardized_y();
        let ls = vec![0.3, 0.8];
        let p = profiled_loglik(&pts, &y, &ls, 1e-6, Smoothness::Nu25, true).unwrap();
        let h: f64 = 1e-5;
        for k in 0..2 {
            let mut up = ls.clone();
            let mut dn = ls.clone();
            up[k] *= h.exp();
            dn[k] *= (-h).exp();
            let fu = profiled_loglik(&pts, &y, &up, 1e-6, Smoothness::Nu25, false).unwrap().loglik;
            let fd = profiled_loglik(&pts, &y, &dn, 1e-6, Smoothness::Nu25, false).unwrap().loglik;
            let fdiff = (fu - fd) / (2.0 * h);
            assert!((fdiff - p.grad[k]).abs() < 1e-4 * (1.0 + fdiff.abs()), "{fdiff} vs {}", p.grad[k]);
        }
    }

    #[test]
    fn fit_beats_every_start() {
        let data = toy(15, 2);
        let opts = GpOptions::default();
        let fit = fit_gp(&data, &opts).unwrap();
        let pts = data.rows();
        let y = data.standardized_y();
        let (lo, hi) = (opts.lengthscale_bounds.0.ln(), opts.lengthscale_bounds.1.ln());
        for s in 0..opts.n_starts {
            let l = (lo + (s as f64 + 0.5) / opts.n_starts as f64 * (hi - lo)).exp();
            if let Some(p) = profiled_loglik(&pts, &y, &[l, l], 1e-6, Smoothness::Nu25, false) {
                assert!(fit.loglik >= p.loglik - 1e-9);
            }
        }
        for l in &fit.hyp.lengthscales {
            assert!(*l >= 1e-2 * (1.0 - 1e-9) && *l <= 5.0 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn refit_is_deterministic() {
        let data = toy(10, 3);
        let a = fit_gp(&data, &GpOptions::default()).unwrap();
        let b = fit_gp(&data, &GpOptions::default()).unwrap();
        assert_eq!(a.hyp, b.hyp);
    }

    #[test]
    fn constant_response_fits() {
        let x = lhs_sample(6, 2, &mut stream_rng(4, 0)).unwrap();
        let data = Dataset::new(x, DVector::from_element(6, 3.0), 0).unwrap();
        let fit = fit_gp(&data, &GpOptions::default()).unwrap();
        assert!(fit.hyp.tau2 > 0.0);
        let (mu, _) = fit.predict_marginal(&DMatrix::from_row_slice(1, 2, &[0.5, 0.5])).unwrap();
        assert!((mu[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_rows_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.5, 0.5, 0.1, 0.2]);
        let data = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0]), 0).unwrap();
        let err = fit_gp(&data, &GpOptions::default()).unwrap_err();
        assert!(err.to_string().contains("rows 0 and 2"), "{err}");
    }

    #[test]
    fn interpolates_training_rows() {
        let data = toy(10, 5);
        let fit = fit_gp(&data, &GpOptions::default()).unwrap();
        let post = fit.posterior(&data.x).unwrap();
        for i in 0..data.n() {
            assert!((post.mean[i] - data.y[i]).abs() < 1e-3);
            assert!(post.cov[(i, i)] < 1e-4 * data.y_sd * data.y_sd);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 0.01, 0.02]);
        let data = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 0.5]), 0).unwrap();
        let fit = GpFit::from_parts(data, vec![0.01], Some(1.3), 1e-6, Smoothness::Nu25).unwrap();
        let post = fit.posterior_standardized(&DMatrix::from_row_slice(1, 1, &[1.0])).unwrap();
        assert!(post.mean[0].abs() < 1e-10);
        assert!((post.cov[(0, 0)] - 1.3 * (1.0 + 1e-6)).abs() < 1e-10);
    }

    #[test]
    fn single_point_closed_form() {
        // One training point: mean = c * y / (1 + g), var = tau2 (1 + g - c^2 / (1 + g)).
        let x = DMatrix::from_row_slice(1, 1, &[0.2]);
        let data = Dataset::new(x, DVector::from_vec(vec![0.7]), 0).unwrap();
        let (tau2, g, l) = (1.7, 1e-6, 0.4);
        let fit = GpFit::from_parts(data.clone(), vec![l], Some(tau2), g, Smoothness::Nu25).unwrap();
        let post = fit.posterior_standardized(&DMatrix::from_row_slice(1, 1, &[0.55])).unwrap();
        let r: f64 = 0.35 / l;
        let s5 = 5f64.sqrt();
        let c = (1.0 + s5 * r + 5.0 * r * r / 3.0) * (-s5 * r).exp();
        let y0 = data.standardized_y()[0];
        assert!((post.mean[0] - c * y0 / (1.0 + g)).abs() < 1e-12);
        assert!((post.cov[(0, 0)] - tau2 * (1.0 + g - c * c / (1.0 + g))).abs() < 1e-12);
    }

    #[test]
    fn marginal_matches_full_posterior() {
        let data = toy(9, 6);
        let fit = fit_gp(&data, &GpOptions::default()).unwrap();
        let xp = lhs_sample(7, 2, &mut stream_rng(8, 0)).unwrap();
        let post = fit.posterior(&xp).unwrap();
        let (mu, sd) = fit.predict_marginal(&xp).unwrap();
        for i in 0..7 {
            assert!((mu[i] - post.mean[i]).abs() < 1e-9);
            assert!((sd[i] - post.cov[(i, i)].max(0.0).sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn json_checkpoint_round_trip() {
        let data = toy(8, 7);
        let fit = fit_gp(&data, &GpOptions::default()).unwrap();
        let back = GpFit::from_json(&fit.to_json().unwrap()).unwrap();
        assert_eq!(back.hyp, fit.hyp);
        assert_eq!(back.data, fit.data);
    }
}
