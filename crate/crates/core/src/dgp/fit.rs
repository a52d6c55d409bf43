use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ess::ess_update;
use crate::error::{invalid, PboError, Result};
use crate::gp::{Kernel, Smoothness};
use crate::testbed::Dataset;

/// Gamma prior on a squared lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    /// Log-density of `u = log(lengthscale)`, up to a constant.
    fn log_density_log_ls(&self, u: f64) -> f64 {
        2.0 * self.shape * u - self.rate * (2.0 * u).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpOptions {
    pub nugget: f64,
    pub inner_nugget: f64,
    pub smoothness: Smoothness,
    pub iters_initial: usize,
    pub iters_warm: usize,
    pub retained: usize,
    pub inner_tau2: f64,
    pub inner_prior: GammaPrior,
    pub outer_prior: GammaPrior,
    pub lengthscale_bounds: (f64, f64),
    pub initial_lengthscale: f64,
    pub initial_step: f64,
}

impl Default for DgpOptions {
    fn default() -> Self {
        Self {
            nugget: 1e-6,
            inner_nugget: 1e-6,
            smoothness: Smoothness::Nu25,
            iters_initial: 10_000,
            iters_warm: 2_000,
            retained: 100,
            inner_tau2: 1.0,
            inner_prior: GammaPrior {
                shape: 1.5,
                rate: 3.9 / 4.0,
            },
            outer_prior: GammaPrior {
                shape: 1.5,
                rate: 3.9 / 6.0,
            },
            lengthscale_bounds: (1e-2, 10.0),
            initial_lengthscale: 0.5,
            initial_step: 0.3,
        }
    }
}

/// One MCMC state: latent warping plus both layers' hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpDraw {
    /// `n x d` latent inputs of the outer layer.
    pub w: DMatrix<f64>,
    /// One isotropic lengthscale per latent node.
    pub inner_lengthscales: Vec<f64>,
    pub inner_tau2: f64,
    pub outer_lengthscale: f64,
    /// Profile estimate of the outer scale given `w`.
    pub outer_tau2: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McmcLog {
    /// Outer log-likelihood after every iteration.
    pub loglik: Vec<f64>,
    pub inner_acceptance: Vec<f64>,
    pub outer_acceptance: f64,
    pub mean_shrinks: f64,
}

/// Posterior state of a fitted two-layer DGP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpState {
    pub data: Dataset,
    pub draws: Vec<DgpDraw>,
    /// Final chain state, used to warm-start the next fit.
    pub last: DgpDraw,
    /// Random-walk step sizes on log-lengthscales: one per node, then outer.
    pub steps: Vec<f64>,
    pub options: DgpOptions,
    pub log: McmcLog,
}

impl DgpState {
    /// Prior mean of the latent layer (the inputs themselves).
    pub fn mu_w(&self) -> &DMatrix<f64> {
        &self.data.x
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn inner_kernel(ls: f64, tau2: f64, d: usize, opts: &DgpOptions) -> Kernel {
    Kernel {
        lengthscales: vec![ls; d],
        tau2,
        nugget: opts.inner_nugget,
        smoothness: opts.smoothness,
    }
}

pub(crate) fn outer_kernel(ls: f64, tau2: f64, d: usize, opts: &DgpOptions) -> Kernel {
    Kernel {
        lengthscales: vec![ls; d],
        tau2,
        nugget: opts.nugget,
        smoothness: opts.smoothness,
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Outer-layer log-likelihood with the scale profiled out; returns the
/// log-likelihood and the scale estimate.
pub(crate) fn outer_loglik(w: &DMatrix<f64>, y: &DVector<f64>, ls: f64, opts: &DgpOptions) -> Option<(f64, f64)> {
    let n = w.nrows() as f64;
    let k = outer_kernel(ls, 1.0, w.ncols(), opts).matrix(&matrix_rows(w));
    let chol = Cholesky::new(k)?;
    let q = y.dot(&chol.solve(y));
    let tau2 = (q / n).max(1e-10);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ll = -0.5 * n * tau2.ln() - 0.5 * logdet;
    ll.is_finite().then_some((ll, tau2))
}

struct NodePrior {
    chol: Cholesky<f64, Dyn>,
    logdet: f64,
}

fn node_prior(x_rows: &[Vec<f64>], ls: f64, tau2: f64, opts: &DgpOptions) -> Option<NodePrior> {
    let k = inner_kernel(ls, tau2, x_rows[0].len(), opts).matrix(x_rows);
    let chol = Cholesky::new(k)?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some(NodePrior { chol, logdet })
}

fn node_logdensity(prior: &NodePrior, resid: &DVector<f64>) -> f64 {
    -0.5 * prior.logdet - 0.5 * resid.dot(&prior.chol.solve(resid))
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.n() < 5 {
        return invalid(format!("DGP fitting needs at least 5 observations, got {}", data.n()));
    }
    let rows = data.rows();
    for i in 0..rows.len() {
        for j in 0..i {
            if rows[i].iter().zip(&rows[j]).all(|(a, b)| (a - b).abs() < 1e-12) {
                return invalid(format!("duplicate training rows {j} and {i}"));
            }
        }
    }
    Ok(())
}

/// Initial DGP fit: `iters` MCMC iterations starting from `W = X`.
pub fn fit_dgp<R: Rng + ?Sized>(data: &Dataset, opts: &DgpOptions, iters: usize, rng: &mut R) -> Result<DgpState> {
    check_data(data)?;
    let d = data.dim();
    let start = DgpDraw {
        w: data.x.clone(),
        inner_lengthscales: vec![opts.initial_lengthscale; d],
        inner_tau2: opts.inner_tau2,
        outer_lengthscale: opts.initial_lengthscale,
        outer_tau2: 1.0,
    };
    let steps = vec![opts.initial_step; d + 1];
    run_chain(data, opts, start, steps, iters, rng)
}

/// Refit after new observations were appended to the previous fit's data,
/// continuing from the previous chain's final state.
pub fn fit_dgp_warm<R: Rng + ?Sized>(
    prev: &DgpState,
    data: &Dataset,
    iters: usize,
    rng: &mut R,
) -> Result<DgpState> {
    check_data(data)?;
    let n_prev = prev.data.n();
    if data.n() < n_prev || data.dim() != prev.data.dim() {
        return invalid("warm start needs the previous data as a prefix of the new data");
    }
    for i in 0..n_prev {
        if data.x.row(i) != prev.data.x.row(i) {
            return invalid(format!("row {i} differs from the previous fit's data"));
        }
    }
    let opts = &prev.options;
    let d = data.dim();
    let last = &prev.last;
    let mut w = DMatrix::zeros(data.n(), d);
    w.view_mut((0, 0), (n_prev, d)).copy_from(&last.w);
    if data.n() > n_prev {
        // New rows start at the latent layer's conditional mean.
        let x_prev = matrix_rows(&prev.data.x);
        let x_new: Vec<Vec<f64>> = (n_prev..data.n()).map(|i| data.row(i)).collect();
        for node in 0..d {
            let k = inner_kernel(last.inner_lengthscales[node], last.inner_tau2, d, opts);
            let chol = Cholesky::new(k.matrix(&x_prev)).ok_or_else(|| {
                PboError::NumericalFailure("latent prior covariance not positive definite".into())
            })?;
            let resid = DVector::from_fn(n_prev, |i, _| last.w[(i, node)] - prev.data.x[(i, node)]);
            let alpha = chol.solve(&resid);
            for (r, xn) in x_new.iter().enumerate() {
                let m: f64 = x_prev.iter().zip(alpha.iter()).map(|(xp, a)| k.cross(xp, xn) * a).sum();
                w[(n_prev + r, node)] = xn[node] + m;
            }
        }
    }
    let start = DgpDraw {
        w,
        ..last.clone()
    };
    run_chain(data, opts, start, prev.steps.clone(), iters, rng)
}

fn run_chain<R: Rng + ?Sized>(
    data: &Dataset,
    opts: &DgpOptions,
    start: DgpDraw,
    mut steps: Vec<f64>,
    iters: usize,
    rng: &mut R,
) -> Result<DgpState> {
    if iters < 2 || opts.retained == 0 {
        return invalid("need at least 2 MCMC iterations and 1 retained draw");
    }
    let n = data.n();
    let d = data.dim();
    let y = data.standardized_y();
    let x_rows = data.rows();
    let (ls_lo, ls_hi) = (opts.lengthscale_bounds.0.ln(), opts.lengthscale_bounds.1.ln());
    let burn = iters / 2;
    let kept = iters - burn;
    let retained = opts.retained.min(kept);
    let keep_at: Vec<usize> = (0..retained).map(|j| burn + ((j + 1) * kept) / retained - 1).collect();

    let mut state = start;
    let mut priors: Vec<NodePrior> = Vec::with_capacity(d);
    for node in 0..d {
        priors.push(
            node_prior(&x_rows, state.inner_lengthscales[node], state.inner_tau2, opts).ok_or_else(|| {
                PboError::NumericalFailure(format!("latent prior covariance of node {node} not positive definite"))
            })?,
        );
    }
    let (mut ll, mut tau2) = outer_loglik(&state.w, &y, state.outer_lengthscale, opts).ok_or_else(|| {
        PboError::NumericalFailure("outer covariance not positive definite at the starting state".into())
    })?;

    let mut log = McmcLog::default();
    let mut accepts = vec![0usize; d + 1];
    let mut window = vec![0usize; d + 1];
    let mut total_accepts = vec![0usize; d + 1];
    let mut shrink_total = 0usize;
    let mut failures = 0usize;
    let mut draws = Vec::with_capacity(retained);
    let mut next_keep = 0;

    for t in 0..iters {
        let mut failed = false;
        for node in 0..d {
            // Latent node via elliptical slice sampling.
            let mean = DVector::from_fn(n, |i, _| data.x[(i, node)]);
            let current = DVector::from_fn(n, |i, _| state.w[(i, node)]);
            let l = priors[node].chol.l();
            let ls_y = state.outer_lengthscale;
            let mut w_try = state.w.clone();
            let result = ess_update(
                &current,
                ll,
                &mean,
                &l,
                |prop| {
                    w_try.set_column(node, prop);
                    outer_loglik(&w_try, &y, ls_y, opts).map_or(f64::NEG_INFINITY, |(v, _)| v)
                },
                rng,
            );
            match result {
                Ok(out) => {
                    state.w.set_column(node, &out.value);
                    ll = out.loglik;
                    shrink_total += out.shrinks;
                }
                Err(PboError::NumericalFailure(_)) => failed = true,
                Err(e) => return Err(e),
            }

            // Node lengthscale by random-walk Metropolis.
            let u = state.inner_lengthscales[node].ln();
            let u_new = u + steps[node] * rng.sample::<f64, _>(StandardNormal);
            if u_new > ls_lo && u_new < ls_hi {
                if let Some(prop_prior) = node_prior(&x_rows, u_new.exp(), state.inner_tau2, opts) {
                    let resid = DVector::from_fn(n, |i, _| state.w[(i, node)] - data.x[(i, node)]);
                    let log_ratio = node_logdensity(&prop_prior, &resid)
                        + opts.inner_prior.log_density_log_ls(u_new)
                        - node_logdensity(&priors[node], &resid)
                        - opts.inner_prior.log_density_log_ls(u);
                    if rng.gen::<f64>().ln() < log_ratio {
                        state.inner_lengthscales[node] = u_new.exp();
                        priors[node] = prop_prior;
                        accepts[node] += 1;
                    }
                }
            }
        }

        // Outer lengthscale.
        let u = state.outer_lengthscale.ln();
        let u_new = u + steps[d] * rng.sample::<f64, _>(StandardNormal);
        if u_new > ls_lo && u_new < ls_hi {
            if let Some((ll_new, tau2_new)) = outer_loglik(&state.w, &y, u_new.exp(), opts) {
                let log_ratio = ll_new + opts.outer_prior.log_density_log_ls(u_new)
                    - ll
                    - opts.outer_prior.log_density_log_ls(u);
                if rng.gen::<f64>().ln() < log_ratio {
                    state.outer_lengthscale = u_new.exp();
                    ll = ll_new;
                    tau2 = tau2_new;
                    accepts[d] += 1;
                }
            }
        }
        if let Some((_, t2)) = outer_loglik(&state.w, &y, state.outer_lengthscale, opts) {
            tau2 = t2;
        }
        state.outer_tau2 = tau2;
        log.loglik.push(ll);

        failures = if failed || !ll.is_finite() { failures + 1 } else { 0 };
        if failures >= 50 {
            let tail: Vec<String> = log.loglik.iter().rev().take(10).map(|v| format!("{v:.4}")).collect();
            return Err(PboError::NumericalFailure(format!(
                "DGP chain diverged at iteration {t}; recent log-likelihoods [{}]",
                tail.join(", ")
            )));
        }

        for (k, a) in accepts.iter_mut().enumerate() {
            total_accepts[k] += *a;
            window[k] += *a;
            *a = 0;
        }
        // Adapt step sizes toward 30-50% acceptance during burn-in only.
        if t < burn && (t + 1) % 50 == 0 {
            for (k, step) in steps.iter_mut().enumerate() {
                let rate = window[k] as f64 / 50.0;
                if rate > 0.5 {
                    *step = (*step * 1.2).min(3.0);
                } else if rate < 0.3 {
                    *step = (*step / 1.2).max(1e-3);
                }
                window[k] = 0;
            }
        }

        if next_keep < keep_at.len() && t == keep_at[next_keep] {
            draws.push(state.clone());
            next_keep += 1;
        }
    }

    log.inner_acceptance = total_accepts[..d].iter().map(|&a| a as f64 / iters as f64).collect();
    log.outer_acceptance = total_accepts[d] as f64 / iters as f64;
    log.mean_shrinks = shrink_total as f64 / (iters * d) as f64;
    Ok(DgpState {
        data: data.clone(),
        draws,
        last: state,
        steps,
        options: opts.clone(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::testbed::{benchmark, eval_function, lhs_sample};

    fn data(n: usize, seed: u64) -> Dataset {
        let f = benchmark("kyger2d", 0).unwrap();
        let x = lhs_sample(n, 2, &mut stream_rng(seed, 0)).unwrap();
        let y = DVector::from_fn(n, |i, _| eval_function(&f, &[x[(i, 0)], x[(i, 1)]]).unwrap());
        Dataset::new(x, y, 0).unwrap()
    }

    #[test]
    fn retains_requested_draws_and_is_deterministic() {
        let d = data(10, 1);
        let opts = DgpOptions::default();
        let a = fit_dgp(&d, &opts, 400, &mut stream_rng(5, 0)).unwrap();
        let b = fit_dgp(&d, &opts, 400, &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a.draws.len(), 100);
        assert_eq!(a.log.loglik.len(), 400);
        assert_eq!(a.draws, b.draws);
        assert!(a.draws.iter().all(|dr| dr.w.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn warm_start_extends_chain() {
        let full = data(11, 2);
        let mut first = full.clone();
        first.x = full.x.rows(0, 10).into_owned();
        first = Dataset::new(first.x, full.y.rows(0, 10).into_owned(), 0).unwrap();
        let opts = DgpOptions::default();
        let prev = fit_dgp(&first, &opts, 300, &mut stream_rng(6, 0)).unwrap();
        let next = fit_dgp_warm(&prev, &full, 200, &mut stream_rng(6, 1)).unwrap();
        assert_eq!(next.draws.len(), 100);
        assert_eq!(next.last.w.nrows(), 11);
        assert!(next.log.loglik.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn needs_five_points() {
        let d = data(4, 3);
        assert!(fit_dgp(&d, &DgpOptions::default(), 100, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = data(6, 4);
        let mut opts = DgpOptions::default();
        opts.retained = 5;
        let s = fit_dgp(&d, &opts, 40, &mut stream_rng(2, 0)).unwrap();
        let back = DgpState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
