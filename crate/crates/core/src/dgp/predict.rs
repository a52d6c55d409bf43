use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use super::fit::{inner_kernel, outer_kernel, DgpDraw, DgpState};
use crate::error::{invalid, PboError, Result};
use crate::gp::{JointSamples, Kernel, VecchiaPlan, VecchiaStructure};
use crate::rng::stream_rng;

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Latent inputs at `xp` for one draw, sampled jointly per node.
fn sample_latent(
    state: &DgpState,
    draw: &DgpDraw,
    x_rows: &[Vec<f64>],
    pred: &[Vec<f64>],
    structure: &VecchiaStructure,
    rng: &mut crate::rng::PboRng,
) -> Result<Vec<Vec<f64>>> {
    let d = state.data.dim();
    let mut wp = pred.to_vec();
    let mut buf = vec![0.0; pred.len()];
    for node in 0..d {
        let kernel = inner_kernel(draw.inner_lengthscales[node], draw.inner_tau2, d, &state.options);
        let resid: Vec<f64> = (0..x_rows.len()).map(|i| draw.w[(i, node)] - x_rows[i][node]).collect();
        let plan = VecchiaPlan::with_structure(structure, x_rows, &resid, pred, &kernel)?;
        plan.draw_into(rng, &mut buf);
        for (row, v) in wp.iter_mut().zip(&buf) {
            row[node] += v;
        }
    }
    Ok(wp)
}

/// Joint posterior samples of a fitted DGP at `xp`, original response scale.
/// Every retained draw contributes `samples_per_draw` rows.
pub fn dgp_sample_joint(
    state: &DgpState,
    xp: &DMatrix<f64>,
    samples_per_draw: usize,
    cond_size: usize,
    seed: u64,
) -> Result<JointSamples> {
    dgp_sample_joint_subset(state, xp, state.draws.len(), samples_per_draw, cond_size, seed)
}

/// Like [`dgp_sample_joint`] but only uses `draws_used` retained draws,
/// evenly spaced through the chain.
pub fn dgp_sample_joint_subset(
    state: &DgpState,
    xp: &DMatrix<f64>,
    draws_used: usize,
    samples_per_draw: usize,
    cond_size: usize,
    seed: u64,
) -> Result<JointSamples> {
    let total = state.draws.len();
    if total == 0 {
        return invalid("DGP state has no retained draws");
    }
    if draws_used == 0 || draws_used > total || samples_per_draw == 0 {
        return invalid(format!(
            "cannot use {draws_used} of {total} draws with {samples_per_draw} samples each"
        ));
    }
    if xp.ncols() != state.data.dim() {
        return invalid("prediction points have the wrong dimension");
    }
    let pred = rows_of(xp);
    let x_rows = state.data.rows();
    let y: Vec<f64> = state.data.standardized_y().iter().copied().collect();
    let picks: Vec<usize> = (0..draws_used).map(|j| (j * total) / draws_used).collect();
    // Latent kernels are isotropic, so one neighbour structure in X serves
    // every node and draw.
    let latent = VecchiaStructure::new(&x_rows, &pred, cond_size)?;

    let blocks: Vec<Result<DMatrix<f64>>> = picks
        .par_iter()
        .enumerate()
        .map(|(j, &t)| {
            let draw = &state.draws[t];
            let mut rng = stream_rng(seed, j as u64);
            let wp = sample_latent(state, draw, &x_rows, &pred, &latent, &mut rng)?;
            let kernel = outer_kernel(draw.outer_lengthscale, draw.outer_tau2, draw.w.ncols(), &state.options);
            let wn = rows_of(&draw.w);
            let structure = VecchiaStructure::new(&wn, &wp, cond_size)?;
            let plan = VecchiaPlan::with_structure(&structure, &wn, &y, &wp, &kernel)?;
            let mut block = DMatrix::zeros(samples_per_draw, pred.len());
            let mut buf = vec![0.0; pred.len()];
            for s in 0..samples_per_draw {
                plan.draw_into(&mut rng, &mut buf);
                for (k, v) in buf.iter().enumerate() {
                    block[(s, k)] = state.data.destandardize(*v);
                }
            }
            Ok(block)
        })
        .collect();

    let mut draws = DMatrix::zeros(draws_used * samples_per_draw, pred.len());
    for (j, block) in blocks.into_iter().enumerate() {
        draws
            .view_mut((j * samples_per_draw, 0), (samples_per_draw, pred.len()))
            .copy_from(&block?);
    }
    Ok(JointSamples {
        locations: xp.clone(),
        draws,
        conditioning_size: cond_size,
    })
}

/// Exact GP conditional mean and variance at `pred`.
fn krige(train: &[Vec<f64>], values: &DVector<f64>, kernel: &Kernel, pred: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let chol = Cholesky::new(kernel.matrix(train))
        .ok_or_else(|| PboError::NumericalFailure("DGP layer covariance not positive definite".into()))?;
    let alpha = chol.solve(values);
    let mut mean = Vec::with_capacity(pred.len());
    let mut var = Vec::with_capacity(pred.len());
    for p in pred {
        let k = DVector::from_fn(train.len(), |i, _| kernel.cross(&train[i], p));
        mean.push(k.dot(&alpha));
        let v = chol.solve(&k);
        var.push((kernel.diag() - k.dot(&v)).max(0.0));
    }
    Ok((mean, var))
}

/// Pointwise predictive mean and standard deviation (original scale). The
/// latent layer is fixed at its conditional mean for each draw; the outer
/// moments are mixed over draws.
pub fn dgp_predict_marginal(state: &DgpState, xp: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    if state.draws.is_empty() {
        return invalid("DGP state has no retained draws");
    }
    if xp.ncols() != state.data.dim() {
        return invalid("prediction points have the wrong dimension");
    }
    let d = state.data.dim();
    let pred = rows_of(xp);
    let x_rows = state.data.rows();
    let y = state.data.standardized_y();
    let np = pred.len();
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    for draw in &state.draws {
        let mut wp = pred.clone();
        for node in 0..d {
            let kernel = inner_kernel(draw.inner_lengthscales[node], draw.inner_tau2, d, &state.options);
            let resid = DVector::from_fn(x_rows.len(), |i, _| draw.w[(i, node)] - x_rows[i][node]);
            let (mu, _) = krige(&x_rows, &resid, &kernel, &pred)?;
            for (row, m) in wp.iter_mut().zip(mu) {
                row[node] += m;
            }
        }
        let kernel = outer_kernel(draw.outer_lengthscale, draw.outer_tau2, d, &state.options);
        let (mu, var) = krige(&rows_of(&draw.w), &y, &kernel, &wp)?;
        for k in 0..np {
            m1[k] += mu[k];
            m2[k] += var[k] + mu[k] * mu[k];
        }
    }
    let t = state.draws.len() as f64;
    let sd_y = state.data.y_sd;
    let mean = m1.iter().map(|v| state.data.destandardize(v / t)).collect();
    let sd = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| ((b / t) - (a / t).powi(2)).max(0.0).sqrt() * sd_y)
        .collect();
    Ok((mean, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{fit_dgp, DgpOptions};
    use crate::testbed::{benchmark, eval_function, lhs_sample, Dataset};

    fn state() -> DgpState {
        let f = benchmark("kyger2d", 0).unwrap();
        let x = lhs_sample(10, 2, &mut stream_rng(8, 0)).unwrap();
        let y = DVector::from_fn(10, |i, _| eval_function(&f, &[x[(i, 0)], x[(i, 1)]]).unwrap());
        let data = Dataset::new(x, y, 0).unwrap();
        let mut opts = DgpOptions::default();
        opts.retained = 20;
        fit_dgp(&data, &opts, 400, &mut stream_rng(8, 1)).unwrap()
    }

    #[test]
    fn sample_count_is_draws_times_per_draw() {
        let s = state();
        let xp = lhs_sample(30, 2, &mut stream_rng(9, 0)).unwrap();
        let j = dgp_sample_joint(&s, &xp, 3, 10, 4).unwrap();
        assert_eq!(j.draws.nrows(), 60);
        assert_eq!(j.draws.ncols(), 30);
        let again = dgp_sample_joint(&s, &xp, 3, 10, 4).unwrap();
        assert_eq!(j.draws, again.draws);
    }

    #[test]
    fn training_rows_interpolate() {
        let s = state();
        let j = dgp_sample_joint(&s, &s.data.x, 2, 20, 5).unwrap();
        for k in 0..s.data.n() {
            for i in 0..j.draws.nrows() {
                assert!((j.draws[(i, k)] - s.data.y[k]).abs() < 0.05 * s.data.y_sd);
            }
        }
        let (mean, sd) = dgp_predict_marginal(&s, &s.data.x).unwrap();
        for k in 0..s.data.n() {
            assert!((mean[k] - s.data.y[k]).abs() < 1e-3 * s.data.y_sd);
            assert!(sd[k] < 1e-2 * s.data.y_sd);
        }
    }

    #[test]
    fn subset_rejects_bad_counts() {
        let s = state();
        let xp = lhs_sample(5, 2, &mut stream_rng(9, 1)).unwrap();
        assert!(dgp_sample_joint_subset(&s, &xp, 0, 1, 5, 0).is_err());
        assert!(dgp_sample_joint_subset(&s, &xp, 21, 1, 5, 0).is_err());
    }
}
