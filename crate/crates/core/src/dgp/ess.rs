use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{PboError, Result};

const MAX_SHRINKS: usize = 100;

/// Point on the ellipse through `current` and auxiliary draw `nu`, both
/// taken relative to the prior `mean`.
pub fn ellipse_point(current: &DVector<f64>, nu: &DVector<f64>, mean: &DVector<f64>, theta: f64) -> DVector<f64> {
    let (s, c) = theta.sin_cos();
    (current - mean) * c + nu * s + mean
}

#[derive(Debug, Clone)]
pub struct EssOutcome {
    pub value: DVector<f64>,
    pub loglik: f64,
    pub shrinks: usize,
}

/// One elliptical slice sampling update of `current` under the prior
/// `N(mean, L L^T)`, where `prior_l` is the lower Cholesky factor.
/// `current_loglik` must be `loglik(current)`.
pub fn ess_update<R, F>(
    current: &DVector<f64>,
    current_loglik: f64,
    mean: &DVector<f64>,
    prior_l: &DMatrix<f64>,
    mut loglik: F,
    rng: &mut R,
) -> Result<EssOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    if !current_loglik.is_finite() {
        return Err(PboError::NumericalFailure(format!(
            "elliptical slice sampler started at log-likelihood {current_loglik}"
        )));
    }
    let z = DVector::from_fn(current.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let nu = prior_l * z;
    let threshold = current_loglik + rng.gen::<f64>().ln();
    let mut theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
    for shrinks in 0..=MAX_SHRINKS {
        let proposal = ellipse_point(current, &nu, mean, theta);
        let ll = loglik(&proposal);
        if ll.is_nan() {
            return Err(PboError::NumericalFailure("log-likelihood returned NaN".into()));
        }
        if ll > threshold {
            return Ok(EssOutcome {
                value: proposal,
                loglik: ll,
                shrinks,
            });
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        theta = lo + rng.gen::<f64>() * (hi - lo);
    }
    Err(PboError::NumericalFailure(format!(
        "elliptical slice sampler did not accept within {MAX_SHRINKS} bracket shrinks"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn zero_angle_is_identity() {
        let w = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let nu = DVector::from_vec(vec![5.0, 6.0, -7.0]);
        let mean = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let p = ellipse_point(&w, &nu, &mean, 0.0);
        for i in 0..3 {
            assert!((p[i] - w[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_likelihood_is_an_error() {
        let w = DVector::from_vec(vec![0.0, 0.0]);
        let l = DMatrix::identity(2, 2);
        let mut rng = stream_rng(1, 0);
        let r = ess_update(&w, 0.0, &w.clone(), &l, |_| f64::NAN, &mut rng);
        assert!(matches!(r, Err(PboError::NumericalFailure(_))));
    }
}
