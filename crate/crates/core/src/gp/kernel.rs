use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Matérn smoothness order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "1.5")]
    Nu15,
    #[default]
    #[serde(rename = "2.5")]
    Nu25,
}

impl Smoothness {
    /// Correlation at scaled distance `r >= 0`.
    #[inline]
    pub fn corr(self, r: f64) -> f64 {
        match self {
            Smoothness::Nu15 => {
                let s = 3f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            Smoothness::Nu25 => {
                let s = 5f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// `d corr / d log(lengthscale_k)` divided by `(delta_k / lengthscale_k)^2`.
    #[inline]
    pub(crate) fn dcorr_factor(self, r: f64) -> f64 {
        match self {
            Smoothness::Nu15 => 3.0 * (-(3f64.sqrt()) * r).exp(),
            Smoothness::Nu25 => {
                let s = 5f64.sqrt() * r;
                5.0 / 3.0 * (1.0 + s) * (-s).exp()
            }
        }
    }
}

/// Matérn correlation at distance `dist` for an isotropic `lengthscale`.
pub fn matern_corr(dist: f64, lengthscale: f64, nu: Smoothness) -> Result<f64> {
    if !(lengthscale > 0.0) {
        return invalid(format!("lengthscale must be positive, got {lengthscale}"));
    }
    if !(dist >= 0.0) {
        return invalid(format!("distance must be non-negative, got {dist}"));
    }
    Ok(nu.corr(dist / lengthscale))
}

/// Separable Matérn covariance `tau2 * (corr + nugget * 1{i=j})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub lengthscales: Vec<f64>,
    pub tau2: f64,
    pub nugget: f64,
    pub smoothness: Smoothness,
}

impl Kernel {
    #[inline]
    pub fn scaled_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[inline]
    pub fn corr(&self, a: &[f64], b: &[f64]) -> f64 {
        self.smoothness.corr(self.scaled_dist(a, b))
    }

    /// Cross-covariance between distinct points (no nugget).
    #[inline]
    pub fn cross(&self, a: &[f64], b: &[f64]) -> f64 {
        self.tau2 * self.corr(a, b)
    }

    /// Marginal variance, nugget included.
    #[inline]
    pub fn diag(&self) -> f64 {
        self.tau2 * (1.0 + self.nugget)
    }

    /// Full covariance matrix of a point set, nugget on the diagonal.
    pub fn matrix(&self, pts: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
        let n = pts.len();
        let mut k = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.diag();
            for j in 0..i {
                let v = self.cross(&pts[i], &pts[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Points divided coordinate-wise by the lengthscales.
    pub fn scale_points(&self, pts: &[Vec<f64>]) -> Vec<Vec<f64>> {
        pts.iter()
            .map(|p| p.iter().zip(&self.lengthscales).map(|(v, l)| v / l).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_at_zero_and_vanishing_tail() {
        for nu in [Smoothness::Nu15, Smoothness::Nu25] {
            assert_eq!(matern_corr(0.0, 0.3, nu).unwrap(), 1.0);
            assert!(matern_corr(1e3, 0.3, nu).unwrap() < 1e-100);
        }
    }

    #[test]
    fn nu25_at_one_lengthscale() {
        // Independent evaluation of (1 + sqrt5 + 5/3) exp(-sqrt5).
        let s5 = 5f64.sqrt();
        let expected = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        let v = matern_corr(1.0, 1.0, Smoothness::Nu25).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.52399).abs() < 1e-5);
    }

    #[test]
    fn strictly_decreasing() {
        for nu in [Smoothness::Nu15, Smoothness::Nu25] {
            let vals: Vec<f64> = (0..200)
                .map(|i| matern_corr(i as f64 * 0.02, 0.5, nu).unwrap())
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn rejects_bad_lengthscale() {
        assert!(matern_corr(1.0, 0.0, Smoothness::Nu25).is_err());
        assert!(matern_corr(1.0, -1.0, Smoothness::Nu15).is_err());
    }

    #[test]
    fn derivative_factor_matches_finite_difference() {
        for nu in [Smoothness::Nu15, Smoothness::Nu25] {
            let delta = 0.37;
            let l: f64 = 0.6;
            let h = 1e-6;
            let c = |logl: f64| nu.corr(delta / logl.exp());
            let fd = (c(l.ln() + h) - c(l.ln() - h)) / (2.0 * h);
            let analytic = nu.dcorr_factor(delta / l) * (delta / l).powi(2);
            assert!((fd - analytic).abs() < 1e-8, "{nu:?}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn kernel_matrix_symmetric_with_nugget_diagonal() {
        let k = Kernel {
            lengthscales: vec![0.3, 0.7],
            tau2: 2.0,
            nugget: 1e-6,
            smoothness: Smoothness::Nu25,
        };
        let pts = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3]];
        let m = k.matrix(&pts);
        assert_eq!(m, m.transpose());
        for i in 0..3 {
            assert_eq!(m[(i, i)], 2.0 * (1.0 + 1e-6));
        }
    }
}
