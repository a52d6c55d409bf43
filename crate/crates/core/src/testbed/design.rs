use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};

/// Random Latin hypercube sample of `n` points in `[0,1]^d`.
///
/// Column `j` places exactly one point in each stratum `[k/n, (k+1)/n)`,
/// uniformly within the stratum.
pub fn lhs_sample<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return invalid(format!("lhs_sample needs n >= 1 and d >= 1, got n={n}, d={d}"));
    }
    let mut out = DMatrix::zeros(n, d);
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, &k) in perm.iter().enumerate() {
            let u: f64 = rng.gen();
            // gen() is in [0,1) so the point stays inside its stratum.
            out[(i, j)] = (k as f64 + u) / n as f64;
        }
    }
    Ok(out)
}

/// One-dimensional LHS, returned as a plain vector.
pub fn lhs_sample_1d<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(lhs_sample(n, 1, rng)?.as_slice().to_vec())
}

/// `n` evenly spaced values covering `[0, 1]` with both endpoints.
pub fn linspace(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Maps a unit-cube point to the native box.
pub fn to_native(x_unit: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x_unit
        .iter()
        .zip(bounds)
        .map(|(&u, &(lo, hi))| lo + u * (hi - lo))
        .collect()
}

/// Maps a native point back to the unit cube.
pub fn to_unit(x_native: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x_native
        .iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| (v - lo) / (hi - lo))
        .collect()
}
