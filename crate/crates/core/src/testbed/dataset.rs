use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Training data on the unit cube, with the constants used to standardize
/// responses before modeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub control_index: usize,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, control_index: usize) -> Result<Self> {
        if x.nrows() != y.len() {
            return invalid(format!("{} input rows but {} responses", x.nrows(), y.len()));
        }
        if control_index >= x.ncols() {
            return invalid(format!(
                "control index {control_index} out of range for d = {}",
                x.ncols()
            ));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid("inputs must lie in the unit cube");
        }
        if y.iter().any(|v| !v.is_finite()) {
            return invalid("responses must be finite");
        }
        let mut data = Self {
            x,
            y,
            y_mean: 0.0,
            y_sd: 1.0,
            control_index,
        };
        data.restandardize();
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    pub fn y_min(&self) -> f64 {
        self.y.min()
    }

    /// Appends one observation and refreshes the standardization constants.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim() {
            return invalid(format!("expected {} inputs, got {}", self.dim(), x.len()));
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) || !y.is_finite() {
            return invalid("new observation must be finite and inside the unit cube");
        }
        let n = self.n();
        self.x = self.x.clone().insert_row(n, 0.0);
        for (j, &v) in x.iter().enumerate() {
            self.x[(n, j)] = v;
        }
        self.y = self.y.clone().push(y);
        self.restandardize();
        Ok(())
    }

    /// Whether `x` matches an existing row to within `tol` in every coordinate.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        (0..self.n()).any(|i| self.x.row(i).iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
    }

    fn restandardize(&mut self) {
        let n = self.y.len();
        if n == 0 {
            return;
        }
        self.y_mean = self.y.mean();
        let sd = if n >= 2 {
            let ss: f64 = self.y.iter().map(|v| (v - self.y_mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        self.y_sd = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    }

    pub fn standardized_y(&self) -> DVector<f64> {
        self.y.map(|v| (v - self.y_mean) / self.y_sd)
    }

    pub fn destandardize(&self, v: f64) -> f64 {
        self.y_mean + self.y_sd * v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn standardization_moments(ys in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let n = ys.len();
            let spread = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - ys.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-6);
            let x = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
            let data = Dataset::new(x, DVector::from_vec(ys.clone()), 0).unwrap();
            let z = data.standardized_y();
            let mean = z.mean();
            let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-10);
            for (zi, yi) in z.iter().zip(&ys) {
                prop_assert!((data.destandardize(*zi) - yi).abs() <= 1e-9 * (1.0 + yi.abs()));
            }
        }
    }

    #[test]
    fn constant_response_keeps_unit_scale() {
        let x = DMatrix::from_row_slice(3, 1, &[0.1, 0.5, 0.9]);
        let data = Dataset::new(x, DVector::from_element(3, 4.0), 0).unwrap();
        assert_eq!(data.y_sd, 1.0);
        assert!(data.standardized_y().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn push_and_contains() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let mut data = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0]), 1).unwrap();
        data.push(&[0.9, 0.9], 3.0).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.row(2), vec![0.9, 0.9]);
        assert!(data.contains(&[0.3, 0.4], 1e-12));
        assert!(!data.contains(&[0.3, 0.5], 1e-12));
        assert!(data.push(&[1.5, 0.0], 1.0).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert!(Dataset::new(x.clone(), DVector::from_vec(vec![1.0]), 0).is_err());
        assert!(Dataset::new(x, DVector::from_vec(vec![1.0, 2.0]), 2).is_err());
    }
}
