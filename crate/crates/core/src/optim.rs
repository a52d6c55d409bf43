//! Box-constrained local optimizers backed by `argmin`.

use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::LBFGS;

/// Result of one local search.
#[derive(Debug, Clone)]
pub struct LocalMin {
    pub x: Vec<f64>,
    pub value: f64,
}

struct Penalized<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
    lo: &'a [f64],
    hi: &'a [f64],
}

fn clamp_into(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect()
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Penalized<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let inside = clamp_into(x, self.lo, self.hi);
        let excess: f64 = x.iter().zip(&inside).map(|(a, b)| (a - b).powi(2)).sum();
        let v = (self.f)(&inside);
        // Non-finite values are treated as a wall.
        let v = if v.is_finite() { v } else { f64::MAX / 4.0 };
        Ok(v + 1e6 * excess)
    }
}

/// Nelder–Mead restricted to the box `[lo, hi]` by clamping plus a quadratic
/// penalty on the excursion. The returned point is always inside the box.
pub fn nelder_mead_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    step: f64,
    max_iters: u64,
    sd_tol: f64,
) -> LocalMin {
    let start = clamp_into(x0, lo, hi);
    let mut simplex = vec![start.clone()];
    for j in 0..start.len() {
        let mut v = start.clone();
        let span = (hi[j] - lo[j]) * step;
        // Step inward when the start sits on the upper face.
        v[j] = if v[j] + span <= hi[j] { v[j] + span } else { v[j] - span };
        simplex.push(v);
    }
    let start_value = f(&start);
    let fallback = LocalMin {
        x: start.clone(),
        value: start_value,
    };
    let solver = match NelderMead::new(simplex).with_sd_tolerance(sd_tol) {
        Ok(s) => s,
        Err(_) => return fallback,
    };
    let problem = Penalized { f, lo, hi };
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(max_iters))
        .run();
    match res {
        Ok(r) => {
            let best = r.state().get_best_param().cloned().unwrap_or(start);
            let x = clamp_into(&best, lo, hi);
            let value = f(&x);
            if value.is_finite() && (value <= start_value || !start_value.is_finite()) {
                LocalMin { x, value }
            } else {
                fallback
            }
        }
        Err(_) => fallback,
    }
}

struct Logistic<'a, F: Fn(&[f64]) -> (f64, Vec<f64>)> {
    f: &'a F,
    lo: &'a [f64],
    hi: &'a [f64],
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Logistic<'_, F> {
    fn to_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(self.hi))
            .map(|(&ui, (&l, &h))| l + (h - l) / (1.0 + (-ui).exp()))
            .collect()
    }

    fn to_free(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(self.hi))
            .map(|(&xi, (&l, &h))| {
                let p = ((xi - l) / (h - l)).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            })
            .collect()
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> CostFunction for Logistic<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Vec<f64>) -> Result<f64, ArgminError> {
        let (v, _) = (self.f)(&self.to_box(u));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ArgminError::msg("non-finite objective"))
        }
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Gradient for Logistic<'_, F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, u: &Vec<f64>) -> Result<Vec<f64>, ArgminError> {
        let (_, g) = (self.f)(&self.to_box(u));
        Ok(u.iter()
            .zip(g)
            .zip(self.lo.iter().zip(self.hi))
            .map(|((&ui, gi), (&l, &h))| {
                let s = 1.0 / (1.0 + (-ui).exp());
                gi * (h - l) * s * (1.0 - s)
            })
            .collect())
    }
}

/// L-BFGS on a box, via a logistic reparameterization of each coordinate.
/// `f` returns the objective and its gradient with respect to `x`.
pub fn lbfgs_box<F: Fn(&[f64]) -> (f64, Vec<f64>)>(
    f: &F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iters: u64,
) -> LocalMin {
    let problem = Logistic { f, lo, hi };
    let u0 = problem.to_free(x0);
    let start = problem.to_box(&u0);
    let start_value = f(&start).0;
    let fallback = LocalMin {
        x: start,
        value: start_value,
    };
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 7);
    let solver = match solver.with_tolerance_grad(1e-7) {
        Ok(s) => s,
        Err(_) => return fallback,
    };
    let res = Executor::new(problem, solver)
        .configure(|s| s.param(u0).max_iters(max_iters))
        .run();
    match res {
        Ok(r) => match r.state().get_best_param() {
            Some(u) => {
                let x: Vec<f64> = u
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&ui, (&l, &h))| l + (h - l) / (1.0 + (-ui).exp()))
                    .collect();
                let value = f(&x).0;
                if value.is_finite() && (value <= start_value || !start_value.is_finite()) {
                    LocalMin { x, value }
                } else {
                    fallback
                }
            }
            None => fallback,
        },
        Err(_) => fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_interior_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] - 0.7).powi(2);
        let r = nelder_mead_box(&f, &[0.9, 0.1], &[0.0, 0.0], &[1.0, 1.0], 0.1, 500, 1e-12);
        assert!((r.x[0] - 0.3).abs() < 1e-4 && (r.x[1] - 0.7).abs() < 1e-4);
    }

    #[test]
    fn nelder_mead_stays_in_box() {
        let f = |x: &[f64]| x[0] + x[1];
        let r = nelder_mead_box(&f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], 0.2, 500, 1e-12);
        assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.value < 1e-3);
    }

    #[test]
    fn lbfgs_quadratic() {
        let f = |x: &[f64]| {
            let v = (x[0] - 1.0).powi(2) + (x[1] + 0.5).powi(2);
            (v, vec![2.0 * (x[0] - 1.0), 2.0 * (x[1] + 0.5)])
        };
        let r = lbfgs_box(&f, &[0.0, 0.0], &[-3.0, -3.0], &[3.0, 3.0], 200);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] + 0.5).abs() < 1e-4, "{:?}", r.x);
    }
}
