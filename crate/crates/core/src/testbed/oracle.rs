use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::design::{lhs_sample, to_native};
use super::functions::BlackBox;
use crate::error::{invalid, PboError, Result};
use crate::optim::nelder_mead_box;
use crate::rng::stream_rng;

/// Resolution of the ground-truth profile search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    /// Grid points per nuisance dimension when there are at most two.
    pub grid_per_dim: usize,
    /// Initial multistart count when there are three or more nuisance inputs.
    pub starts: usize,
    /// Upper limit for start doubling.
    pub max_starts: usize,
    /// Doubling stops once successive minima agree to this tolerance.
    pub tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            grid_per_dim: 201,
            starts: 50,
            max_starts: 800,
            tol: 1e-4,
        }
    }
}

/// Ground-truth profile `T(x*) = min f(x*, ·)` on a unit-scale control grid.
pub fn true_profile(bb: &dyn BlackBox, xstar_grid: &[f64], settings: &OracleSettings) -> Result<Vec<f64>> {
    let box_ = vec![(0.0, 1.0); bb.dim() - 1];
    true_profile_in(bb, xstar_grid, settings, &box_)
}

/// As [`true_profile`], but minimizing only over the unit-scale nuisance
/// sub-box `nuisance_box`.
pub fn true_profile_in(
    bb: &dyn BlackBox,
    xstar_grid: &[f64],
    settings: &OracleSettings,
    nuisance_box: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let d = bb.dim();
    let ctrl = bb.control_index();
    if nuisance_box.len() != d - 1 {
        return invalid("nuisance box must have d - 1 intervals");
    }
    if settings.grid_per_dim < 2 || settings.starts == 0 {
        return invalid("oracle needs at least 2 grid points and 1 start");
    }
    let lo: Vec<f64> = nuisance_box.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = nuisance_box.iter().map(|b| b.1).collect();
    let bounds = bb.native_bounds().to_vec();
    let eval = |xstar: f64, nuis: &[f64]| -> f64 {
        let mut x = Vec::with_capacity(d);
        x.extend_from_slice(&nuis[..ctrl]);
        x.push(xstar);
        x.extend_from_slice(&nuis[ctrl..]);
        bb.eval_native(&to_native(&x, &bounds)).unwrap_or(f64::INFINITY)
    };

    let mut out = Vec::with_capacity(xstar_grid.len());
    for &xs in xstar_grid {
        let f = |nuis: &[f64]| eval(xs, nuis);
        let t = if d - 1 <= 2 {
            grid_then_polish(&f, &lo, &hi, settings.grid_per_dim)
        } else {
            multistart(&f, &lo, &hi, settings)
        };
        if !t.is_finite() {
            return Err(PboError::BlackBox(format!(
                "{} produced no finite value on slice x* = {xs}",
                bb.name()
            )));
        }
        out.push(t);
    }
    Ok(out)
}

fn grid_then_polish<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], per_dim: usize) -> f64 {
    let k = lo.len();
    let total = per_dim.pow(k as u32);
    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut point = vec![0.0; k];
    for idx in 0..total {
        let mut rest = idx;
        for j in 0..k {
            let step = rest % per_dim;
            rest /= per_dim;
            point[j] = lo[j] + (hi[j] - lo[j]) * step as f64 / (per_dim - 1) as f64;
        }
        let v = f(&point);
        if best.len() < 3 || v < best[best.len() - 1].0 {
            best.push((v, point.clone()));
            best.sort_by(|a, b| a.0.total_cmp(&b.0));
            best.truncate(3);
        }
    }
    let mut t = best.first().map_or(f64::INFINITY, |b| b.0);
    for (_, start) in &best {
        let r = nelder_mead_box(f, start, lo, hi, 0.5 / (per_dim - 1) as f64, 400, 1e-13);
        t = t.min(r.value);
    }
    t
}

fn multistart<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64], settings: &OracleSettings) -> f64 {
    let k = lo.len();
    let run = |starts: usize, stream: u64| -> f64 {
        let mut rng = stream_rng(0x5EED_0C1E, stream);
        let design = lhs_sample(starts, k, &mut rng).expect("positive sizes");
        let mut best = f64::INFINITY;
        for i in 0..starts {
            let x0: Vec<f64> = (0..k)
                .map(|j| lo[j] + (hi[j] - lo[j]) * design[(i, j)])
                .collect();
            let step = 0.05 + 0.1 * rng.gen::<f64>();
            best = best.min(nelder_mead_box(f, &x0, lo, hi, step, 2000, 1e-12).value);
        }
        best
    };
    let mut starts = settings.starts;
    let mut current = run(starts, starts as u64);
    while starts * 2 <= settings.max_starts {
        starts *= 2;
        let next = run(starts, starts as u64).min(current);
        let settled = (current - next).abs() < settings.tol;
        current = next;
        if settled {
            break;
        }
    }
    current
}

/// Writes a `xstar,T` table.
pub fn write_truth_csv<W: Write>(mut w: W, xstar: &[f64], truth: &[f64]) -> Result<()> {
    writeln!(w, "xstar,T")?;
    for (x, t) in xstar.iter().zip(truth) {
        writeln!(w, "{x},{t}")?;
    }
    Ok(())
}

/// Reads a `xstar,T` table written by [`write_truth_csv`].
pub fn read_truth_csv<R: BufRead>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| PboError::InvalidArgument(format!("bad truth row {}: '{line}'", i + 1)))
        };
        xs.push(parse(parts.next())?);
        ts.push(parse(parts.next())?);
    }
    Ok((xs, ts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{benchmark, linspace};

    struct Closure<F> {
        f: F,
        bounds: Vec<(f64, f64)>,
    }

    impl<F: Fn(&[f64]) -> f64 + Send + Sync> BlackBox for Closure<F> {
        fn name(&self) -> &str {
            "closure"
        }
        fn dim(&self) -> usize {
            self.bounds.len()
        }
        fn control_index(&self) -> usize {
            0
        }
        fn native_bounds(&self) -> &[(f64, f64)] {
            &self.bounds
        }
        fn eval_native(&self, x: &[f64]) -> Result<f64> {
            Ok((self.f)(x))
        }
    }

    fn fast() -> OracleSettings {
        OracleSettings {
            grid_per_dim: 41,
            starts: 10,
            max_starts: 40,
            tol: 1e-6,
        }
    }

    #[test]
    fn constant_function() {
        let bb = Closure {
            f: |_: &[f64]| 2.5,
            bounds: vec![(0.0, 1.0); 3],
        };
        let t = true_profile(&bb, &linspace(5), &fast()).unwrap();
        assert!(t.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn separable_quadratic() {
        for d in [2usize, 3, 4] {
            let bb = Closure {
                f: |x: &[f64]| x[0] * x[0] + x[1..].iter().map(|v| (v - 0.5).powi(2)).sum::<f64>(),
                bounds: vec![(0.0, 1.0); d],
            };
            let grid = linspace(6);
            let t = true_profile(&bb, &grid, &fast()).unwrap();
            for (x, v) in grid.iter().zip(&t) {
                assert!((v - x * x).abs() < 1e-6, "d={d} x={x} T={v}");
            }
        }
    }

    #[test]
    fn restriction_never_lowers_profile() {
        let bb = Closure {
            f: |x: &[f64]| (3.0 * x[1]).sin() * (x[0] + 1.0) + (x[2] - 0.2).powi(2),
            bounds: vec![(0.0, 1.0); 3],
        };
        let grid = linspace(5);
        let full = true_profile(&bb, &grid, &fast()).unwrap();
        let sub = true_profile_in(&bb, &grid, &fast(), &[(0.1, 0.6), (0.4, 0.9)]).unwrap();
        for (a, b) in full.iter().zip(&sub) {
            assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn branin_global_minimum_by_search() {
        // Dense 2-D grid of the implemented formula, then local polish.
        let f = benchmark("branin", 0).unwrap();
        let obj = |u: &[f64]| crate::testbed::eval_function(&f, u).unwrap();
        let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
        for i in 0..=200 {
            for j in 0..=200 {
                let u = vec![i as f64 / 200.0, j as f64 / 200.0];
                starts.push((obj(&u), u));
            }
        }
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let best = starts[..10]
            .iter()
            .map(|(_, u)| nelder_mead_box(&obj, u, &[0.0, 0.0], &[1.0, 1.0], 0.005, 1000, 1e-14).value)
            .fold(f64::INFINITY, f64::min);
        assert!((best - 0.397887).abs() < 1e-6, "{best}");
    }

    #[test]
    fn branin_profile_converged_and_has_three_dips() {
        let f = benchmark("branin", 0).unwrap();
        let grid = linspace(101);
        let coarse = true_profile(&f, &grid, &OracleSettings::default()).unwrap();
        let fine = true_profile(
            &f,
            &grid,
            &OracleSettings {
                grid_per_dim: 401,
                ..OracleSettings::default()
            },
        )
        .unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a - b).abs() < 1e-4);
        }
        // The three global minimizers sit at x1 = -pi, pi, 3pi in native units.
        for x1 in [-std::f64::consts::PI, std::f64::consts::PI, 3.0 * std::f64::consts::PI] {
            let u = (x1 + 5.0) / 15.0;
            let t = true_profile(&f, &[u], &OracleSettings::default()).unwrap()[0];
            assert!((t - 0.397887).abs() < 1e-4);
        }
        // Away from the dips the profile is well above the global minimum.
        assert!(coarse[0] > 5.0 && coarse[50] > 1.0);
    }

    #[test]
    fn truth_csv_round_trip() {
        let mut buf = Vec::new();
        write_truth_csv(&mut buf, &[0.0, 0.5, 1.0], &[1.5, -0.25, 3.0]).unwrap();
        let (x, t) = read_truth_csv(buf.as_slice()).unwrap();
        assert_eq!(x, vec![0.0, 0.5, 1.0]);
        assert_eq!(t, vec![1.5, -0.25, 3.0]);
    }
}
