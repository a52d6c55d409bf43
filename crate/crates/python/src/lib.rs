//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pbo_core::candidates::tricands as core_tricands;
use pbo_core::dgp::{dgp_predict_marginal, fit_dgp, DgpOptions, DgpState};
use pbo_core::gp::{fit_gp, GpFit, GpOptions, Smoothness};
use pbo_core::harness::{run_experiment as core_run, ExperimentConfig};
use pbo_core::profile::{run_method, LoopConfig, Method, ProfileEstimate, SurrogateKind};
use pbo_core::rng::stream_rng;
use pbo_core::testbed::{self, Dataset, BENCHMARK_NAMES};
use pbo_core::PboError;

fn py_err(e: PboError) -> PyErr {
    let msg = format!("[{}] {e}", e.kind());
    match e {
        PboError::InvalidArgument(_) | PboError::Config(_) | PboError::Degenerate(_) => PyValueError::new_err(msg),
        PboError::Io(_) => PyIOError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("expected a non-empty list of equal-length rows"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn dataset(x: Vec<Vec<f64>>, y: Vec<f64>, control_index: usize) -> PyResult<Dataset> {
    Dataset::new(to_matrix(&x)?, DVector::from_vec(y), control_index).map_err(py_err)
}

fn estimate_dict<'py>(py: Python<'py>, e: &ProfileEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("xstar", e.xstar_values.clone())?;
    d.set_item("mu_t", e.mu_t.clone())?;
    d.set_item("ci_lo", e.ci_lo.clone())?;
    d.set_item("ci_hi", e.ci_hi.clone())?;
    Ok(d)
}

/// Names of the built-in test functions.
#[pyfunction]
fn benchmark_names() -> Vec<&'static str> {
    BENCHMARK_NAMES.to_vec()
}

/// Evaluates a built-in function at a point of the unit cube.
#[pyfunction]
#[pyo3(signature = (name, x, control_index = 0))]
fn evaluate(name: &str, x: Vec<f64>, control_index: usize) -> PyResult<f64> {
    let bb = testbed::benchmark(name, control_index).map_err(py_err)?;
    testbed::eval_function(&bb, &x).map_err(py_err)
}

/// Oracle profile `T(x*)` of a built-in function on the given control values.
#[pyfunction]
#[pyo3(signature = (name, grid, control_index = 0))]
fn true_profile(name: &str, grid: Vec<f64>, control_index: usize) -> PyResult<Vec<f64>> {
    let bb = testbed::benchmark(name, control_index).map_err(py_err)?;
    testbed::true_profile(&bb, &grid, &testbed::OracleSettings::default()).map_err(py_err)
}

/// Latin hypercube of `n` points in `[0, 1]^d`.
#[pyfunction]
#[pyo3(signature = (n, d, seed = 0))]
fn lhs(n: usize, d: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let m = testbed::lhs_sample(n, d, &mut stream_rng(seed, 0)).map_err(py_err)?;
    Ok(to_rows(&m))
}

#[pyfunction]
fn expected_improvement(mu: f64, sigma: f64, threshold: f64) -> f64 {
    pbo_core::profile::expected_improvement(mu, sigma, threshold)
}

#[pyfunction]
fn profile_expected_improvement(mu: f64, sigma: f64, y_min: f64, mu_t: f64) -> f64 {
    pbo_core::profile::profile_expected_improvement(mu, sigma, y_min, mu_t)
}

/// Triangulation candidates of a point set; returns `(points, tags)`.
#[pyfunction]
#[pyo3(signature = (points, fringe_frac = 0.9))]
fn tricands(points: Vec<Vec<f64>>, fringe_frac: f64) -> PyResult<(Vec<Vec<f64>>, Vec<&'static str>)> {
    let t = core_tricands(&points, fringe_frac).map_err(py_err)?;
    let tags = t.tags.iter().map(|g| g.label()).collect();
    Ok((t.points, tags))
}

/// A GP fitted by maximum likelihood.
#[pyclass(module = "pbo")]
struct GpModel {
    fit: GpFit,
}

#[pymethods]
impl GpModel {
    #[new]
    #[pyo3(signature = (x, y, control_index = 0, smoothness = 2.5))]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>, control_index: usize, smoothness: f64) -> PyResult<Self> {
        let mut opts = GpOptions::default();
        opts.smoothness = match smoothness {
            s if s == 2.5 => Smoothness::Nu25,
            s if s == 1.5 => Smoothness::Nu15,
            s => return Err(PyValueError::new_err(format!("smoothness must be 1.5 or 2.5, got {s}"))),
        };
        let fit = fit_gp(&dataset(x, y, control_index)?, &opts).map_err(py_err)?;
        Ok(Self { fit })
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.fit.hyp.lengthscales.clone()
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.fit.loglik
    }

    /// Pointwise predictive mean and standard deviation.
    fn predict(&self, xp: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.fit.predict_marginal(&to_matrix(&xp)?).map_err(py_err)
    }

    /// Joint posterior mean vector and covariance matrix.
    fn posterior(&self, xp: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let p = self.fit.posterior(&to_matrix(&xp)?).map_err(py_err)?;
        Ok((p.mean.iter().copied().collect(), to_rows(&p.cov)))
    }

    fn to_json(&self) -> PyResult<String> {
        self.fit.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            fit: GpFit::from_json(s).map_err(py_err)?,
        })
    }
}

/// A two-layer deep GP fitted by MCMC.
#[pyclass(module = "pbo")]
struct DgpModel {
    state: DgpState,
}

#[pymethods]
impl DgpModel {
    #[new]
    #[pyo3(signature = (x, y, control_index = 0, iters = 10_000, seed = 0))]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>, control_index: usize, iters: usize, seed: u64) -> PyResult<Self> {
        let data = dataset(x, y, control_index)?;
        let state = fit_dgp(&data, &DgpOptions::default(), iters, &mut stream_rng(seed, 0)).map_err(py_err)?;
        Ok(Self { state })
    }

    #[getter]
    fn retained_draws(&self) -> usize {
        self.state.draws.len()
    }

    fn predict(&self, xp: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        dgp_predict_marginal(&self.state, &to_matrix(&xp)?).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.state.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            state: DgpState::from_json(s).map_err(py_err)?,
        })
    }
}

fn parse_method(s: &str) -> PyResult<Method> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown method {s}")))
}

/// Runs one sequential design on a built-in function and returns the final
/// design, the profile estimate and the acquisition trace.
#[pyfunction]
#[pyo3(signature = (function, method = "pbo", n_init = 10, m_total = 30, seed = 1, control_index = 0,
                    surrogate = "gp", axis_size = 50, final_axis_size = 100, samples = 1000))]
#[allow(clippy::too_many_arguments)]
fn run_loop<'py>(
    py: Python<'py>,
    function: &str,
    method: &str,
    n_init: usize,
    m_total: usize,
    seed: u64,
    control_index: usize,
    surrogate: &str,
    axis_size: usize,
    final_axis_size: usize,
    samples: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let bb = testbed::benchmark(function, control_index).map_err(py_err)?;
    let method = parse_method(method)?;
    let mut cfg = LoopConfig::default();
    cfg.seed = seed;
    cfg.axis_size = axis_size;
    cfg.final_axis_size = final_axis_size;
    cfg.surrogate.samples = samples;
    cfg.surrogate.kind = match surrogate {
        "gp" => SurrogateKind::Gp,
        "dgp" => SurrogateKind::Dgp,
        other => return Err(PyValueError::new_err(format!("unknown surrogate {other}"))),
    };
    let out = py
        .detach(|| {
            let init = pbo_core::harness::initial_design(&bb, n_init, control_index, seed)?;
            run_method(method, &bb, &init, m_total, &cfg)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("x", to_rows(&out.data.x))?;
    d.set_item("y", out.data.y.iter().copied().collect::<Vec<_>>())?;
    d.set_item("estimate", estimate_dict(py, &out.estimate)?)?;
    d.set_item("initial_estimate", estimate_dict(py, &out.initial_estimate)?)?;
    let records: Vec<String> = out
        .records
        .iter()
        .map(serde_json::to_string)
        .collect::<Result<_, _>>()
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    d.set_item("records", records)?;
    Ok(d)
}

/// Runs an experiment from a JSON config document; returns the experiment
/// directory.
#[pyfunction]
#[pyo3(signature = (config_json, jobs = 1))]
fn run_experiment(py: Python<'_>, config_json: &str, jobs: usize) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(py_err)?;
    let result = py.detach(|| core_run(&cfg, jobs)).map_err(py_err)?;
    Ok(result.dir.display().to_string())
}

#[pymodule]
fn pbo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(benchmark_names, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(true_profile, m)?)?;
    m.add_function(wrap_pyfunction!(lhs, m)?)?;
    m.add_function(wrap_pyfunction!(expected_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(profile_expected_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(tricands, m)?)?;
    m.add_function(wrap_pyfunction!(run_loop, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<GpModel>()?;
    m.add_class::<DgpModel>()?;
    Ok(())
}
