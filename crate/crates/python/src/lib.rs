//! Python bindings for `msk-core`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use msk_core::model::{ModelParams, PressureEstimate};
use msk_core::optimize::{minimize_parisi as minimize, OptimizationConfig};
use msk_core::parisi::{build_trial, parisi_recursion, parisi_rpc as rpc, TrialPoint};
use msk_core::rpc::{
    recursion_value as recursion, sample_cascade, CascadeConfig, CovarianceProfile, RecursionMethod, Terminal,
};
use msk_core::simulate::{
    cavity_functional as cavity, gg_delta as gg, gibbs_overlap_distribution, pressure_direct as direct,
    pressure_recursive as recursive, GgSettings, TestFunction,
};

fn err(e: msk_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn method(name: &str) -> PyResult<RecursionMethod> {
    match name {
        "auto" => Ok(RecursionMethod::Auto),
        "quadrature" => Ok(RecursionMethod::Quadrature { nodes: 32 }),
        "grid" => Ok(RecursionMethod::Grid {
            nodes: 32,
            spacing: 0.01,
        }),
        other => Err(PyValueError::new_err(format!(
            "unknown method `{other}` (expected auto, quadrature or grid)"
        ))),
    }
}

#[pyclass(name = "ModelParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(zeta: Vec<f64>, gamma: Vec<f64>) -> PyResult<Self> {
        ModelParams::new(zeta, gamma).map(|inner| PyModelParams { inner }).map_err(err)
    }

    #[getter]
    fn zeta(&self) -> Vec<f64> {
        self.inner.zeta().to_vec()
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma().to_vec()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(zeta={:?}, gamma={:?})", self.inner.zeta(), self.inner.gamma())
    }
}

#[pyclass(name = "PressureEstimate", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimate {
    mean: f64,
    stderr: f64,
    replicas: usize,
    seed: u64,
}

impl From<PressureEstimate> for PyEstimate {
    fn from(e: PressureEstimate) -> Self {
        PyEstimate {
            mean: e.mean,
            stderr: e.stderr,
            replicas: e.replicas,
            seed: e.seed,
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "PressureEstimate(mean={}, stderr={}, replicas={}, seed={})",
            self.mean, self.stderr, self.replicas, self.seed
        )
    }
}

#[pyclass(name = "TrialPoint", frozen, from_py_object)]
#[derive(Clone)]
struct PyTrialPoint {
    inner: TrialPoint,
}

#[pymethods]
impl PyTrialPoint {
    /// Trial point with the free `xi` merged into `params.zeta`.
    #[new]
    fn new(params: &PyModelParams, xi_free: Vec<f64>, q: Vec<f64>) -> PyResult<Self> {
        build_trial(&params.inner, &xi_free, &q)
            .map(|inner| PyTrialPoint { inner })
            .map_err(err)
    }

    #[getter]
    fn xi(&self) -> Vec<f64> {
        self.inner.xi().to_vec()
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q().to_vec()
    }

    #[getter]
    fn gamma_tilde(&self) -> Vec<f64> {
        self.inner.gamma_tilde().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn __repr__(&self) -> String {
        format!("TrialPoint(xi={:?}, q={:?})", self.inner.xi(), self.inner.q())
    }
}

#[pyfunction]
#[pyo3(signature = (params, n, replicas, seed, width = 32, tail_children = 16))]
fn pressure_direct(
    py: Python<'_>,
    params: &PyModelParams,
    n: usize,
    replicas: usize,
    seed: u64,
    width: usize,
    tail_children: usize,
) -> PyResult<PyEstimate> {
    let cfg = CascadeConfig::new(width, tail_children);
    py.detach(|| direct(&params.inner, n, &cfg, replicas, seed))
        .map(Into::into)
        .map_err(err)
}

/// Returns `(estimate, plug_in_bias)`.
#[pyfunction]
fn pressure_recursive(
    py: Python<'_>,
    params: &PyModelParams,
    n: usize,
    samples_per_level: usize,
    replicas: usize,
    seed: u64,
) -> PyResult<(PyEstimate, f64)> {
    let r = py
        .detach(|| recursive(&params.inner, n, samples_per_level, replicas, seed))
        .map_err(err)?;
    Ok((r.estimate.into(), r.plug_in_bias))
}

#[pyfunction]
#[pyo3(signature = (trial, method = "auto"))]
fn parisi_value(py: Python<'_>, trial: &PyTrialPoint, method: &str) -> PyResult<f64> {
    let m = self::method(method)?;
    py.detach(|| parisi_recursion(&trial.inner, m))
        .map(|v| v.value)
        .map_err(err)
}

/// Returns `(value, stderr)`.
#[pyfunction]
#[pyo3(signature = (trial, replicas, seed, width = 32, tail_children = 16))]
fn parisi_rpc(
    py: Python<'_>,
    trial: &PyTrialPoint,
    replicas: usize,
    seed: u64,
    width: usize,
    tail_children: usize,
) -> PyResult<(f64, f64)> {
    let cfg = CascadeConfig::new(width, tail_children);
    py.detach(|| rpc(&trial.inner, &cfg, replicas, seed))
        .map(|v| (v.value, v.stderr))
        .map_err(err)
}

/// Backward recursion value for a terminal given by name, e.g. `"log2cosh"`.
#[pyfunction]
#[pyo3(signature = (zeta, terminal, profile, method = "auto"))]
fn recursion_value(zeta: Vec<f64>, terminal: &str, profile: Vec<f64>, method: &str) -> PyResult<f64> {
    let t = Terminal::parse(terminal).map_err(err)?;
    let p = CovarianceProfile::new(profile).map_err(err)?;
    recursion(&zeta, &t, &p, self::method(method)?)
        .map(|v| v.value)
        .map_err(err)
}

/// Returns `(best_value, best_trial, status)`.
#[pyfunction]
#[pyo3(signature = (params, k_schedule = None, restarts = 8, max_evals = 2000, tolerance = 1e-6, seed = 0))]
fn minimize_parisi(
    py: Python<'_>,
    params: &PyModelParams,
    k_schedule: Option<Vec<usize>>,
    restarts: usize,
    max_evals: usize,
    tolerance: f64,
    seed: u64,
) -> PyResult<(f64, PyTrialPoint, String)> {
    let cfg = OptimizationConfig {
        k_schedule: k_schedule.unwrap_or_default(),
        restarts,
        max_evals,
        tolerance,
        seed,
        search_method: None,
    };
    let r = py.detach(|| minimize(&params.inner, &cfg)).map_err(err)?;
    Ok((
        r.best_value,
        PyTrialPoint { inner: r.best_trial },
        format!("{:?}", r.status).to_lowercase(),
    ))
}

#[pyfunction]
#[pyo3(signature = (params, n, replicas, seed, width = 32, tail_children = 16))]
fn cavity_functional(
    py: Python<'_>,
    params: &PyModelParams,
    n: usize,
    replicas: usize,
    seed: u64,
    width: usize,
    tail_children: usize,
) -> PyResult<PyEstimate> {
    let cfg = CascadeConfig::new(width, tail_children);
    py.detach(|| cavity(&params.inner, n, &cfg, replicas, seed))
        .map(|c| c.estimate.into())
        .map_err(err)
}

/// Returns `(level_frequency, level_stderr)`.
#[pyfunction]
#[pyo3(signature = (params, n, replicas, pairs_per_replica, seed, width = 32, tail_children = 16))]
#[allow(clippy::too_many_arguments)]
fn ancestor_levels(
    py: Python<'_>,
    params: &PyModelParams,
    n: usize,
    replicas: usize,
    pairs_per_replica: usize,
    seed: u64,
    width: usize,
    tail_children: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = CascadeConfig::new(width, tail_children);
    let d = py
        .detach(|| gibbs_overlap_distribution(&params.inner, n, &cfg, replicas, pairs_per_replica, seed))
        .map_err(err)?;
    Ok((d.level_frequency, d.level_stderr))
}

/// Returns `(delta, stderr)`.
#[pyfunction]
#[pyo3(signature = (params, n_spins, f, n, p, w, replicas, seed, tuples_per_replica = 64))]
#[allow(clippy::too_many_arguments)]
fn gg_delta(
    py: Python<'_>,
    params: &PyModelParams,
    n_spins: usize,
    f: &str,
    n: usize,
    p: u32,
    w: (f64, f64),
    replicas: usize,
    seed: u64,
    tuples_per_replica: usize,
) -> PyResult<(f64, f64)> {
    let settings = GgSettings {
        w,
        n,
        p,
        f: TestFunction::parse(f).map_err(err)?,
        tuples_per_replica,
    };
    let cfg = CascadeConfig::default();
    py.detach(|| gg(&params.inner, n_spins, &cfg, &settings, replicas, seed))
        .map(|g| (g.delta, g.stderr))
        .map_err(err)
}

/// Normalized leaf weights of one sampled cascade.
#[pyfunction]
#[pyo3(signature = (zeta, seed, width = 32, tail_children = 16))]
fn cascade_weights(zeta: Vec<f64>, seed: u64, width: usize, tail_children: usize) -> PyResult<Vec<f64>> {
    sample_cascade(&zeta, &CascadeConfig::new(width, tail_children), seed)
        .map(|c| c.leaf_weights())
        .map_err(err)
}

#[pymodule]
fn multiscale_sk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyTrialPoint>()?;
    m.add_function(wrap_pyfunction!(pressure_direct, m)?)?;
    m.add_function(wrap_pyfunction!(pressure_recursive, m)?)?;
    m.add_function(wrap_pyfunction!(parisi_value, m)?)?;
    m.add_function(wrap_pyfunction!(parisi_rpc, m)?)?;
    m.add_function(wrap_pyfunction!(recursion_value, m)?)?;
    m.add_function(wrap_pyfunction!(minimize_parisi, m)?)?;
    m.add_function(wrap_pyfunction!(cavity_functional, m)?)?;
    m.add_function(wrap_pyfunction!(ancestor_levels, m)?)?;
    m.add_function(wrap_pyfunction!(gg_delta, m)?)?;
    m.add_function(wrap_pyfunction!(cascade_weights, m)?)?;
    Ok(())
}
