//! Python module `ranndy_py`. Matrices cross the boundary as lists of rows in
//! the library layout: states are d×m (one column per sample).

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use ranndy::coherent::{self, KMeansOptions};
use ranndy::{hyperopt, presets, spectral, Error, Mode, Omega, RunConfig, SnapshotData};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format { .. } | Error::Length { .. } => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Dimension(_) | Error::Contract(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_mode(mode: Option<&str>, fallback: Mode) -> PyResult<Mode> {
    match mode {
        None => Ok(fallback),
        Some("self_adjoint") => Ok(Mode::SelfAdjoint),
        Some("non_self_adjoint") => Ok(Mode::NonSelfAdjoint),
        Some(other) => Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    }
}

fn snapshot(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, lag: f64) -> PyResult<SnapshotData> {
    SnapshotData::new(to_matrix(x)?, to_matrix(y)?, lag, "python").map_err(py_err)
}

fn config(json: &str) -> PyResult<RunConfig> {
    let c = RunConfig::from_json(json).map_err(py_err)?;
    c.validate().map_err(py_err)?;
    Ok(c)
}

/// Preset run configuration as JSON, for "graphon", "bickley", "ou" or "double_well".
#[pyfunction]
fn preset_config(system: &str) -> PyResult<String> {
    let c = presets::config_for(system).ok_or_else(|| PyValueError::new_err(format!("unknown system {system:?}")))?;
    serde_json::to_string_pretty(&c).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Simulated snapshot pairs: dict with `x`, `y` (d×m row lists) and `lag`.
#[pyfunction]
#[pyo3(signature = (system, samples, seed))]
fn generate<'py>(py: Python<'py>, system: &str, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let data = match system {
        "graphon" => presets::graphon_data(samples, seed),
        "bickley" => presets::bickley_data(samples, seed),
        "ou" => presets::ou_data(samples, seed),
        "double_well" => presets::double_well_data(samples, seed),
        _ => return Err(PyValueError::new_err(format!("unknown system {system:?}"))),
    }
    .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("x", to_rows(&data.x))?;
    out.set_item("y", to_rows(&data.y))?;
    out.set_item("lag", data.lag)?;
    Ok(out)
}

/// Trace-loss ascent over the scales. Returns `omega` (flat), `losses`, `converged`.
#[pyfunction]
fn train<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, lag: f64, config_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let data = snapshot(x, y, lag)?;
    let config = config(config_json)?;
    let trace = py
        .allow_threads(|| {
            let spec = ranndy::build_feature_map(&config, data.dim())?;
            hyperopt::optimize(&spec, &config, &data)
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("omega", trace.final_omega.clone())?;
    out.set_item("losses", trace.epochs.iter().map(|e| e.loss).collect::<Vec<_>>())?;
    out.set_item("converged", trace.converged)?;
    Ok(out)
}

/// Output layer at fixed scales. Returns `values`, `spectrum` and
/// `eigenfunctions` (n×m, evaluated at `x`).
#[pyfunction]
#[pyo3(signature = (x, y, lag, config_json, omega, mode=None, n=None))]
#[allow(clippy::too_many_arguments)]
fn decompose<'py>(
    py: Python<'py>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    lag: f64,
    config_json: &str,
    omega: Vec<f64>,
    mode: Option<&str>,
    n: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let data = snapshot(x, y, lag)?;
    let config = config(config_json)?;
    let mode = parse_mode(mode, config.mode)?;
    let n = n.unwrap_or(config.n_outputs);
    let omega = Omega::from_slice(config.activation, &omega).map_err(py_err)?;
    let (result, phi) = py
        .allow_threads(|| {
            let spec = ranndy::build_feature_map(&config, data.dim())?;
            let result = hyperopt::decompose(&spec, &omega, &data, mode, n, config.pinv_rel_tol)?;
            let phi = spectral::evaluate_functions(&spec, &omega, &result, &data.x)?;
            Ok::<_, Error>((result, phi))
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("values", result.values.as_slice().to_vec())?;
    out.set_item("spectrum", result.spectrum.as_slice().to_vec())?;
    out.set_item("eigenfunctions", to_rows(&phi))?;
    Ok(out)
}

/// Coherent-set labels from a fresh non-self-adjoint decomposition with `n` components.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn coherent_sets(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    lag: f64,
    config_json: &str,
    omega: Vec<f64>,
    n: usize,
    k: usize,
) -> PyResult<Vec<usize>> {
    let data = snapshot(x, y, lag)?;
    let config = config(config_json)?;
    let omega = Omega::from_slice(config.activation, &omega).map_err(py_err)?;
    py.allow_threads(|| {
        let spec = ranndy::build_feature_map(&config, data.dim())?;
        let result = hyperopt::decompose(&spec, &omega, &data, Mode::NonSelfAdjoint, n, config.pinv_rel_tol)?;
        coherent::coherent_sets(&spec, &omega, &result, &data.x, k, config.seed, KMeansOptions::default())
    })
    .map(|c| c.labels)
    .map_err(py_err)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("label vectors differ in length"));
    }
    Ok(coherent::adjusted_rand_index(&a, &b))
}

#[pymodule]
fn ranndy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(coherent_sets, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    Ok(())
}
