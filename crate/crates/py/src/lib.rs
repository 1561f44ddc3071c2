//! Python bindings for the profiling toolkit: spec validation and
//! enumeration, campaign execution, bundle loading, statistics, the
//! geometric-mean normalizer, and scaling-model fits.
//!
//! Structured inputs (models, limits) are plain dicts matching the JSON
//! schemas of the spec files; structured outputs come back as dicts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};

use chainprof::backend::SimulatedBackend;
use chainprof::bundle;
use chainprof::config::parse_experiment;
use chainprof::engine::{self, EngineOptions};
use chainprof::model::{enumerate_configurations, validate_topology, Dimension};
use chainprof::normalize;
use chainprof::predict;
use chainprof::stats;

fn value_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any().unbind()
            } else {
                PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN))
                    .into_any()
                    .unbind()
            }
        }
        serde_json::Value::String(s) => PyString::new(py, s).into_any().unbind(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(value_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, value_to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn py_to_value(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    if obj.is_none() {
        return Ok(serde_json::Value::Null);
    }
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(serde_json::Value::Bool(b.is_true()));
    }
    if let Ok(i) = obj.cast::<PyInt>() {
        if let Ok(v) = i.extract::<i64>() {
            return Ok(serde_json::Value::from(v));
        }
        return Ok(serde_json::Value::from(i.extract::<u64>()?));
    }
    if let Ok(f) = obj.cast::<PyFloat>() {
        let v = f.value();
        return serde_json::Number::from_f64(v)
            .map(serde_json::Value::Number)
            .ok_or_else(|| PyValueError::new_err("non-finite number"));
    }
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(serde_json::Value::String(s.to_string()));
    }
    if let Ok(list) = obj.cast::<PyList>() {
        let mut items = Vec::with_capacity(list.len());
        for item in list.iter() {
            items.push(py_to_value(&item)?);
        }
        return Ok(serde_json::Value::Array(items));
    }
    if let Ok(tuple) = obj.cast::<PyTuple>() {
        let mut items = Vec::with_capacity(tuple.len());
        for item in tuple.iter() {
            items.push(py_to_value(&item)?);
        }
        return Ok(serde_json::Value::Array(items));
    }
    if let Ok(dict) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (key, item) in dict.iter() {
            let key = key
                .cast::<PyString>()
                .map_err(|_| PyValueError::new_err("dict keys must be strings"))?;
            map.insert(key.to_string(), py_to_value(&item)?);
        }
        return Ok(serde_json::Value::Object(map));
    }
    Err(PyValueError::new_err(format!(
        "unsupported value of type {}",
        obj.get_type().name()?
    )))
}

fn to_py_via_json<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value)
        .map_err(|e| PyRuntimeError::new_err(format!("serialization failed: {}", e)))?;
    value_to_py(py, &json)
}

fn from_py_via_json<T: for<'de> serde::Deserialize<'de>>(
    obj: &Bound<'_, PyAny>,
    what: &str,
) -> PyResult<T> {
    let value = py_to_value(obj)?;
    serde_json::from_value(value).map_err(|e| PyValueError::new_err(format!("bad {}: {}", what, e)))
}

/// Parses and validates an experiment document, returning its summary.
/// Raises ValueError with the structured diagnostics when invalid.
#[pyfunction]
fn validate_spec(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let spec = parse_experiment(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let configs = enumerate_configurations(&spec.sweep, &spec.topology)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let warnings: Vec<String> = validate_topology(&spec.topology)
        .warnings
        .iter()
        .map(|w| w.to_string())
        .collect();
    let dict = PyDict::new(py);
    dict.set_item("name", &spec.name)?;
    dict.set_item("configurations", configs.len())?;
    dict.set_item("repetitions", spec.repetitions)?;
    dict.set_item("metrics", spec.metrics.len())?;
    dict.set_item("warnings", warnings)?;
    Ok(dict.into_any().unbind())
}

/// Expands a spec's sweep into the ordered configuration list.
#[pyfunction]
fn enumerate_configs(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let spec = parse_experiment(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let configs = enumerate_configurations(&spec.sweep, &spec.topology)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_json(py, &configs)
}

/// Runs a profiling campaign from a spec file and writes the bundle.
/// Only simulated-backend specs are supported here; container campaigns
/// go through the CLI.
#[pyfunction]
#[pyo3(signature = (spec_path, out_dir, seed=None, parallelism=1))]
fn run_profiling(
    py: Python<'_>,
    spec_path: PathBuf,
    out_dir: PathBuf,
    seed: Option<u64>,
    parallelism: usize,
) -> PyResult<Py<PyAny>> {
    let text = std::fs::read_to_string(&spec_path)
        .map_err(|e| PyIOError::new_err(format!("cannot read {}: {}", spec_path.display(), e)))?;
    let mut spec = parse_experiment(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let models = spec
        .sim_models
        .clone()
        .ok_or_else(|| PyValueError::new_err("only simulated-backend specs run in-process"))?;
    let backend = SimulatedBackend::new(models);
    let outcome = engine::run_profiling(&spec, &backend, &out_dir, &EngineOptions { parallelism })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let dict = PyDict::new(py);
    dict.set_item("bundle_dir", outcome.bundle_dir)?;
    dict.set_item("manifest_digest", outcome.manifest_digest)?;
    dict.set_item("records", outcome.bundle.records.len())?;
    dict.set_item("configurations", outcome.bundle.configurations.len())?;
    dict.set_item("profiles", outcome.bundle.profiles.len())?;
    dict.set_item("flagged_runs", outcome.bundle.manifest.flagged_runs.len())?;
    Ok(dict.into_any().unbind())
}

/// Loads a bundle and returns its manifest plus profile listing.
#[pyfunction]
fn load_bundle(py: Python<'_>, bundle_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let bundle = bundle::load_bundle(&bundle_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let dict = PyDict::new(py);
    dict.set_item("manifest", to_py_via_json(py, &bundle.manifest)?)?;
    let profiles = PyList::empty(py);
    for profile in &bundle.profiles {
        profiles.append(to_py_via_json(py, profile)?)?;
    }
    dict.set_item("profiles", profiles)?;
    dict.set_item("records", bundle.records.len())?;
    if let Some(normalized) = &bundle.normalized {
        dict.set_item("normalized_profiles", normalized.len())?;
    }
    Ok(dict.into_any().unbind())
}

/// Mean, sample standard deviation, and 95% t-interval of the samples.
#[pyfunction]
fn aggregate(py: Python<'_>, samples: Vec<f64>) -> PyResult<Py<PyAny>> {
    let agg = stats::aggregate(&samples).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_json(py, &agg)
}

/// Two-sided Student-t quantile.
#[pyfunction]
fn student_t_quantile(p: f64, df: f64) -> f64 {
    stats::student_t_quantile(p, df)
}

/// exp(mean of logs) of strictly positive values.
#[pyfunction]
fn geometric_mean_score(values: Vec<f64>) -> PyResult<f64> {
    normalize::geometric_mean_score(&values).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Fits constant/linear/plateau candidates to (resource, metric) points
/// and returns the selected model with its behavior class.
#[pyfunction]
#[pyo3(signature = (points, dimension="resource", metric="metric"))]
fn fit_scaling_model(
    py: Python<'_>,
    points: Vec<(f64, f64)>,
    dimension: &str,
    metric: &str,
) -> PyResult<Py<PyAny>> {
    let model = predict::fit_scaling_model(&points, dimension, metric)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_json(py, &model)
}

/// Smallest tested allocation whose fitted prediction satisfies the
/// target; None when the target is unreachable on the tested grid.
#[pyfunction]
#[pyo3(signature = (points, target, higher_is_better=true))]
fn min_resource_for_sla(
    points: Vec<(f64, f64)>,
    target: f64,
    higher_is_better: bool,
) -> PyResult<Option<f64>> {
    let model = predict::fit_scaling_model(&points, "resource", "metric")
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut grid: Vec<f64> = points.iter().map(|p| p.0).collect();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    match predict::min_resource_for_sla(&model, &grid, target, higher_is_better) {
        Ok(x) => Ok(Some(x)),
        Err(predict::SlaError::Unreachable { .. }) => Ok(None),
        Err(e) => Err(PyValueError::new_err(e.to_string())),
    }
}

/// Evaluates the synthetic VNF model under the given limits. `model`
/// and `limits` are dicts in the spec-file schema.
#[pyfunction]
#[pyo3(signature = (model, limits, noise_draw=0.0))]
fn sim_evaluate(
    model: &Bound<'_, PyAny>,
    limits: &Bound<'_, PyAny>,
    noise_draw: f64,
) -> PyResult<f64> {
    let model: chainprof::backend::SimVNFModel = from_py_via_json(model, "sim model")?;
    let limits: chainprof::model::ResourceLimits = from_py_via_json(limits, "resource limits")?;
    Ok(chainprof::backend::sim_evaluate(
        &model, &limits, noise_draw,
    ))
}

/// Full analysis of a bundle: per-marginal scaling fits, optional SLA
/// answers, and chain sensitivity when a dimension is given.
#[pyfunction]
#[pyo3(signature = (bundle_dir, sla_metric=None, sla_target=None, dimension=None, metric=None))]
fn analyze_bundle(
    py: Python<'_>,
    bundle_dir: PathBuf,
    sla_metric: Option<String>,
    sla_target: Option<f64>,
    dimension: Option<String>,
    metric: Option<String>,
) -> PyResult<Py<PyAny>> {
    let bundle = bundle::load_bundle(&bundle_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let sla = match (&sla_metric, sla_target) {
        (Some(m), Some(t)) => Some((m.as_str(), t)),
        (None, None) => None,
        _ => {
            return Err(PyValueError::new_err(
                "sla_metric and sla_target go together",
            ))
        }
    };
    let dimension = dimension
        .map(|name| {
            Dimension::parse(&name)
                .ok_or_else(|| PyValueError::new_err(format!("unknown dimension `{}`", name)))
        })
        .transpose()?;
    let report = predict::analyze_bundle(&bundle, sla, dimension, metric.as_deref());
    to_py_via_json(py, &report)
}

/// Normalizes a bundle against per-metric baselines and returns the
/// normalized profiles (nothing is written to disk).
#[pyfunction]
fn normalize_profiles(
    py: Python<'_>,
    bundle_dir: PathBuf,
    baselines: BTreeMap<String, f64>,
) -> PyResult<Py<PyAny>> {
    let mut bundle =
        bundle::load_bundle(&bundle_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let baseline = normalize::BaselineVector {
        host: bundle.manifest.host.clone(),
        baselines,
        provenance: normalize::Provenance::Supplied,
    };
    normalize::normalize_bundle(&mut bundle, &baseline)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_json(py, &bundle.normalized)
}

#[pymodule]
fn chainprof_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate_spec, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_configs, m)?)?;
    m.add_function(wrap_pyfunction!(run_profiling, m)?)?;
    m.add_function(wrap_pyfunction!(load_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(student_t_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_mean_score, m)?)?;
    m.add_function(wrap_pyfunction!(fit_scaling_model, m)?)?;
    m.add_function(wrap_pyfunction!(min_resource_for_sla, m)?)?;
    m.add_function(wrap_pyfunction!(sim_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_profiles, m)?)?;
    Ok(())
}
