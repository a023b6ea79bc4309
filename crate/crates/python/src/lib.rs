//! Python bindings over the s2osc building blocks and experiment runner.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use s2osc::metrics::{self, BinaryCounts, ConfusionMatrix};
use s2osc::nn::Matrix;
use s2osc::runner::{self, ExperimentConfig};

fn value_err(e: s2osc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Temperature-scaled distribution: every probability raised to `1/t`, then renormalized.
#[pyfunction]
fn softmax_t(probs: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    s2osc::nn::softmax_t(&probs, t).map_err(value_err)
}

/// Shannon entropy (natural log) of a probability vector.
#[pyfunction]
fn prediction_entropy(probs: Vec<f64>) -> PyResult<f64> {
    s2osc::filter::prediction_entropy(&probs).map_err(value_err)
}

/// Ids of the `k` largest weights, ties broken by ascending id.
#[pyfunction]
fn select_filtered(weights: BTreeMap<u64, f64>, k: usize) -> PyResult<Vec<u64>> {
    s2osc::filter::select_filtered(&weights, k).map(|(ids, _)| ids).map_err(value_err)
}

/// Returns `(labels, centroids, wcss_history)`.
#[pyfunction]
#[pyo3(signature = (points, b, seed=0, max_iter=100, tol=1e-6))]
fn kmeans(points: Vec<Vec<f64>>, b: usize, seed: u64, max_iter: usize, tol: f64) -> PyResult<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>)> {
    let d = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != d) {
        return Err(PyValueError::new_err("points must all have the same dimension"));
    }
    let m = Matrix::new(points.len(), d, points.concat());
    let km = s2osc::cluster::kmeans(&m, b, seed, max_iter, tol).map_err(value_err)?;
    Ok((km.labels, km.centroids, km.wcss_history))
}

/// Accuracy, macro precision/recall and weighted F1 of paired labels.
#[pyfunction]
fn classification_metrics(truth: Vec<u32>, predicted: Vec<u32>) -> PyResult<BTreeMap<&'static str, f64>> {
    if truth.len() != predicted.len() {
        return Err(PyValueError::new_err("truth and predicted differ in length"));
    }
    let pairs: Vec<(u32, u32)> = truth.into_iter().zip(predicted).collect();
    let m = metrics::classification_metrics(&ConfusionMatrix::from_pairs(&pairs)).map_err(value_err)?;
    Ok(BTreeMap::from([
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("weighted_f1", m.weighted_f1),
    ]))
}

/// F1 of the unknown-vs-known decision; `None` when nothing is unknown on either side.
#[pyfunction]
fn f_out(truth_unknown: Vec<bool>, predicted_unknown: Vec<bool>) -> PyResult<Option<f64>> {
    if truth_unknown.len() != predicted_unknown.len() {
        return Err(PyValueError::new_err("inputs differ in length"));
    }
    Ok(metrics::f_out(&BinaryCounts::tally(truth_unknown.into_iter().zip(predicted_unknown))))
}

#[pyfunction]
fn forgetting(per_window_avg_acc: Vec<f64>, a_star: f64) -> PyResult<f64> {
    metrics::forgetting(&per_window_avg_acc, a_star).map_err(value_err)
}

/// Default experiment configuration as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    ExperimentConfig::default().to_toml().map_err(value_err)
}

/// Runs one experiment and returns its report as JSON. `mode` is `"run"`
/// (dispatch on the config's protocol) or `"baseline"`. Failures raise
/// `RuntimeError` carrying the stage-tagged error JSON.
#[pyfunction]
#[pyo3(signature = (config="", overrides=Vec::new(), mode="run"))]
fn run_experiment(py: Python<'_>, config: &str, overrides: Vec<String>, mode: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_with(config, &overrides).map_err(value_err)?;
    let baseline = match mode {
        "run" => false,
        "baseline" => true,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let outcome = py.detach(|| if baseline { runner::run_baseline_threshold(&cfg) } else { runner::run(&cfg) });
    let report = outcome.map_err(|e| PyRuntimeError::new_err(e.to_json()))?;
    report.to_json().map_err(value_err)
}

#[pymodule]
fn s2osc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(softmax_t, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(select_filtered, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(classification_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(f_out, m)?)?;
    m.add_function(wrap_pyfunction!(forgetting, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
