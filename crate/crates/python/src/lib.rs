//! Python bindings: datasets, group metrics, the logical processors, single
//! pipelines and full experiments.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use fairbench::data::{self, GermanConfig, GermanSummary, SimConfig};
use fairbench::harness::{self, pareto_frontier, ExperimentConfig, ParetoPoint};
use fairbench::multistage::{self, PipelineSpec};
use fairbench::postprocess::solve_eq_odds;
use fairbench::{preprocess, GroupConfusion, Scenario};

fn err(e: fairbench::Error) -> PyErr {
    if e.is_data_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Tabular data with a binary label and binary sensitive columns.
#[pyclass(name = "Dataset", module = "fairbench_py", from_py_object)]
#[derive(Clone)]
struct PyDataset(fairbench::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, labels, sensitive, feature_names=None, weights=None))]
    fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        sensitive: HashMap<String, Vec<u8>>,
        feature_names: Option<Vec<String>>,
        weights: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let d = features.first().map_or(0, Vec::len);
        let names = feature_names.unwrap_or_else(|| (0..d).map(|j| format!("x{j}")).collect());
        let mut columns: Vec<(String, Vec<u8>)> = sensitive.into_iter().collect();
        columns.sort_by(|a, b| a.0.cmp(&b.0));
        let mut data = fairbench::Dataset::new(features, names, labels, columns).map_err(err)?;
        if let Some(w) = weights {
            data = data.with_weights(w).map_err(err)?;
        }
        Ok(Self(data))
    }

    /// One simulated replicate with sensitive columns `a1` and `a2`.
    #[staticmethod]
    #[pyo3(signature = (n=5000, seed=0, replicate=0))]
    fn simulate(n: usize, seed: u64, replicate: usize) -> PyResult<Self> {
        let cfg = SimConfig {
            n,
            seed,
            replicates: replicate + 1,
        };
        data::generate_simulation(&cfg, replicate)
            .map(Self)
            .map_err(err)
    }

    /// The German credit file; `a1` is age at or below the cutoff, `a2` female.
    #[staticmethod]
    #[pyo3(signature = (path, age_cutoff=25))]
    fn german(path: PathBuf, age_cutoff: u32) -> PyResult<Self> {
        let cfg = GermanConfig {
            path,
            age_cutoff,
            ..Default::default()
        };
        data::load_german(&cfg).map(Self).map_err(err)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.0.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.0.n_features()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.0.feature_names().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.labels().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn sensitive_names(&self) -> Vec<String> {
        self.0
            .sensitive_names()
            .into_iter()
            .map(String::from)
            .collect()
    }

    fn sensitive(&self, name: &str) -> PyResult<Vec<u8>> {
        self.0.sensitive(name).map(<[u8]>::to_vec).map_err(err)
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.0.rows().map(<[f64]>::to_vec).collect()
    }

    /// Adds the column produced by `scenario` ("or", "and", "xor") over
    /// `columns`; "single" returns the data unchanged.
    #[pyo3(signature = (scenario, columns=None))]
    fn with_lp(&self, scenario: &str, columns: Option<Vec<String>>) -> PyResult<Self> {
        let scenario: Scenario = scenario.parse().map_err(err)?;
        let columns = columns.unwrap_or_else(|| data::SENSITIVE.map(String::from).to_vec());
        let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        match scenario.processor() {
            None => Ok(self.clone()),
            Some(lp) => fairbench::apply_lp(&lp, &self.0, &refs)
                .map(Self)
                .map_err(err),
        }
    }

    /// Reweighing weights for `column` applied to a copy.
    fn reweigh(&self, column: &str) -> PyResult<Self> {
        preprocess::reweigh(&self.0, column).map(Self).map_err(err)
    }

    /// Stratified train/validation/test split.
    #[pyo3(signature = (fractions=(0.6, 0.2, 0.2), seed=0))]
    fn split(&self, fractions: (f64, f64, f64), seed: u64) -> PyResult<(Self, Self, Self)> {
        let (a, b, c) = fractions;
        let (train, val, test) = fairbench::split(&self.0, [a, b, c], seed).map_err(err)?;
        Ok((Self(train), Self(val), Self(test)))
    }

    /// Row count and the default and sensitive-group rates of `a1`/`a2` data.
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &GermanSummary::measure(&self.0).map_err(err)?)
    }

    fn __len__(&self) -> usize {
        self.0.n_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, features={}, sensitive={:?})",
            self.0.n_rows(),
            self.0.n_features(),
            self.0.sensitive_names()
        )
    }
}

/// Weighted accuracy, balanced accuracy, IND, SP, SP with absolute gaps and
/// SF of 0/1 predictions; undefined values are `None`.
#[pyfunction]
fn group_metrics<'py>(
    py: Python<'py>,
    data: &PyDataset,
    predictions: Vec<u8>,
    column: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let c = GroupConfusion::from_predictions(&data.0, &predictions, column).map_err(err)?;
    let metrics: HashMap<&str, Option<f64>> = [
        ("accuracy", c.accuracy()),
        ("balanced_accuracy", c.balanced_accuracy().ok()),
        ("ind", c.ind().ok()),
        ("sp", c.sp().ok()),
        ("sp_abs", c.sp_abs().ok()),
        ("sf", c.sf().ok()),
    ]
    .into_iter()
    .collect();
    to_py(py, &metrics)
}

/// Runs one pipeline described in TOML and returns its evaluation report.
#[pyfunction]
fn run_pipeline<'py>(
    py: Python<'py>,
    spec: &str,
    train: &PyDataset,
    val: &PyDataset,
    test: &PyDataset,
) -> PyResult<Bound<'py, PyAny>> {
    let spec: PipelineSpec =
        toml::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py
        .detach(|| multistage::run_pipeline(&spec, &train.0, &val.0, &test.0))
        .map_err(err)?;
    to_py(py, &report)
}

/// Runs an experiment described in TOML and returns the per-pipeline
/// medians. Result files are written to `out` when given.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    let out = out.or_else(|| cfg.output.clone());
    let results = py
        .detach(|| -> fairbench::Result<_> {
            let results = harness::run_experiment(&cfg)?;
            if let Some(dir) = &out {
                harness::emit_reports(&results, dir)?;
            }
            Ok(results)
        })
        .map_err(err)?;
    to_py(py, &results.aggregates)
}

/// Non-dominated `(pipeline, accuracy, sp)` points, best accuracy first.
#[pyfunction]
fn pareto(points: Vec<(String, f64, f64)>) -> Vec<(String, f64, f64)> {
    let points: Vec<ParetoPoint> = points
        .into_iter()
        .map(|(pipeline, accuracy, sp)| ParetoPoint {
            pipeline,
            accuracy,
            sp,
        })
        .collect();
    pareto_frontier(&points)
        .into_iter()
        .map(|p| (p.pipeline, p.accuracy, p.sp))
        .collect()
}

/// Equalized-odds mix for group ROC points `(fpr, tpr)` and label masses
/// `[[negatives, positives]; 2]`.
#[pyfunction]
fn eq_odds<'py>(
    py: Python<'py>,
    points: [(f64, f64); 2],
    mass: [[f64; 2]; 2],
) -> PyResult<Bound<'py, PyAny>> {
    let s = solve_eq_odds(points, mass);
    let value = serde_json::json!({
        "mix": s.mix,
        "point": s.point,
        "loss": s.loss,
    });
    to_py(py, &value)
}

#[pymodule]
fn fairbench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(group_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(pareto, m)?)?;
    m.add_function(wrap_pyfunction!(eq_odds, m)?)?;
    Ok(())
}
