//! Python bindings: datasets, splits and samples, neighbor maps, regime
//! training, prediction and the metric suite.
//!
//! The module mirrors the CLI surface at library granularity; heavy state
//! (datasets, models) stays in Rust behind thin wrapper classes.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use crosstask::corpus::{
    self, compute_centroids, parse_sparse_dataset_with, write_sparse_dataset, Source,
};
use crosstask::harness;
use crosstask::learners::{self, Regime, RegimeData};
use crosstask::metrics;
use crosstask::optim::OptConfig;
use crosstask::persist;
use crosstask::relatedness::{self, NeighborMap};
use crosstask::sparse::SparseVector;

fn to_py_err(err: crosstask::Error) -> PyErr {
    match &err {
        crosstask::Error::Io { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_source(source: &str) -> PyResult<Source> {
    source.parse().map_err(to_py_err)
}

fn sparse_from_pairs(pairs: Vec<(u32, f64)>) -> PyResult<SparseVector> {
    SparseVector::new(pairs).map_err(to_py_err)
}

/// A labeled corpus from one source.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: corpus::Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn source(&self) -> String {
        self.inner.source().to_string()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn classes(&self) -> Vec<u32> {
        self.inner.classes()
    }

    fn class_size(&self, class_id: u32) -> usize {
        self.inner
            .class_examples(class_id)
            .map(|v| v.len())
            .unwrap_or(0)
    }

    fn labels(&self) -> Vec<u32> {
        self.inner.examples().iter().map(|e| e.class_id).collect()
    }

    fn example(&self, index: usize) -> PyResult<(u32, Vec<(u32, f64)>)> {
        let example = self
            .inner
            .examples()
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
        Ok((example.class_id, example.features.entries().to_vec()))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_sparse_dataset(&self.inner, path).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(source={}, examples={}, classes={}, dimension={})",
            self.inner.source(),
            self.inner.len(),
            self.inner.n_classes(),
            self.inner.dimension()
        )
    }
}

/// Per-task nearest classes in the other source.
#[pyclass(name = "NeighborMap", skip_from_py_object)]
#[derive(Clone)]
struct PyNeighborMap {
    inner: NeighborMap,
}

#[pymethods]
impl PyNeighborMap {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    /// Neighbors of one task as `[(neighbor_class_id, similarity), ...]`.
    fn neighbors(&self, source: &str, class_id: u32) -> PyResult<Vec<(u32, f64)>> {
        let source = parse_source(source)?;
        let task = corpus::TaskId::original(source, class_id);
        self.inner
            .neighbors(&task)
            .map(|list| list.to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("no neighbors for task {task}")))
    }

    /// Every entry as `(source, class_id, rank, neighbor_class_id, similarity)`.
    fn entries(&self) -> Vec<(String, u32, usize, u32, f64)> {
        let mut rows = Vec::new();
        for (task, list) in self.inner.entries() {
            for (rank, &(class, sim)) in list.iter().enumerate() {
                rows.push((task.source.to_string(), task.class_id, rank + 1, class, sim));
            }
        }
        rows
    }

    fn __repr__(&self) -> String {
        format!(
            "NeighborMap(k={}, tasks={})",
            self.inner.k(),
            self.inner.entries().len()
        )
    }
}

/// A trained model over both sources.
#[pyclass(name = "TrainedModel")]
struct PyTrainedModel {
    inner: learners::TrainedModel,
}

#[pymethods]
impl PyTrainedModel {
    #[getter]
    fn regime(&self) -> String {
        self.inner.regime.to_string()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn n_columns(&self) -> usize {
        self.inner.theta.n_columns()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.theta.dimension()
    }

    #[getter]
    fn seconds_per_class(&self) -> f64 {
        self.inner.seconds_per_class()
    }

    /// Classifies a sparse document `[(feature_id, value), ...]` within one
    /// source's taxonomy.
    fn predict(&self, source: &str, features: Vec<(u32, f64)>) -> PyResult<u32> {
        let source = parse_source(source)?;
        let x = sparse_from_pairs(features)?;
        self.inner.predict(source, &x).map_err(to_py_err)
    }

    /// Predictions for every example of a dataset.
    fn predict_dataset(&self, data: &PyDataset) -> PyResult<Vec<u32>> {
        self.inner.predict_dataset(&data.inner).map_err(to_py_err)
    }

    /// Evaluates on a labeled dataset and returns the metric suite as a dict.
    fn evaluate<'py>(&self, py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let classes: BTreeSet<u32> = self
            .inner
            .theta
            .columns()
            .keys()
            .filter(|id| id.source == data.inner.source() && !id.is_pooled())
            .map(|id| id.class_id)
            .collect();
        let keep: Vec<usize> = (0..data.inner.len())
            .filter(|&i| classes.contains(&data.inner.examples()[i].class_id))
            .collect();
        let restricted = data.inner.subset(&keep);
        let predictions = self.inner.predict_dataset(&restricted).map_err(to_py_err)?;
        let truth: Vec<u32> = restricted.examples().iter().map(|e| e.class_id).collect();
        let report = metrics::evaluate(&predictions, &truth, &classes).map_err(to_py_err)?;

        let out = PyDict::new(py);
        out.set_item("micro_f1", report.micro_f1)?;
        out.set_item("map", report.map)?;
        out.set_item("mar", report.mar)?;
        out.set_item("maf1", report.maf1)?;
        out.set_item("amcc", report.amcc)?;
        let per_class = PyDict::new(py);
        for (class, mcc) in &report.per_class_mcc {
            per_class.set_item(class, mcc)?;
        }
        out.set_item("per_class_mcc", per_class)?;
        out.set_item("n_examples", report.counts.n_examples())?;
        Ok(out)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        persist::save_model(&self.inner, path).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainedModel(regime={}, k={}, columns={})",
            self.inner.regime,
            self.inner.k,
            self.inner.theta.n_columns()
        )
    }
}

/// Parses a sparse dataset file (`<class_id> <feat>:<val> ...` per line).
#[pyfunction]
#[pyo3(signature = (path, source, l2_normalize = false))]
fn parse_dataset(path: PathBuf, source: &str, l2_normalize: bool) -> PyResult<PyDataset> {
    let source = parse_source(source)?;
    let inner = parse_sparse_dataset_with(path, source, l2_normalize).map_err(to_py_err)?;
    Ok(PyDataset { inner })
}

/// Generates the paired synthetic corpora.
#[pyfunction]
#[pyo3(signature = (n_classes, examples_per_class, dim, topic_overlap, seed))]
fn synth_dual_corpus(
    n_classes: usize,
    examples_per_class: usize,
    dim: usize,
    topic_overlap: f64,
    seed: u64,
) -> PyResult<(PyDataset, PyDataset)> {
    let (s1, s2) =
        harness::generate_synthetic_dual_corpus(n_classes, examples_per_class, dim, topic_overlap, seed)
            .map_err(to_py_err)?;
    Ok((PyDataset { inner: s1 }, PyDataset { inner: s2 }))
}

/// Stratified 3:1:1 split into (train, val, test).
#[pyfunction]
fn split_dataset(data: &PyDataset, seed: u64) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
    let (train, val, test) = corpus::split_dataset(&data.inner, seed).map_err(to_py_err)?;
    Ok((
        PyDataset { inner: train },
        PyDataset { inner: val },
        PyDataset { inner: test },
    ))
}

/// Fixed-size-per-class distribution sample (25 = LD, 250 = HD).
#[pyfunction]
fn sample_distribution(data: &PyDataset, size: usize, seed: u64) -> PyResult<PyDataset> {
    let inner = corpus::sample_distribution(&data.inner, size, seed).map_err(to_py_err)?;
    Ok(PyDataset { inner })
}

/// Continuous Tanimoto coefficient of two sparse vectors.
#[pyfunction]
fn tanimoto(a: Vec<(u32, f64)>, b: Vec<(u32, f64)>) -> PyResult<f64> {
    let a = sparse_from_pairs(a)?;
    let b = sparse_from_pairs(b)?;
    relatedness::tanimoto(&a, &b).map_err(to_py_err)
}

/// k nearest classes across the two sources (both directions, merged).
#[pyfunction]
#[pyo3(signature = (s1, s2, k, normalize_centroids = false))]
fn knn_related(
    s1: &PyDataset,
    s2: &PyDataset,
    k: usize,
    normalize_centroids: bool,
) -> PyResult<PyNeighborMap> {
    let c1 = compute_centroids(&s1.inner);
    let c2 = compute_centroids(&s2.inner);
    let forward =
        relatedness::knn_related_with(&c1, &c2, k, normalize_centroids).map_err(to_py_err)?;
    let backward =
        relatedness::knn_related_with(&c2, &c1, k, normalize_centroids).map_err(to_py_err)?;
    let inner = NeighborMap::merge(&forward, &backward).map_err(to_py_err)?;
    Ok(PyNeighborMap { inner })
}

/// Trains one regime ("STL", "SSL", "TL-NPA", "TL-INA", "MTL-NPA",
/// "MTL-INA") over both sources' samples.
#[pyfunction]
#[pyo3(signature = (
    regime, s1, s2, neighbors = None, lambda1 = 0.1, lambda2 = 0.1, lambda3 = 0.1,
    max_iters = 1000, tol = 1e-6, step_size = 1.0, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    regime: &str,
    s1: &PyDataset,
    s2: &PyDataset,
    neighbors: Option<&PyNeighborMap>,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    max_iters: usize,
    tol: f64,
    step_size: f64,
    seed: u64,
) -> PyResult<PyTrainedModel> {
    let regime: Regime = regime.parse().map_err(to_py_err)?;
    let cfg = OptConfig {
        step_size,
        max_iters,
        tol,
        lambda1,
        lambda2,
        lambda3,
        seed,
    };
    let data = RegimeData {
        s1: &s1.inner,
        s2: &s2.inner,
        n_features: s1.inner.dimension().max(s2.inner.dimension()),
        neighbors: neighbors.map(|n| &n.inner),
    };
    let inner = learners::train_regime(regime, &data, &cfg).map_err(to_py_err)?;
    Ok(PyTrainedModel { inner })
}

/// Loads a model file written by `TrainedModel.save`.
#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<PyTrainedModel> {
    let inner = persist::load_model(path).map_err(to_py_err)?;
    Ok(PyTrainedModel { inner })
}

/// Metric suite for explicit prediction/truth label vectors.
#[pyfunction]
fn evaluate_labels<'py>(
    py: Python<'py>,
    predictions: Vec<u32>,
    truth: Vec<u32>,
    classes: Vec<u32>,
) -> PyResult<Bound<'py, PyDict>> {
    let classes: BTreeSet<u32> = classes.into_iter().collect();
    let report = metrics::evaluate(&predictions, &truth, &classes).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("micro_f1", report.micro_f1)?;
    out.set_item("map", report.map)?;
    out.set_item("mar", report.mar)?;
    out.set_item("maf1", report.maf1)?;
    out.set_item("amcc", report.amcc)?;
    Ok(out)
}

#[pymodule]
fn crosstask_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNeighborMap>()?;
    m.add_class::<PyTrainedModel>()?;
    m.add_function(wrap_pyfunction!(parse_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dual_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(split_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(sample_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(tanimoto, m)?)?;
    m.add_function(wrap_pyfunction!(knn_related, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_labels, m)?)?;
    Ok(())
}
