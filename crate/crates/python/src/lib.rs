//! Python bindings: datasets, preparation, training, metrics and
//! attribution. Configs are passed as dicts (or JSON strings) with the same
//! fields as the command-line config files; structured results come back as
//! plain dicts.

use std::path::PathBuf;

use moira::attribution::{attribute_sample, attribution_campaign, AttributionConfig, CampaignResult};
use moira::data::{load_dataset, synthesize, write_dataset, MaskedDataset, SelectionParams, SynthConfig};
use moira::metrics::{self, Metrics, ScoredLabels};
use moira::model::{Checkpoint, Model, ModelConfig};
use moira::training::{self, ablation_suite, ablation_table_csv, run_repeated, PrepareConfig, TrainConfig};
use moira::Tensor2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(pymoira, MoiraError, PyException, "Raised for any error reported by the library.");

fn err(e: moira::MoiraError) -> PyErr {
    MoiraError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    MoiraError::new_err(format!("config error: {e}"))
}

/// Parses a config given as a JSON string or a dict.
fn parse<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.cast::<PyString>() {
        s.to_string()
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(json_err)
}

/// Like [`parse`], with `None` meaning the defaults.
fn config<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    obj.map_or_else(|| Ok(T::default()), parse)
}

/// Converts any serializable value to Python objects through JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(json_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tensor(rows: &[Vec<f64>]) -> PyResult<Tensor2> {
    Tensor2::from_rows(rows).map_err(err)
}

/// Samples with per-modality feature matrices and a presence mask.
#[pyclass(name = "Dataset", module = "pymoira", frozen)]
struct PyDataset {
    inner: MaskedDataset,
}

impl PyDataset {
    fn wrap(inner: MaskedDataset) -> Self {
        Self { inner }
    }

    fn modality(&self, name: &str) -> PyResult<usize> {
        self.inner
            .modality_index(name)
            .ok_or_else(|| MoiraError::new_err(format!("unknown modality `{name}`")))
    }
}

#[pymethods]
impl PyDataset {
    /// Draws a synthetic dataset from a synthesis config.
    #[staticmethod]
    fn synthesize(config: &Bound<'_, PyAny>) -> PyResult<Self> {
        let cfg: SynthConfig = parse(config)?;
        synthesize(&cfg).map(Self::wrap).map_err(err)
    }

    /// Loads a dataset from its manifest, verifying every file hash.
    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        load_dataset(&manifest).map(|(ds, _)| Self::wrap(ds)).map_err(err)
    }

    /// Writes the dataset directory and returns its manifest.
    #[pyo3(signature = (directory, top_k = None))]
    fn save<'py>(&self, py: Python<'py>, directory: PathBuf, top_k: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let selection = top_k.map_or_else(SelectionParams::default, |top_k| SelectionParams { top_k });
        let manifest = write_dataset(&self.inner, &directory, selection).map_err(err)?;
        to_py(py, &manifest)
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    #[getter]
    fn modality_names(&self) -> Vec<String> {
        self.inner.modality_names().into_iter().map(String::from).collect()
    }

    #[getter]
    fn sample_ids(&self) -> Vec<String> {
        self.inner.sample_ids.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    /// `presence[i][m]` is true when modality `m` was measured for sample `i`.
    #[getter]
    fn presence(&self) -> Vec<Vec<bool>> {
        self.inner.presence.clone()
    }

    fn feature_ids(&self, modality: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.modalities[self.modality(modality)?].feature_ids.clone())
    }

    /// Feature matrix of one modality; rows of absent samples are zero.
    fn matrix(&self, modality: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.modalities[self.modality(modality)?].matrix.to_rows())
    }

    /// A copy with the named modalities marked absent for every sample.
    fn silence(&self, names: Vec<String>) -> PyResult<Self> {
        self.inner.silence(&names).map(Self::wrap).map_err(err)
    }

    #[pyo3(signature = (test_fraction = 0.3, seed = 0, stratified = true))]
    fn split(&self, test_fraction: f64, seed: u64, stratified: bool) -> PyResult<(Self, Self)> {
        let (a, b) = moira::data::split(&self.inner, test_fraction, seed, stratified).map_err(err)?;
        Ok((Self::wrap(a), Self::wrap(b)))
    }

    fn __len__(&self) -> usize {
        self.inner.n_samples()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_samples={}, n_classes={}, modalities={:?})",
            self.inner.n_samples(),
            self.inner.n_classes,
            self.inner.modality_names()
        )
    }
}

/// A trained classifier.
#[pyclass(name = "Model", module = "pymoira", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(err)?;
        Model::from_checkpoint(&ck).map(|inner| Self { inner }).map_err(err)
    }

    #[pyo3(signature = (path, seed = 0))]
    fn save(&self, path: PathBuf, seed: u64) -> PyResult<()> {
        self.inner.to_checkpoint(seed).save(&path).map_err(err)
    }

    #[getter]
    fn modality_names(&self) -> Vec<String> {
        self.inner.config.modalities.iter().map(|m| m.name.clone()).collect()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.config.n_classes
    }

    /// Class probabilities, one row per sample.
    fn predict(&self, py: Python<'_>, dataset: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let probs = py.detach(|| self.inner.predict_dataset(&dataset.inner)).map_err(err)?;
        Ok(probs.to_rows())
    }

    /// Gate weights over modalities for every sample.
    fn gate_weights(&self, dataset: &PyDataset) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = moira::rng::stream(0, "eval");
        (0..dataset.inner.n_samples())
            .map(|i| {
                let sample: Vec<Tensor2> = dataset
                    .inner
                    .modalities
                    .iter()
                    .map(|md| Tensor2::row_vector(md.matrix.row(i).to_vec()))
                    .collect();
                let out = self.inner.forward(&sample, &dataset.inner.presence[i], false, &mut rng);
                Ok(out.map_err(err)?.alpha)
            })
            .collect()
    }

    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
        let probs = py.detach(|| self.inner.predict_dataset(&dataset.inner)).map_err(err)?;
        to_py(py, &Metrics::evaluate(&probs, &dataset.inner.labels).map_err(err)?)
    }

    /// Integrated gradients of one sample's target logit with respect to
    /// one modality, from the zero baseline.
    #[pyo3(signature = (dataset, sample, modality, target_class = 1, steps = moira::attribution::DEFAULT_STEPS))]
    fn attribute<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        sample: usize,
        modality: &str,
        target_class: usize,
        steps: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        if sample >= dataset.inner.n_samples() {
            return Err(MoiraError::new_err(format!("sample {sample} is out of range")));
        }
        let m = dataset.modality(modality)?;
        let res = attribute_sample(&self.inner, &dataset.inner, sample, m, target_class, steps).map_err(err)?;
        to_py(py, &res)
    }

    fn __repr__(&self) -> String {
        format!("Model(modalities={:?}, n_classes={})", self.modality_names(), self.n_classes())
    }
}

/// Splits, selects features on the training half and standardizes.
/// Returns `(train, test)`.
#[pyfunction]
#[pyo3(signature = (dataset, config = None, seed = 0))]
fn prepare(dataset: &PyDataset, config: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
    let cfg: PrepareConfig = self::config(config)?;
    let p = training::prepare(&dataset.inner, &cfg, seed).map_err(err)?;
    Ok((PyDataset::wrap(p.train), PyDataset::wrap(p.test)))
}

/// Fits a model on `train` (with pretraining if configured).
#[pyfunction]
#[pyo3(signature = (train, model_config = None, train_config = None))]
fn fit(
    py: Python<'_>,
    train: &PyDataset,
    model_config: Option<&Bound<'_, PyAny>>,
    train_config: Option<&Bound<'_, PyAny>>,
) -> PyResult<PyModel> {
    let mc: ModelConfig = config(model_config)?;
    let tc: TrainConfig = config(train_config)?;
    let out = py.detach(|| training::fit(&train.inner, &mc, &tc)).map_err(err)?;
    Ok(PyModel { inner: out.model })
}

/// Fits on `train`, evaluates on `test` and returns `(model, run)`.
#[pyfunction]
#[pyo3(signature = (train, test, model_config = None, train_config = None))]
fn train<'py>(
    py: Python<'py>,
    train: &PyDataset,
    test: &PyDataset,
    model_config: Option<&Bound<'py, PyAny>>,
    train_config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let mc: ModelConfig = config(model_config)?;
    let tc: TrainConfig = config(train_config)?;
    let (model, run) = py
        .detach(|| training::train(&train.inner, &test.inner, &mc, &tc))
        .map_err(err)?;
    Ok((PyModel { inner: model }, to_py(py, &run)?))
}

/// Independent runs with seeds `seed .. seed + n_runs`, with their mean
/// and standard deviation.
#[pyfunction]
#[pyo3(signature = (train, test, model_config = None, train_config = None, n_runs = 10, seed = 0, parallel = 1))]
#[allow(clippy::too_many_arguments)]
fn repeated<'py>(
    py: Python<'py>,
    train: &PyDataset,
    test: &PyDataset,
    model_config: Option<&Bound<'py, PyAny>>,
    train_config: Option<&Bound<'py, PyAny>>,
    n_runs: usize,
    seed: u64,
    parallel: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mc: ModelConfig = config(model_config)?;
    let tc: TrainConfig = config(train_config)?;
    let res = py
        .detach(|| run_repeated(&train.inner, &test.inner, &mc, &tc, n_runs, seed, parallel))
        .map_err(err)?;
    to_py(py, &res)
}

/// The ablation table as CSV text.
#[pyfunction]
#[pyo3(signature = (train, test, model_config = None, train_config = None, trimodal = None, n_runs = 10, seed = 0, parallel = 1))]
#[allow(clippy::too_many_arguments)]
fn ablation(
    py: Python<'_>,
    train: &PyDataset,
    test: &PyDataset,
    model_config: Option<&Bound<'_, PyAny>>,
    train_config: Option<&Bound<'_, PyAny>>,
    trimodal: Option<Vec<String>>,
    n_runs: usize,
    seed: u64,
    parallel: usize,
) -> PyResult<String> {
    let mc: ModelConfig = config(model_config)?;
    let tc: TrainConfig = config(train_config)?;
    let rows = py
        .detach(|| ablation_suite(&train.inner, &test.inner, &mc, &tc, trimodal.as_deref(), n_runs, seed, parallel))
        .map_err(err)?;
    Ok(ablation_table_csv(&rows))
}

/// Repeated training plus attribution. Returns `(campaign, reports)` where
/// `reports` maps each modality to its CSV report.
#[pyfunction]
#[pyo3(signature = (train, test, model_config = None, train_config = None, attribution_config = None, seed = 0, parallel = 1))]
#[allow(clippy::too_many_arguments)]
fn attribution<'py>(
    py: Python<'py>,
    train: &PyDataset,
    test: &PyDataset,
    model_config: Option<&Bound<'py, PyAny>>,
    train_config: Option<&Bound<'py, PyAny>>,
    attribution_config: Option<&Bound<'py, PyAny>>,
    seed: u64,
    parallel: usize,
) -> PyResult<(Bound<'py, PyAny>, std::collections::BTreeMap<String, String>)> {
    let mc: ModelConfig = config(model_config)?;
    let tc: TrainConfig = config(train_config)?;
    let ac: AttributionConfig = config(attribution_config)?;
    let res = py
        .detach(|| attribution_campaign(&train.inner, &test.inner, &mc, &tc, &ac, seed, parallel))
        .map_err(err)?;
    let reports = res
        .reports
        .iter()
        .map(|r| (r.modality_name.clone(), CampaignResult::report_csv(r)))
        .collect();
    Ok((to_py(py, &res)?, reports))
}

/// Per-feature one-way ANOVA F statistics.
#[pyfunction]
fn anova_f(matrix: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Vec<f64>> {
    moira::data::anova_f(&tensor(&matrix)?, &labels).map_err(err)
}

/// Accuracy, precision, AUROC and AUPRC from a probability matrix.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, probs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &Metrics::evaluate(&tensor(&probs)?, &labels).map_err(err)?)
}

#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<usize>) -> PyResult<f64> {
    metrics::auroc(&ScoredLabels::new(scores, &labels).map_err(err)?).map_err(err)
}

#[pyfunction]
fn auprc(scores: Vec<f64>, labels: Vec<usize>) -> PyResult<f64> {
    metrics::auprc(&ScoredLabels::new(scores, &labels).map_err(err)?).map_err(err)
}

#[pymodule]
fn pymoira(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MoiraError", m.py().get_type::<MoiraError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(repeated, m)?)?;
    m.add_function(wrap_pyfunction!(ablation, m)?)?;
    m.add_function(wrap_pyfunction!(attribution, m)?)?;
    m.add_function(wrap_pyfunction!(anova_f, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(auprc, m)?)?;
    Ok(())
}
