//! Python bindings for the faircontrast toolkit.
//!
//! Exposes the dataset generator/loader, the fairness metric suite, the
//! Sinkhorn solver, and train/evaluate entry points. Configs cross the
//! boundary as JSON strings so the Rust structs stay the single source
//! of truth for defaults.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use faircontrast::dataset::{self, CorruptionFlag, SampleSet, SynthConfig};
use faircontrast::dbpm::{pair_weight as core_pair_weight, EpochStats, PairClass};
use faircontrast::error::Error;
use faircontrast::fair_ot::{sinkhorn as core_sinkhorn, DiscreteDist};
use faircontrast::metrics;
use faircontrast::numkit::Matrix;
use faircontrast::trainer::{self, TrainConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Paired-feature dataset handle.
#[pyclass]
struct Dataset {
    inner: SampleSet,
}

#[pymethods]
impl Dataset {
    /// Generates a synthetic dataset from a JSON config (same schema as
    /// the Rust `SynthConfig`).
    #[staticmethod]
    fn generate(config_json: &str) -> PyResult<Self> {
        let cfg: SynthConfig =
            serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = dataset::generate_synthetic(&cfg).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = dataset::load_jsonl(Path::new(path)).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        dataset::write_jsonl(&self.inner, Path::new(path)).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// (image_dim, text_dim)
    fn dims(&self) -> (usize, usize) {
        (self.inner.header.dim_image, self.inner.header.dim_text)
    }

    fn attributes(&self) -> BTreeMap<String, u32> {
        self.inner.header.attributes.clone()
    }

    /// (clean, noisy, faulty) counts; unflagged samples count as clean.
    fn corruption_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for s in &self.inner.samples {
            match s.corrupted {
                Some(CorruptionFlag::Noisy) => counts.1 += 1,
                Some(CorruptionFlag::Faulty) => counts.2 += 1,
                _ => counts.0 += 1,
            }
        }
        counts
    }

    fn labels(&self) -> Vec<u8> {
        self.inner.samples.iter().map(|s| s.label).collect()
    }
}

/// ROC AUC with midrank tie handling.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auc(&scores, &labels).map_err(to_py)
}

/// Equity-scaled AUC: overall / (1 + sum |overall - group|).
#[pyfunction]
fn es_auc(overall: f64, group_aucs: Vec<f64>) -> f64 {
    let map: BTreeMap<u32, f64> = group_aucs
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i as u32, v))
        .collect();
    metrics::es_auc(overall, &map)
}

/// Demographic parity difference over binary predictions.
#[pyfunction]
fn dpd(preds: Vec<u8>, attr_codes: Vec<u32>) -> PyResult<f64> {
    metrics::dpd(&preds, &attr_codes).map_err(to_py)
}

/// Equalized-odds difference (max of TPR gap and FPR gap).
#[pyfunction]
fn deodds(preds: Vec<u8>, labels: Vec<u8>, attr_codes: Vec<u32>) -> PyResult<f64> {
    metrics::deodds(&preds, &labels, &attr_codes).map_err(to_py)
}

/// Symmetric cross-entropy contrastive loss of a square similarity matrix
/// against diagonal targets.
#[pyfunction]
fn symmetric_ce_loss(w: Vec<Vec<f64>>) -> PyResult<f64> {
    let matrix = Matrix::from_rows(&w).map_err(to_py)?;
    if matrix.rows() != matrix.cols() {
        return Err(PyValueError::new_err("similarity matrix must be square"));
    }
    let sim = faircontrast::contrastive::SimilarityMatrix {
        w: matrix,
        temp: 1.0,
    };
    Ok(faircontrast::contrastive::symmetric_ce_loss(&sim)
        .map_err(to_py)?
        .value)
}

/// Entropic optimal transport between weighted point sets on the line.
/// Returns (value, plan, iterations, converged).
#[pyfunction]
#[pyo3(signature = (a_support, a_weights, b_support, b_weights, eps, max_iter = 2000, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn sinkhorn(
    a_support: Vec<f64>,
    a_weights: Vec<f64>,
    b_support: Vec<f64>,
    b_weights: Vec<f64>,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> PyResult<(f64, Vec<Vec<f64>>, usize, bool)> {
    let a = DiscreteDist::new(a_support, a_weights).map_err(to_py)?;
    let b = DiscreteDist::new(b_support, b_weights).map_err(to_py)?;
    let res = core_sinkhorn(&a, &b, eps, max_iter, tol).map_err(to_py)?;
    let plan = (0..res.plan.rows())
        .map(|i| res.plan.row(i).to_vec())
        .collect();
    Ok((res.value, plan, res.iterations, res.converged))
}

/// Bad-pair weight for one decision value given epoch statistics.
/// Returns (weight, classification).
#[pyfunction]
fn pair_weight(value: f64, mu: f64, sigma: f64, alpha: f64, beta: f64) -> (f64, String) {
    let stats = EpochStats {
        epoch: 0,
        mu,
        sigma,
        a: mu - alpha * sigma,
        b: mu + beta * sigma,
        alpha,
        beta,
    };
    let verdict = core_pair_weight(0, value, &stats);
    let class = match verdict.class {
        PairClass::Correct => "correct",
        PairClass::Noisy => "noisy",
        PairClass::Faulty => "faulty",
    };
    (verdict.weight, class.to_string())
}

/// Trains from JSONL datasets; config_json uses the Rust `TrainConfig`
/// schema (missing fields take the training defaults). Writes a run
/// directory when out_dir is given. Returns a summary dict.
#[pyfunction]
#[pyo3(signature = (config_json, train_path, val_path, out_dir = None))]
fn train<'py>(
    py: Python<'py>,
    config_json: &str,
    train_path: &str,
    val_path: &str,
    out_dir: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: TrainConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let train_set = dataset::load_jsonl(Path::new(train_path)).map_err(to_py)?;
    let val_set = dataset::load_jsonl(Path::new(val_path)).map_err(to_py)?;
    let arts = trainer::train(&cfg, &train_set, &val_set, out_dir.map(Path::new)).map_err(to_py)?;

    let last = arts.curves.last().expect("at least one epoch");
    let out = PyDict::new(py);
    out.set_item("best_epoch", arts.best_epoch)?;
    out.set_item("best_val_auc", arts.best_val_auc)?;
    out.set_item("l1_mean", last.l1_mean)?;
    out.set_item("l2_mean", last.l2_mean)?;
    out.set_item("fairness_mean", last.fairness_mean)?;
    out.set_item("epochs", arts.curves.len())?;
    Ok(out)
}

/// Evaluates a checkpoint on a test set, fitting class prototypes from
/// the train set. Returns {attribute: report dict}.
#[pyfunction]
#[pyo3(signature = (checkpoint_path, test_path, train_path, attributes = None, threshold = 0.5))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint_path: &str,
    test_path: &str,
    train_path: &str,
    attributes: Option<Vec<String>>,
    threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let ckpt = trainer::checkpoint_load(Path::new(checkpoint_path)).map_err(to_py)?;
    let test_set = dataset::load_jsonl(Path::new(test_path)).map_err(to_py)?;
    let train_set = dataset::load_jsonl(Path::new(train_path)).map_err(to_py)?;
    let attrs: Vec<String> = match attributes {
        Some(a) => a,
        None => test_set.header.attributes.keys().cloned().collect(),
    };
    let protos = metrics::fit_prototypes(&ckpt.params, &train_set).map_err(to_py)?;
    let results = trainer::evaluate(&ckpt.params, &test_set, &attrs, &protos, threshold);

    let out = PyDict::new(py);
    for (attr, result) in results {
        let report = result.map_err(to_py)?;
        let entry = PyDict::new(py);
        entry.set_item("auc", report.auc)?;
        entry.set_item("es_auc", report.es_auc)?;
        entry.set_item("dpd", report.dpd)?;
        entry.set_item("deodds", report.deodds)?;
        let groups = PyDict::new(py);
        for (code, value) in &report.group_auc {
            groups.set_item(code, value)?;
        }
        entry.set_item("group_auc", groups)?;
        entry.set_item("threshold", report.threshold)?;
        entry.set_item("omitted_groups", report.omitted_groups.clone())?;
        out.set_item(attr, entry)?;
    }
    Ok(out)
}

#[pymodule]
fn faircontrast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(es_auc, m)?)?;
    m.add_function(wrap_pyfunction!(dpd, m)?)?;
    m.add_function(wrap_pyfunction!(deodds, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_ce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sinkhorn, m)?)?;
    m.add_function(wrap_pyfunction!(pair_weight, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
