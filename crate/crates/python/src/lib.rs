//! Python bindings for the `parperc` dependency parser.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use parperc::convlab::{self, SeparableSpec};
use parperc::corpus;
use parperc::decoder;
use parperc::evalbench;
use parperc::model::{self as pmodel};
use parperc::synth::{self, TreebankSpec};
use parperc::trainer::{self, TrainConfig, TrainMode};
use parperc::{DependencyTree, FeatureConfig, ModelOrder, Sentence, WeightModel};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn feature_config(hash_bits: u32, order: u32) -> PyResult<FeatureConfig> {
    FeatureConfig::new(hash_bits, ModelOrder::from_u32(order).map_err(value_err)?).map_err(value_err)
}

fn sentence(forms: Vec<String>, tags: Vec<String>) -> PyResult<Sentence> {
    if forms.len() != tags.len() {
        return Err(PyValueError::new_err("forms and tags differ in length"));
    }
    Sentence::from_pairs(forms.into_iter().zip(tags)).map_err(value_err)
}

type PyTree = (Vec<String>, Vec<String>, Vec<usize>);

fn to_py_tree((s, t): &(Sentence, DependencyTree)) -> PyTree {
    let n = s.len();
    (
        (1..=n).map(|i| s.form(i).to_string()).collect(),
        (1..=n).map(|i| s.pos(i).to_string()).collect(),
        t.heads().to_vec(),
    )
}

fn from_py_tree((forms, tags, heads): PyTree) -> PyResult<(Sentence, DependencyTree)> {
    Ok((sentence(forms, tags)?, DependencyTree::new(heads).map_err(value_err)?))
}

/// Trained parser holding averaged weights.
#[pyclass(name = "Model", module = "parperc_py")]
struct PyModel {
    inner: WeightModel,
    trace: Option<trainer::TrainTrace>,
}

#[pymethods]
impl PyModel {
    /// Trains on CoNLL-X text. `mode` is sequential, locked, lockfree or full-delay.
    #[staticmethod]
    #[pyo3(signature = (conll, order=1, mode="sequential", threads=1, epochs=10, hash_bits=22, seed=1, max_steps=1_000_000))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        conll: &str,
        order: u32,
        mode: &str,
        threads: usize,
        epochs: usize,
        hash_bits: u32,
        seed: u64,
        max_steps: usize,
    ) -> PyResult<Self> {
        let fc = feature_config(hash_bits, order)?;
        let (corpus, _) = corpus::load_training_corpus(conll).map_err(value_err)?;
        let (model, trace) = py
            .detach(|| {
                if mode == "full-delay" {
                    return trainer::train_full_delay_model(&corpus, &fc, threads, max_steps);
                }
                let mode: TrainMode = mode.parse().map_err(trainer::TrainError::Config)?;
                let cfg = TrainConfig {
                    epochs,
                    threads,
                    mode,
                    seed,
                    shuffle: true,
                    stop_when_converged: false,
                };
                trainer::train(&corpus, &fc, &cfg)
            })
            .map_err(value_err)?;
        Ok(PyModel {
            inner: model.averaged_model(),
            trace: Some(trace),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let (cfg, weights) = pmodel::load_model(BufReader::new(file)).map_err(value_err)?;
        Ok(PyModel {
            inner: WeightModel::from_weights(cfg, &weights).map_err(value_err)?,
            trace: None,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        pmodel::save_model(BufWriter::new(file), self.inner.config(), &self.inner.raw_weights()).map_err(value_err)
    }

    #[getter]
    fn hash_bits(&self) -> u32 {
        self.inner.config().hash_bits
    }

    #[getter]
    fn order(&self) -> u32 {
        self.inner.config().order.as_u32()
    }

    /// Training trace as a dict, or None for a loaded model.
    #[getter]
    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.trace.as_ref().map(|t| json_to_py(py, t)).transpose()
    }

    /// Predicted heads for one sentence; entry j-1 is the head of token j.
    fn parse(&self, forms: Vec<String>, tags: Vec<String>) -> PyResult<Vec<usize>> {
        let s = sentence(forms, tags)?;
        Ok(parperc::scoring::parse_sentence(&self.inner, &s).heads().to_vec())
    }

    /// Parses CoNLL-X text (HEAD ignored) and returns CoNLL-X with predicted heads.
    fn parse_conll(&self, py: Python<'_>, conll: &str) -> PyResult<String> {
        let sentences = corpus::parse_sentences(conll).map_err(value_err)?;
        let pairs = py.detach(|| {
            sentences
                .into_iter()
                .map(|s| {
                    let t = parperc::scoring::parse_sentence(&self.inner, &s);
                    (s, t)
                })
                .collect::<Vec<_>>()
        });
        Ok(corpus::write_conll(&pairs))
    }

    /// UAS of this model on gold CoNLL-X text.
    fn evaluate(&self, py: Python<'_>, conll: &str) -> PyResult<f64> {
        let gold = corpus::parse_conll(conll).map_err(value_err)?;
        Ok(py.detach(|| evalbench::evaluate_model(&self.inner, &gold).uas))
    }

    fn __repr__(&self) -> String {
        format!("Model(order={}, hash_bits={})", self.order(), self.hash_bits())
    }
}

/// Reads CoNLL-X into (forms, tags, heads) triples.
#[pyfunction]
fn read_conll(text: &str) -> PyResult<Vec<PyTree>> {
    Ok(corpus::parse_conll(text).map_err(value_err)?.iter().map(to_py_tree).collect())
}

#[pyfunction]
fn write_conll(trees: Vec<PyTree>) -> PyResult<String> {
    let pairs = trees.into_iter().map(from_py_tree).collect::<PyResult<Vec<_>>>()?;
    Ok(corpus::write_conll(&pairs))
}

#[pyfunction]
fn is_projective(heads: Vec<usize>) -> PyResult<bool> {
    Ok(DependencyTree::new(heads).map_err(value_err)?.is_projective())
}

/// First-order Eisner decoding of an (n+1)x(n+1) score matrix, `scores[h][c]`.
#[pyfunction]
fn eisner_decode(scores: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, f64)> {
    let m = matrix(&scores)?;
    let (t, s) = decoder::eisner_decode(&m).map_err(value_err)?;
    Ok((t.heads().to_vec(), s))
}

/// Second-order decoding; `siblings[h][c][s]` with `s == h` meaning no
/// previous sibling.
#[pyfunction]
fn eisner_decode_second_order(scores: Vec<Vec<f64>>, siblings: Vec<Vec<Vec<f64>>>) -> PyResult<(Vec<usize>, f64)> {
    let m = matrix(&scores)?;
    let n = m.len();
    if siblings.len() != n + 1 || siblings.iter().any(|r| r.len() != n + 1 || r.iter().any(|c| c.len() != n + 1)) {
        return Err(PyValueError::new_err("sibling table must be (n+1)^3"));
    }
    let sib = decoder::SiblingScoreTable::from_fn(n, |h, c, s| siblings[h][c][s.unwrap_or(h)]);
    let (t, s) = decoder::eisner_decode_second_order(&m, &sib).map_err(value_err)?;
    Ok((t.heads().to_vec(), s))
}

fn matrix(scores: &[Vec<f64>]) -> PyResult<decoder::EdgeScoreMatrix> {
    let m = scores.len();
    if m < 2 || scores.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("scores must be a square matrix of size n+1 >= 2"));
    }
    Ok(decoder::EdgeScoreMatrix::from_fn(m - 1, |h, c| scores[h][c]))
}

#[pyfunction]
fn uas(pred: Vec<usize>, gold: Vec<usize>) -> PyResult<f64> {
    let p = DependencyTree::new(pred).map_err(value_err)?;
    let g = DependencyTree::new(gold).map_err(value_err)?;
    Ok(evalbench::uas(&p, &g).map_err(value_err)?.uas)
}

/// Synthetic projective treebank as CoNLL-X text.
#[pyfunction]
#[pyo3(signature = (n_sentences, seed=1, min_len=3, max_len=40))]
fn synthetic_treebank(n_sentences: usize, seed: u64, min_len: usize, max_len: usize) -> PyResult<String> {
    if min_len == 0 || min_len > max_len {
        return Err(PyValueError::new_err("need 1 <= min_len <= max_len"));
    }
    let bank = synth::synthetic_treebank(&TreebankSpec {
        n_sentences,
        min_len,
        max_len,
        seed,
    });
    Ok(corpus::write_conll(&bank))
}

/// Generates a separable corpus, runs full-delay and lock-free training and
/// returns both convergence reports.
#[pyfunction]
#[pyo3(signature = (k=4, delta=0.5, sentences=200, seed=1, max_steps=100_000))]
fn convlab_run<'py>(
    py: Python<'py>,
    k: usize,
    delta: f64,
    sentences: usize,
    seed: u64,
    max_steps: usize,
) -> PyResult<Bound<'py, PyAny>> {
    if k == 0 {
        return Err(PyValueError::new_err("k must be positive"));
    }
    let fc = FeatureConfig::new(18, ModelOrder::First).map_err(value_err)?;
    let spec = SeparableSpec {
        n_sentences: sentences,
        target_margin: delta,
        seed,
        ..SeparableSpec::default()
    };
    let record = py.detach(|| -> Result<serde_json::Value, String> {
        let (corpus, sep) = convlab::generate_separable_corpus(&spec, &fc).map_err(|e| e.to_string())?;
        let margin = convlab::compute_margin(&corpus, &sep, &fc).map_err(|e| e.to_string())?;
        let radius = convlab::compute_radius(&corpus, &fc).map_err(|e| e.to_string())?;
        let full = trainer::train_full_delay(&corpus, &fc, k, max_steps).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs: 1000,
            threads: k,
            mode: TrainMode::LockFree,
            seed,
            shuffle: true,
            stop_when_converged: true,
        };
        let (_, lf) = trainer::train(&corpus, &fc, &cfg).map_err(|e| e.to_string())?;
        Ok(serde_json::json!({
            "full_delay": convlab::verify_bounds(&full, margin, radius, k),
            "lockfree": convlab::verify_bounds(&lf, margin, radius, k),
        }))
    });
    json_to_py(py, &record.map_err(PyValueError::new_err)?)
}

#[pymodule]
fn parperc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(read_conll, m)?)?;
    m.add_function(wrap_pyfunction!(write_conll, m)?)?;
    m.add_function(wrap_pyfunction!(is_projective, m)?)?;
    m.add_function(wrap_pyfunction!(eisner_decode, m)?)?;
    m.add_function(wrap_pyfunction!(eisner_decode_second_order, m)?)?;
    m.add_function(wrap_pyfunction!(uas, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_treebank, m)?)?;
    m.add_function(wrap_pyfunction!(convlab_run, m)?)?;
    Ok(())
}
