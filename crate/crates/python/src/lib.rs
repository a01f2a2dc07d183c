//! Python module `dactag`: tag collapsing, length features, model presets,
//! checkpoints and the gradient check suite.

use std::path::PathBuf;

use dactag_core::cli::{cmd_tag, RunConfig};
use dactag_core::corpus::{self, ConversationInput, SentenceInput};
use dactag_core::gradsuite;
use dactag_core::models::{self, ModelConfig, Preset};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(dactag, DactagError, PyException);

fn err(e: dactag_core::Error) -> PyErr {
    match e {
        dactag_core::Error::Config(m) => PyValueError::new_err(m),
        other => DactagError::new_err(other.to_string()),
    }
}

/// Lowercased whitespace tokens.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    corpus::tokenize(text)
}

#[pyfunction]
fn same_speaker(sub_utterance_index: u32) -> f64 {
    corpus::same_speaker(sub_utterance_index)
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

/// Per-case maximum relative error of the finite-difference suite.
#[pyfunction]
#[pyo3(signature = (seed=0, corrupt=None))]
fn gradcheck(seed: u64, corrupt: Option<&str>) -> PyResult<Vec<(String, f64, bool)>> {
    let results = gradsuite::run_suite(seed, corrupt).map_err(err)?;
    Ok(results
        .into_iter()
        .map(|r| {
            let ok = r.passed();
            (r.name, r.max_relative_error, ok)
        })
        .collect())
}

#[pyclass(name = "TagSet", module = "dactag")]
struct PyTagSet {
    inner: corpus::TagSet,
}

#[pymethods]
impl PyTagSet {
    /// The bundled collapse table.
    #[staticmethod]
    #[pyo3(signature = (keep_continuations=false))]
    fn swda(keep_continuations: bool) -> Self {
        PyTagSet {
            inner: corpus::TagSet::swda(keep_continuations),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (text, keep_continuations=false))]
    fn parse(text: &str, keep_continuations: bool) -> PyResult<Self> {
        Ok(PyTagSet {
            inner: corpus::TagSet::parse_mapping(text, keep_continuations).map_err(err)?,
        })
    }

    fn collapse(&self, raw: &str) -> PyResult<String> {
        Ok(self.inner.collapse_name(raw).map_err(err)?.to_string())
    }

    fn encode(&self, tag: &str) -> Option<usize> {
        self.inner.encode(tag)
    }

    fn decode(&self, id: usize) -> Option<String> {
        self.inner.decode(id).map(str::to_string)
    }

    #[getter]
    fn tags(&self) -> Vec<String> {
        self.inner.tags().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "LengthStats", module = "dactag")]
struct PyLengthStats {
    inner: corpus::LengthStats,
}

#[pymethods]
impl PyLengthStats {
    #[new]
    fn new(lengths: Vec<usize>) -> PyResult<Self> {
        Ok(PyLengthStats {
            inner: corpus::LengthStats::from_lengths(&lengths).map_err(err)?,
        })
    }

    #[getter]
    fn range(&self) -> f64 {
        self.inner.range()
    }

    #[getter]
    fn std(&self) -> f64 {
        self.inner.std()
    }

    fn normalize(&self, length: usize) -> f64 {
        self.inner.normalize(length)
    }
}

type PySentence = (Vec<usize>, [f64; 4]);

fn conversation(sentences: Vec<PySentence>, gold: Option<Vec<usize>>) -> ConversationInput {
    ConversationInput {
        id: "python".into(),
        sentences: sentences
            .into_iter()
            .map(|(tokens, features)| SentenceInput { tokens, features })
            .collect(),
        gold,
    }
}

/// One of the ten presets. Sentences are `(token_ids, [utterance_index,
/// sub_utterance_index, same_speaker, normalized_length])` pairs.
#[pyclass(name = "Model", module = "dactag")]
struct PyModel {
    inner: models::Model,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (preset, vocab_size, num_classes, hidden=300, embedding_dim=300, seed=0))]
    fn new(
        preset: &str,
        vocab_size: usize,
        num_classes: usize,
        hidden: usize,
        embedding_dim: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let preset: Preset = preset.parse().map_err(err)?;
        let mut cfg = ModelConfig::preset(preset, vocab_size, num_classes);
        cfg.sentence_hidden = hidden;
        cfg.nontextual_hidden = hidden;
        cfg.context_hidden = hidden;
        cfg.embedding_dim = embedding_dim;
        cfg.seed = seed;
        Ok(PyModel {
            inner: models::Model::build(cfg, None).map_err(err)?,
        })
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    #[getter]
    fn preset(&self) -> Option<&'static str> {
        self.inner.config().preset_name().map(Preset::name)
    }

    /// One class distribution per sentence.
    fn forward(&self, py: Python<'_>, sentences: Vec<PySentence>) -> PyResult<Vec<Vec<f64>>> {
        let conv = conversation(sentences, None);
        let out = py.detach(|| self.inner.forward_conversation(&conv)).map_err(err)?;
        Ok(out.into_iter().map(|t| t.into_data()).collect())
    }

    fn predict(&self, py: Python<'_>, sentences: Vec<PySentence>) -> PyResult<Vec<usize>> {
        let conv = conversation(sentences, None);
        py.detach(|| self.inner.predict_tags(&conv)).map_err(err)
    }

    /// Mean negative log-likelihood of `gold`.
    fn loss(&self, sentences: Vec<PySentence>, gold: Vec<usize>) -> PyResult<f64> {
        self.inner.conversation_loss(&conversation(sentences, Some(gold))).map_err(err)
    }
}

/// Tags a conversation CSV with a saved checkpoint; returns
/// `(caller, "utt.sub", predicted_tag, text)` rows.
#[pyfunction]
fn tag_file(checkpoint: PathBuf, input: PathBuf) -> PyResult<Vec<(String, String, String, String)>> {
    let mut cfg = RunConfig::default();
    cfg.set("checkpoint", checkpoint.display().to_string()).map_err(err)?;
    cfg.set("input", input.display().to_string()).map_err(err)?;
    Ok(cmd_tag(&cfg)
        .map_err(err)?
        .into_iter()
        .map(|l| {
            (
                l.caller,
                format!("{}.{}", l.utterance_index, l.sub_utterance_index),
                l.predicted,
                l.text,
            )
        })
        .collect())
}

#[pymodule]
fn dactag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DactagError", m.py().get_type::<DactagError>())?;
    m.add_class::<PyTagSet>()?;
    m.add_class::<PyLengthStats>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(same_speaker, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(tag_file, m)?)?;
    Ok(())
}
