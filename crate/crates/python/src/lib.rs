//! Python bindings: `Engine`, `MockLM` and `tokenize`.
//!
//! Results cross the boundary as plain dicts and lists so callers need no
//! wrapper types beyond the two classes.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use schemamem_core as core;
use schemamem_core::{ConceptId, EvolutionConfig, PropagationMode, RecallConfig, TurnRecord};

create_exception!(
    schemamem,
    SchemaMemError,
    PyException,
    "Engine state or data error."
);

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        core::Error::InvalidArgument(_) | core::Error::Parse { .. } | core::Error::EmptyText => {
            PyValueError::new_err(e.to_string())
        }
        _ => SchemaMemError::new_err(e.to_string()),
    }
}

/// Deterministic offline language model.
#[pyclass(name = "MockLM", module = "schemamem", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMockLm {
    inner: core::MockLm,
}

#[pymethods]
impl PyMockLm {
    /// Equal probability for every token.
    #[staticmethod]
    fn uniform() -> Self {
        PyMockLm {
            inner: core::MockLm::Uniform,
        }
    }

    /// Scripted model from table text (`mocklm-table 1` format).
    #[staticmethod]
    fn from_table(text: &str) -> PyResult<Self> {
        core::MockLm::from_table_str(text)
            .map(|inner| PyMockLm { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_table_file(path: &str) -> PyResult<Self> {
        core::MockLm::from_table_file(path)
            .map(|inner| PyMockLm { inner })
            .map_err(to_py)
    }

    /// Unigram model over a corpus string.
    #[staticmethod]
    fn unigram(corpus: &str) -> Self {
        PyMockLm {
            inner: core::MockLm::Unigram(core::UnigramLm::from_corpus(corpus)),
        }
    }

    fn __repr__(&self) -> &'static str {
        match self.inner {
            core::MockLm::Table(_) => "MockLM(table)",
            core::MockLm::Unigram(_) => "MockLM(unigram)",
            core::MockLm::Uniform => "MockLM(uniform)",
        }
    }
}

#[pyclass(name = "Engine", module = "schemamem")]
pub struct PyEngine {
    inner: core::Engine,
}

#[pymethods]
impl PyEngine {
    #[new]
    fn new() -> Self {
        PyEngine {
            inner: core::Engine::new(),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core::Engine::load_snapshot(path)
            .map(|inner| PyEngine { inner })
            .map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_snapshot(path).map_err(to_py)
    }

    #[staticmethod]
    fn from_snapshot(text: &str) -> PyResult<Self> {
        core::Engine::from_snapshot_str(text)
            .map(|inner| PyEngine { inner })
            .map_err(to_py)
    }

    fn snapshot(&self) -> String {
        self.inner.to_snapshot_string()
    }

    /// Runs one turn through schema evolution and returns its report.
    #[pyo3(signature = (
        session_id, speaker, text, lm, *, timestamp=None, perplexity_threshold=20.0,
        assim_beam=5, max_novel_keys=5, min_key_len=1, max_key_len=4, stopwords=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn ingest<'py>(
        &mut self,
        py: Python<'py>,
        session_id: &str,
        speaker: &str,
        text: &str,
        lm: &PyMockLm,
        timestamp: Option<String>,
        perplexity_threshold: f64,
        assim_beam: usize,
        max_novel_keys: usize,
        min_key_len: usize,
        max_key_len: usize,
        stopwords: Option<Vec<String>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut cfg = EvolutionConfig {
            perplexity_threshold,
            assim_beam,
            max_novel_keys,
            min_key_len,
            max_key_len,
            ..Default::default()
        };
        if let Some(s) = stopwords {
            cfg.stopwords = s;
        }
        let mut rec = TurnRecord::new(session_id, speaker, text);
        rec.timestamp = timestamp;
        let r = self
            .inner
            .process_turn(rec, &lm.inner, &cfg)
            .map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("turn_id", r.turn_id)?;
        d.set_item("assimilated", self.keys_of(&r.assimilated))?;
        d.set_item("accommodated", self.keys_of(&r.accommodated))?;
        d.set_item("triggered_accommodation", r.triggered_accommodation)?;
        d.set_item("unknown_selected", r.unknown_selected)?;
        d.set_item("perplexity", r.perplexity)?;
        d.set_item("rejected_candidates", r.rejected_candidates)?;
        Ok(d)
    }

    /// Stores a turn linked to the given concept texts, bypassing evolution.
    fn ingest_annotated(
        &mut self,
        session_id: &str,
        speaker: &str,
        text: &str,
        concepts: Vec<String>,
    ) -> PyResult<(u32, Vec<u32>)> {
        let refs: Vec<&str> = concepts.iter().map(String::as_str).collect();
        let (turn, ids) = self
            .inner
            .ingest_annotated(TurnRecord::new(session_id, speaker, text), &refs)
            .map_err(to_py)?;
        Ok((turn, ids.into_iter().map(|c| c.0).collect()))
    }

    #[pyo3(signature = (
        query, lm, *, beam=5, hops=1, temperature=1.0, mode="topk", m=3, samples=3,
        seed=None, k_max=35, char_budget=4000
    ))]
    #[allow(clippy::too_many_arguments)]
    fn recall<'py>(
        &self,
        py: Python<'py>,
        query: &str,
        lm: &PyMockLm,
        beam: usize,
        hops: usize,
        temperature: f64,
        mode: &str,
        m: usize,
        samples: usize,
        seed: Option<u64>,
        k_max: usize,
        char_budget: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mode = match (mode, seed) {
            ("topk", _) => PropagationMode::TopK { m },
            ("sample", Some(seed)) => PropagationMode::Sample {
                count: samples,
                seed,
            },
            ("sample", None) => return Err(PyValueError::new_err("sample mode needs a seed")),
            (other, _) => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let cfg = RecallConfig {
            beam,
            hops,
            temperature,
            mode,
            k_max,
            char_budget,
            ..Default::default()
        };
        let r = self.inner.recall(query, &lm.inner, &cfg).map_err(to_py)?;
        let seeds = PyList::empty(py);
        for s in &r.seeds {
            let d = PyDict::new(py);
            d.set_item("concept", s.concept.0)?;
            d.set_item("key", &s.key)?;
            d.set_item("logprob", s.logprob)?;
            seeds.append(d)?;
        }
        let context = PyList::empty(py);
        for c in &r.context_concepts {
            let d = PyDict::new(py);
            d.set_item("concept", c.concept.0)?;
            d.set_item("key", &c.key)?;
            d.set_item("hop", c.hop)?;
            d.set_item("prob", c.prob)?;
            context.append(d)?;
        }
        let out = PyDict::new(py);
        out.set_item("seeds", seeds)?;
        out.set_item("context_concepts", context)?;
        out.set_item(
            "evidence",
            r.evidence.iter().map(|t| t.turn_id).collect::<Vec<_>>(),
        )?;
        out.set_item("context_text", &r.context_text)?;
        out.set_item("truncated", r.truncated)?;
        out.set_item(
            "answer",
            core::synthesis_hook(&r.context_text, query, &lm.inner),
        )?;
        out.set_item("record", r.to_record())?;
        Ok(out)
    }

    #[pyo3(signature = (top=10))]
    fn stats<'py>(&self, py: Python<'py>, top: usize) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.stats(top);
        let d = PyDict::new(py);
        d.set_item("turns", s.turns)?;
        d.set_item("concepts", s.concepts)?;
        d.set_item("edges", s.edges)?;
        d.set_item("vocabulary", s.vocabulary)?;
        let top: Vec<(u32, String, f64)> = s
            .top_idf
            .into_iter()
            .map(|e| (e.concept.0, e.key, e.idf))
            .collect();
        d.set_item("top_idf", top)?;
        Ok(d)
    }

    #[pyo3(signature = (format="dot"))]
    fn export_graph(&self, format: &str) -> PyResult<String> {
        match format {
            "dot" => Ok(self.inner.export_dot()),
            "json" => Ok(self.inner.export_json()),
            other => Err(PyValueError::new_err(format!("unknown format {other:?}"))),
        }
    }

    /// `(concept id, key text)` for every concept.
    fn keys(&self) -> Vec<(u32, String)> {
        self.inner
            .schema()
            .enumerate_keys()
            .map(|(id, _)| (id.0, self.inner.concept_text(id).unwrap_or_default()))
            .collect()
    }

    fn contains(&self, key: &str) -> bool {
        self.inner.concept_id(key).is_some()
    }

    fn concept_id(&self, key: &str) -> Option<u32> {
        self.inner.concept_id(key).map(|c| c.0)
    }

    fn __len__(&self) -> usize {
        self.inner.store().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Engine(turns={}, concepts={})",
            self.inner.store().len(),
            self.inner.schema().len()
        )
    }
}

impl PyEngine {
    fn keys_of(&self, ids: &[ConceptId]) -> Vec<String> {
        ids.iter()
            .map(|&c| self.inner.concept_text(c).unwrap_or_default())
            .collect()
    }
}

/// Lower-cased alphanumeric words, the engine's tokenization.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    core::normalize(text)
}

#[pymodule]
fn schemamem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEngine>()?;
    m.add_class::<PyMockLm>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add("SchemaMemError", m.py().get_type::<SchemaMemError>())?;
    Ok(())
}
