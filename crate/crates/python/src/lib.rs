//! Python bindings for the scoring, aggregation and prompting primitives.
//!
//! Embeddings cross the boundary as plain lists of floats. Structured results
//! are either small frozen classes or dictionaries mirroring the JSON reports.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use serde_json::Value;

use sensegloss::aggregation::{self, CandidateOrdering, DefinitionCandidate, SenseGroup};
use sensegloss::corpus::{Language, LexRecord, Period, Source};
use sensegloss::embedding::EmbeddingVector;
use sensegloss::formats::Prediction;
use sensegloss::harness::{self, GoldItem, LexicalTokenEmbedder, ScoreOptions};
use sensegloss::metrics::{self, TokenEmbeddings};
use sensegloss::prompting::{self, TrainerConfig};
use sensegloss::text;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let items = items.iter().map(|v| to_py(py, v)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(value_error)?)
}

fn vector(values: Vec<f64>) -> PyResult<EmbeddingVector> {
    EmbeddingVector::new(values).map_err(value_error)
}

fn language(code: &str) -> PyResult<Language> {
    Language::new(code).map_err(value_error)
}

#[pyclass(module = "sensegloss_py", frozen, skip_from_py_object, get_all)]
#[derive(Debug, Clone)]
pub struct BleuBreakdown {
    pub score: f64,
    pub precisions: Vec<Option<f64>>,
    pub brevity_penalty: f64,
    pub effective_orders: usize,
}

#[pymethods]
impl BleuBreakdown {
    fn __repr__(&self) -> String {
        format!(
            "BleuBreakdown(score={}, brevity_penalty={})",
            self.score, self.brevity_penalty
        )
    }
}

#[pyclass(module = "sensegloss_py", frozen, skip_from_py_object, get_all)]
#[derive(Debug, Clone)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[pymethods]
impl BertScore {
    fn __repr__(&self) -> String {
        format!(
            "BertScore(precision={}, recall={}, f1={})",
            self.precision, self.recall, self.f1
        )
    }
}

impl From<metrics::BertScoreResult> for BertScore {
    fn from(r: metrics::BertScoreResult) -> Self {
        BertScore {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        }
    }
}

#[pyclass(module = "sensegloss_py", frozen, skip_from_py_object, get_all)]
#[derive(Debug, Clone)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub note: Option<String>,
}

#[pymethods]
impl TTestResult {
    fn __repr__(&self) -> String {
        format!(
            "TTestResult(t_statistic={}, degrees_of_freedom={}, p_value={})",
            self.t_statistic, self.degrees_of_freedom, self.p_value
        )
    }
}

#[pyclass(module = "sensegloss_py", frozen, skip_from_py_object, get_all)]
#[derive(Debug, Clone)]
pub struct SenseLabel {
    pub word: String,
    pub sense_id: String,
    pub label: String,
    pub rank_used: usize,
    pub fallback: bool,
}

#[pymethods]
impl SenseLabel {
    fn __repr__(&self) -> String {
        format!(
            "SenseLabel(word={:?}, sense_id={:?}, label={:?}, rank_used={}, fallback={})",
            self.word, self.sense_id, self.label, self.rank_used, self.fallback
        )
    }
}

/// A prompt template with a single `<target>` placeholder.
#[pyclass(module = "sensegloss_py", frozen, skip_from_py_object)]
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    inner: prompting::PromptTemplate,
}

#[pymethods]
impl PromptTemplate {
    #[new]
    #[pyo3(signature = (language, template, joiner = " "))]
    fn new(language: &str, template: &str, joiner: &str) -> PyResult<Self> {
        let inner = prompting::PromptTemplate::new(self::language(language)?, template)
            .map_err(value_error)?
            .with_joiner(joiner);
        Ok(PromptTemplate { inner })
    }

    /// The default template for `ru`, `fi` or `de`.
    #[staticmethod]
    fn default_for(language: &str) -> PyResult<Self> {
        let inner = prompting::default_prompt(&self::language(language)?).map_err(value_error)?;
        Ok(PromptTemplate { inner })
    }

    #[getter]
    fn language(&self) -> String {
        self.inner.language.code().to_owned()
    }

    #[getter]
    fn template(&self) -> String {
        self.inner.template.clone()
    }

    #[getter]
    fn joiner(&self) -> String {
        self.inner.joiner.clone()
    }

    /// `usage + joiner + template` with the placeholder replaced by `word`.
    fn build(&self, usage: &str, word: &str) -> PyResult<String> {
        let record = LexRecord {
            language: self.inner.language.clone(),
            word: word.to_owned(),
            sense_id: String::new(),
            definition: None,
            usage: usage.to_owned(),
            period: Period::Unspecified,
            is_novel_sense: false,
            source: Source::Axolotl,
        };
        prompting::build_prompt(&record, &self.inner).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "PromptTemplate(language={:?}, template={:?})",
            self.inner.language.code(),
            self.inner.template
        )
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    text::tokenize(text)
}

#[pyfunction]
fn sentence_bleu(hypothesis: Vec<String>, reference: Vec<String>) -> PyResult<BleuBreakdown> {
    let b = metrics::sentence_bleu(&hypothesis, &reference).map_err(value_error)?;
    Ok(BleuBreakdown {
        score: b.score,
        precisions: b.precisions.to_vec(),
        brevity_penalty: b.brevity_penalty,
        effective_orders: b.effective_orders,
    })
}

fn token_side(vectors: Vec<Vec<f64>>) -> PyResult<TokenEmbeddings> {
    let tokens = (0..vectors.len()).map(|i| i.to_string()).collect();
    let vectors = vectors.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    TokenEmbeddings::new(tokens, vectors).map_err(value_error)
}

/// Greedy BERTScore between two lists of token vectors.
#[pyfunction]
fn bertscore_greedy(candidate: Vec<Vec<f64>>, reference: Vec<Vec<f64>>) -> PyResult<BertScore> {
    let r = metrics::bertscore_greedy(&token_side(candidate)?, &token_side(reference)?).map_err(value_error)?;
    Ok(r.into())
}

#[pyfunction]
fn bertscore_from_similarity(similarity: Vec<Vec<f64>>) -> PyResult<BertScore> {
    Ok(metrics::bertscore_from_similarity(&similarity)
        .map_err(value_error)?
        .into())
}

#[pyfunction]
fn welch_ttest(a: Vec<f64>, b: Vec<f64>) -> PyResult<TTestResult> {
    let r = metrics::welch_ttest(&a, &b).map_err(value_error)?;
    Ok(TTestResult {
        t_statistic: r.t_statistic,
        degrees_of_freedom: r.degrees_of_freedom,
        p_value: r.p_value,
        note: r.note,
    })
}

#[pyfunction]
#[pyo3(signature = (definition, word, stem_min = 4))]
fn detect_circularity(definition: &str, word: &str, stem_min: usize) -> bool {
    metrics::detect_circularity(definition, word, stem_min)
}

#[pyfunction]
fn length_stats<'py>(py: Python<'py>, predictions: Vec<String>, golds: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &metrics::length_stats(&predictions, &golds).map_err(value_error)?)
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    aggregation::cosine(&vector(a)?, &vector(b)?).map_err(value_error)
}

#[pyfunction]
fn mean_embedding(vectors: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let vectors = vectors.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    Ok(aggregation::mean_embedding(&vectors)
        .map_err(value_error)?
        .into_values())
}

type CandidateTuple = (String, Vec<f64>, usize);

fn group(word: String, sense_id: String, usage_count: usize, candidates: Vec<CandidateTuple>) -> PyResult<SenseGroup> {
    let candidates = candidates
        .into_iter()
        .map(|(text, embedding, frequency)| {
            Ok(DefinitionCandidate {
                text,
                embedding: vector(embedding)?,
                frequency,
                similarity_to_prototype: 0.0,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(SenseGroup {
        word,
        sense_id,
        candidates,
        usage_count,
        warnings: Vec::new(),
    })
}

/// Ranks `(text, embedding, frequency)` candidates against their prototype.
/// Returns `(text, similarity)` pairs, best first.
#[pyfunction]
fn rank_candidates(candidates: Vec<CandidateTuple>) -> PyResult<Vec<(String, f64)>> {
    let g = group(String::new(), String::new(), 0, candidates)?;
    let ranked = aggregation::rank_candidates(&g).map_err(value_error)?;
    Ok(ranked
        .candidates
        .into_iter()
        .map(|c| (c.text, c.similarity_to_prototype))
        .collect())
}

/// Labels senses given as `(word, sense_id, usage_count, candidates)`.
/// Senses without candidates get no label.
#[pyfunction]
#[pyo3(signature = (senses, ordering = "prototype_similarity"))]
fn assign_sense_labels(
    senses: Vec<(String, String, usize, Vec<CandidateTuple>)>,
    ordering: &str,
) -> PyResult<Vec<SenseLabel>> {
    let ordering: CandidateOrdering = ordering.parse().map_err(PyValueError::new_err)?;
    let groups = senses
        .into_iter()
        .map(|(w, s, n, c)| group(w, s, n, c))
        .collect::<PyResult<Vec<_>>>()?;
    let (labels, _) = aggregation::assign_all(groups, ordering).map_err(value_error)?;
    Ok(labels
        .into_iter()
        .map(|a| SenseLabel {
            word: a.word,
            sense_id: a.sense_id,
            label: a.label,
            rank_used: a.rank_used,
            fallback: a.fallback,
        })
        .collect())
}

#[pyfunction]
fn default_prompt(language: &str) -> PyResult<String> {
    Ok(prompting::default_prompt(&self::language(language)?)
        .map_err(value_error)?
        .template)
}

#[pyfunction]
#[pyo3(signature = (usage, word, language, template = None, joiner = " "))]
fn build_prompt(usage: &str, word: &str, language: &str, template: Option<&str>, joiner: &str) -> PyResult<String> {
    let t = match template {
        Some(t) => PromptTemplate::new(language, t, joiner)?,
        None => PromptTemplate {
            inner: prompting::default_prompt(&self::language(language)?)
                .map_err(value_error)?
                .with_joiner(joiner),
        },
    };
    t.build(usage, word)
}

#[pyfunction]
fn trainer_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    serialize(py, &TrainerConfig::default())
}

/// Percent share with one- and two-decimal display strings, or `None` for an
/// empty denominator.
#[pyfunction]
fn share(py: Python<'_>, count: usize, total: usize) -> PyResult<Bound<'_, PyAny>> {
    if count > total {
        return Err(PyValueError::new_err(format!("count {count} exceeds total {total}")));
    }
    serialize(py, &harness::Share::new(count, total))
}

type Triple = (String, String, String);

/// Scores `(word, sense_id, definition)` predictions against gold triples
/// with the offline lexical token embedder. Returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (predictions, gold, stem_min = 4))]
fn score_predictions(
    py: Python<'_>,
    predictions: Vec<Triple>,
    gold: Vec<Triple>,
    stem_min: usize,
) -> PyResult<Bound<'_, PyAny>> {
    let predictions: Vec<Prediction> = predictions
        .into_iter()
        .map(|(word, sense_id, definition)| Prediction {
            word,
            sense_id,
            definition,
        })
        .collect();
    let gold: Vec<GoldItem> = gold
        .into_iter()
        .map(|(word, sense_id, definition)| GoldItem {
            word,
            sense_id,
            definition,
        })
        .collect();
    let report = harness::score_predictions(
        &predictions,
        &gold,
        &LexicalTokenEmbedder::default(),
        ScoreOptions { stem_min },
    );
    serialize(py, &report)
}

#[pymodule]
pub fn sensegloss_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BleuBreakdown>()?;
    m.add_class::<BertScore>()?;
    m.add_class::<TTestResult>()?;
    m.add_class::<SenseLabel>()?;
    m.add_class::<PromptTemplate>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(sentence_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(bertscore_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(bertscore_from_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(welch_ttest, m)?)?;
    m.add_function(wrap_pyfunction!(detect_circularity, m)?)?;
    m.add_function(wrap_pyfunction!(length_stats, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(mean_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(rank_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(assign_sense_labels, m)?)?;
    m.add_function(wrap_pyfunction!(default_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(trainer_config, m)?)?;
    m.add_function(wrap_pyfunction!(share, m)?)?;
    m.add_function(wrap_pyfunction!(score_predictions, m)?)?;
    Ok(())
}
