//! Python bindings for the knowledge base, instruction rendering and
//! evaluation metrics.
//!
//! Structured values cross the boundary as plain dicts and lists, converted
//! through the stdlib `json` module.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use vcass_core::eval::{self, ChoiceRecord, Condition, MockEmbedder, Polarity, RatingRecord};
use vcass_core::instruct::{render_instruction as render, Transcript};
use vcass_core::kb::{KnowledgeBase, VocalStyle};
use vcass_core::media;
use vcass_core::Error;

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn load_kb(path: Option<PathBuf>) -> PyResult<KnowledgeBase> {
    match path {
        Some(p) => KnowledgeBase::load(&p).map_err(py_err),
        None => Ok(KnowledgeBase::builtin()),
    }
}

/// Ranked rule matches for a free-text cue.
#[pyfunction]
#[pyo3(signature = (cue, kb_path=None))]
fn kb_query<'py>(py: Python<'py>, cue: &str, kb_path: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &load_kb(kb_path)?.query(cue))
}

/// Parse and validate a knowledge-base file; returns the rule count.
#[pyfunction]
fn kb_lint(path: PathBuf) -> PyResult<usize> {
    Ok(KnowledgeBase::load(&path).map_err(py_err)?.rules.len())
}

#[pyfunction]
#[pyo3(signature = (style, summary, transcript, language_tag="en"))]
fn render_instruction(style: &Bound<'_, PyAny>, summary: &str, transcript: &str, language_tag: &str) -> PyResult<String> {
    let style: VocalStyle = from_py(style)?;
    let transcript = Transcript::new(transcript, language_tag).map_err(py_err)?;
    Ok(render(&style, summary, &transcript))
}

#[pyfunction]
fn uniform_indices(frame_count: u32, k: u32) -> Vec<u32> {
    media::uniform_indices(frame_count, k)
}

#[pyfunction]
fn tendency_table<'py>(py: Python<'py>, records: &Bound<'py, PyAny>, condition: &str) -> PyResult<Bound<'py, PyAny>> {
    let records: Vec<RatingRecord> = from_py(records)?;
    let condition: Condition = from_py(&condition.into_pyobject(py)?.into_any())?;
    to_py(py, &eval::tendency_table(&records, condition).map_err(py_err)?)
}

#[pyfunction]
fn preference_rate<'py>(py: Python<'py>, choices: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let choices: Vec<ChoiceRecord> = from_py(choices)?;
    to_py(py, &eval::preference_rate(&choices).map_err(py_err)?)
}

#[pyfunction]
fn percent_string(num: u64, den: u64) -> PyResult<String> {
    if den == 0 {
        return Err(PyValueError::new_err("denominator must be positive"));
    }
    Ok(eval::percent_string(num, den))
}

/// `"positive"`, `"negative"`, or `None` inside the neutral band.
#[pyfunction]
#[pyo3(signature = (raw, neutral_band=0.0))]
fn categorize_pleasure(raw: f64, neutral_band: f64) -> PyResult<Option<&'static str>> {
    Ok(eval::categorize_pleasure(raw, neutral_band).map_err(py_err)?.map(|p| match p {
        Polarity::Positive => "positive",
        Polarity::Negative => "negative",
    }))
}

/// Deterministic offline embedding used by the mock backend.
#[pyfunction]
fn mock_embedding(text: &str) -> Vec<f64> {
    MockEmbedder::vector(text)
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(eval::cosine(&a, &b))
}

#[pymodule]
fn vcass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kb_query, m)?)?;
    m.add_function(wrap_pyfunction!(kb_lint, m)?)?;
    m.add_function(wrap_pyfunction!(render_instruction, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_indices, m)?)?;
    m.add_function(wrap_pyfunction!(tendency_table, m)?)?;
    m.add_function(wrap_pyfunction!(preference_rate, m)?)?;
    m.add_function(wrap_pyfunction!(percent_string, m)?)?;
    m.add_function(wrap_pyfunction!(categorize_pleasure, m)?)?;
    m.add_function(wrap_pyfunction!(mock_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    Ok(())
}
