//! Tabular files exchanged between pipeline stages.
//!
//! * generations TSV: `word⇥sense_id⇥usage_index⇥definition` (empty definition = failed generation)
//! * predictions TSV: `word⇥sense_id⇥definition`, the submission format
//! * vectors JSON-lines: `{"text": .., "embedding": [..]}`

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::sanitize_field;
use crate::embedding::EmbeddingVector;

pub const GENERATIONS_HEADER: &str = "word\tsense_id\tusage_index\tdefinition";
pub const PREDICTIONS_HEADER: &str = "word\tsense_id\tdefinition";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn clean(text: &str) -> String {
    sanitize_field(text).unwrap_or_else(|| text.to_owned())
}

/// One generated definition for one usage; `definition = None` marks a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub word: String,
    pub sense_id: String,
    pub usage_index: usize,
    pub definition: Option<String>,
}

/// A `target–sense–definition` triplet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prediction {
    pub word: String,
    pub sense_id: String,
    pub definition: String,
}

impl Prediction {
    pub fn key(&self) -> (&str, &str) {
        (&self.word, &self.sense_id)
    }
}

/// Reads data rows of a TSV with a known header; the header line is optional.
fn read_rows(path: &Path, header: &str, columns: usize) -> Result<Vec<(usize, Vec<String>)>, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let line = if i == 0 {
            line.trim_start_matches('\u{feff}')
        } else {
            line
        };
        if line.is_empty() || (i == 0 && line == header) {
            continue;
        }
        let cells: Vec<String> = line.split('\t').map(str::to_owned).collect();
        if cells.len() != columns {
            return Err(malformed(
                path,
                i + 1,
                format!("expected {columns} fields, found {}", cells.len()),
            ));
        }
        rows.push((i + 1, cells));
    }
    Ok(rows)
}

pub fn write_generations(rows: &[GenerationRow], path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(out, "{GENERATIONS_HEADER}").map_err(io_err(path))?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            clean(&r.word),
            clean(&r.sense_id),
            r.usage_index,
            clean(r.definition.as_deref().unwrap_or(""))
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRow>, FormatError> {
    read_rows(path, GENERATIONS_HEADER, 4)?
        .into_iter()
        .map(|(line, mut cells)| {
            let usage_index = cells[2]
                .parse()
                .map_err(|_| malformed(path, line, format!("bad usage_index {:?}", cells[2])))?;
            let definition = std::mem::take(&mut cells[3]);
            Ok(GenerationRow {
                word: std::mem::take(&mut cells[0]),
                sense_id: std::mem::take(&mut cells[1]),
                usage_index,
                definition: (!definition.trim().is_empty()).then_some(definition),
            })
        })
        .collect()
}

pub fn write_predictions(predictions: &[Prediction], path: &Path) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(out, "{PREDICTIONS_HEADER}").map_err(io_err(path))?;
    for p in predictions {
        writeln!(
            out,
            "{}\t{}\t{}",
            clean(&p.word),
            clean(&p.sense_id),
            clean(&p.definition)
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads predictions; later duplicates of a `(word, sense_id)` key are
/// dropped and reported in the returned warnings.
pub fn read_predictions(path: &Path) -> Result<(Vec<Prediction>, Vec<String>), FormatError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for (line, mut cells) in read_rows(path, PREDICTIONS_HEADER, 3)? {
        let p = Prediction {
            word: std::mem::take(&mut cells[0]),
            sense_id: std::mem::take(&mut cells[1]),
            definition: std::mem::take(&mut cells[2]),
        };
        if !seen.insert((p.word.clone(), p.sense_id.clone())) {
            warnings.push(format!(
                "{}:{line}: duplicate prediction for {}/{} ignored",
                path.display(),
                p.word,
                p.sense_id
            ));
            continue;
        }
        out.push(p);
    }
    Ok((out, warnings))
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorLine {
    text: String,
    embedding: EmbeddingVector,
}

/// Precomputed sentence embeddings keyed by text.
pub fn read_vectors(path: &Path) -> Result<HashMap<String, EmbeddingVector>, FormatError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: VectorLine = serde_json::from_str(&line).map_err(|e| malformed(path, i + 1, e.to_string()))?;
        out.insert(v.text, v.embedding);
    }
    Ok(out)
}

pub fn write_vectors<'a>(
    vectors: impl IntoIterator<Item = (&'a str, &'a EmbeddingVector)>,
    path: &Path,
) -> Result<(), FormatError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for (text, embedding) in vectors {
        let line = serde_json::to_string(&VectorLine {
            text: text.to_owned(),
            embedding: embedding.clone(),
        })
        .expect("vectors serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}
