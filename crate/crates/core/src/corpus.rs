//! Lexicographic records and their on-disk forms.
//!
//! Three formats are handled here:
//!
//! * shared-task TSV files, whose headers are mapped through a [`ColumnMap`];
//! * flat lexicon exports (JSON-lines with `word`, `sense_id`, `definition`, `usage`);
//! * the canonical split TSV written by [`write_split`], which is also what every
//!   other subcommand reads back.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Header of the canonical split TSV.
pub const CANONICAL_HEADER: [&str; 8] = [
    "language",
    "word",
    "sense_id",
    "definition",
    "usage",
    "period",
    "novel",
    "source",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid language code {0:?}: expected a non-empty lowercase ASCII code")]
    InvalidLanguage(String),
    #[error("{path}: missing column for `{field}` (expected header {header:?})")]
    MissingColumn {
        path: String,
        field: &'static str,
        header: String,
    },
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: String, line: usize, reason: String },
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine { path: String, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Lowercase ASCII language code such as `fi`, `ru` or `de`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Language(String);

impl Language {
    pub fn new(code: impl Into<String>) -> Result<Self, CorpusError> {
        let code = code.into();
        if code.is_empty()
            || !code
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
        {
            return Err(CorpusError::InvalidLanguage(code));
        }
        Ok(Language(code))
    }

    pub fn finnish() -> Self {
        Language("fi".to_owned())
    }

    pub fn russian() -> Self {
        Language("ru".to_owned())
    }

    pub fn german() -> Self {
        Language("de".to_owned())
    }

    pub fn code(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::new(s)
    }
}

impl TryFrom<String> for Language {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Language::new(value)
    }
}

impl From<Language> for String {
    fn from(value: Language) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Old,
    New,
    #[default]
    Unspecified,
}

impl Period {
    pub fn as_str(self) -> &'static str {
        match self {
            Period::Old => "old",
            Period::New => "new",
            Period::Unspecified => "unspecified",
        }
    }

    fn parse_cell(cell: &str) -> Option<Period> {
        match cell.trim().to_lowercase().as_str() {
            "old" | "1" => Some(Period::Old),
            "new" | "2" => Some(Period::New),
            "" | "unspecified" => Some(Period::Unspecified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Axolotl,
    Dbnary,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Axolotl => "axolotl",
            Source::Dbnary => "dbnary",
        }
    }
}

/// One (language, word, sense, definition, usage, period) observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexRecord {
    pub language: Language,
    pub word: String,
    pub sense_id: String,
    pub definition: Option<String>,
    pub usage: String,
    pub period: Period,
    pub is_novel_sense: bool,
    pub source: Source,
}

impl LexRecord {
    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.word.trim().is_empty() {
            return Err("empty word".into());
        }
        if self.usage.trim().is_empty() {
            return Err("empty usage".into());
        }
        if self.source == Source::Dbnary && self.period != Period::Unspecified {
            return Err("lexicon records cannot carry a period".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    TrainA,
    TrainAd,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::TrainA => "train_a",
            SplitName::TrainAd => "train_ad",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train_a" => Ok(SplitName::TrainA),
            "train_ad" => Ok(SplitName::TrainAd),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split name {other:?}")),
        }
    }
}

/// Ordered records of one language. Order is exactly the order read from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub language: Language,
    pub records: Vec<LexRecord>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, language: Language) -> Self {
        DatasetSplit {
            name,
            language,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Maps logical fields onto the header names of a shared-task TSV file.
///
/// `word`, `sense_id` and `usage` must resolve to a header; the optional
/// fields fall back to `definition = None`, `period = unspecified` and
/// `is_novel_sense = false` when their column is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub word: String,
    pub sense_id: String,
    pub usage: String,
    pub definition: Option<String>,
    pub period: Option<String>,
    pub novel_flag: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            word: "word".into(),
            sense_id: "sense_id".into(),
            usage: "example".into(),
            definition: Some("gloss".into()),
            period: Some("period".into()),
            novel_flag: Some("novel".into()),
        }
    }
}

/// Parser options shared by the readers.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Skip malformed rows (with a warning) instead of failing.
    pub lenient: bool,
}

fn parse_bool_cell(cell: &str) -> Option<bool> {
    match cell.trim().to_lowercase().as_str() {
        "" | "0" | "false" | "no" | "f" | "n" => Some(false),
        "1" | "true" | "yes" | "t" | "y" => Some(true),
        _ => None,
    }
}

fn non_empty(cell: &str) -> Option<String> {
    if cell.is_empty() {
        None
    } else {
        Some(cell.to_owned())
    }
}

fn strip_eol(line: &mut String) {
    if line.ends_with('\n') {
        line.pop();
        if line.ends_with('\r') {
            line.pop();
        }
    }
}

type NumberedRows = Vec<(usize, Vec<String>)>;

/// Reads a header + rows TSV, yielding `(line_number, cells)` for every data row.
fn read_tsv(path: &Path) -> Result<(Vec<String>, NumberedRows), CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    let n = reader.read_line(&mut header).map_err(|e| CorpusError::io(path, e))?;
    if n == 0 {
        return Err(CorpusError::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: "missing header row".into(),
        });
    }
    strip_eol(&mut header);
    let header = header
        .trim_start_matches('\u{feff}')
        .split('\t')
        .map(|h| h.trim().to_owned())
        .collect();

    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        rows.push((idx + 2, line.split('\t').map(str::to_owned).collect()));
    }
    Ok((header, rows))
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRow {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Handles a row-level error according to the strictness flag.
fn row_error(opts: ParseOptions, err: CorpusError) -> Result<(), CorpusError> {
    if opts.lenient {
        log::warn!("skipping row: {err}");
        Ok(())
    } else {
        Err(err)
    }
}

/// Parses a shared-task TSV file.
pub fn parse_axolotl_tsv(
    path: &Path,
    language: Language,
    columns: &ColumnMap,
    name: SplitName,
    opts: ParseOptions,
) -> Result<DatasetSplit, CorpusError> {
    let (header, rows) = read_tsv(path)?;
    let position = |name: &str| header.iter().position(|h| h == name);
    let required = |field: &'static str, name: &str| {
        position(name).ok_or_else(|| CorpusError::MissingColumn {
            path: path.display().to_string(),
            field,
            header: name.to_owned(),
        })
    };
    let word_col = required("word", &columns.word)?;
    let sense_col = required("sense_id", &columns.sense_id)?;
    let usage_col = required("usage", &columns.usage)?;
    let def_col = columns.definition.as_deref().and_then(position);
    let period_col = columns.period.as_deref().and_then(position);
    let novel_col = columns.novel_flag.as_deref().and_then(position);

    let mut split = DatasetSplit::new(name, language.clone());
    for (line, cells) in rows {
        if cells.len() != header.len() {
            row_error(
                opts,
                malformed(
                    path,
                    line,
                    format!("expected {} fields, found {}", header.len(), cells.len()),
                ),
            )?;
            continue;
        }
        let period = match period_col {
            Some(c) => match Period::parse_cell(&cells[c]) {
                Some(p) => p,
                None => {
                    row_error(opts, malformed(path, line, format!("unknown period {:?}", cells[c])))?;
                    continue;
                }
            },
            None => Period::Unspecified,
        };
        let is_novel_sense = match novel_col {
            Some(c) => match parse_bool_cell(&cells[c]) {
                Some(b) => b,
                None => {
                    row_error(
                        opts,
                        malformed(path, line, format!("unknown novel flag {:?}", cells[c])),
                    )?;
                    continue;
                }
            },
            None => false,
        };
        let record = LexRecord {
            language: language.clone(),
            word: cells[word_col].clone(),
            sense_id: cells[sense_col].clone(),
            definition: def_col.and_then(|c| non_empty(&cells[c])),
            usage: cells[usage_col].clone(),
            period,
            is_novel_sense,
            source: Source::Axolotl,
        };
        if let Err(reason) = record.validate() {
            row_error(opts, malformed(path, line, reason))?;
            continue;
        }
        split.records.push(record);
    }
    Ok(split)
}

#[derive(Debug, Deserialize)]
struct FlatLexiconLine {
    word: String,
    sense_id: String,
    #[serde(default)]
    definition: Option<String>,
    usage: String,
}

/// Parses a flat lexicon export (JSON-lines). Duplicates are preserved.
pub fn parse_flat_lexicon(
    path: &Path,
    language: Language,
    name: SplitName,
    opts: ParseOptions,
) -> Result<DatasetSplit, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut split = DatasetSplit::new(name, language.clone());
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CorpusError::MalformedLine {
            path: path.display().to_string(),
            line: idx + 1,
            reason,
        };
        let parsed: FlatLexiconLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                row_error(opts, bad(e.to_string()))?;
                continue;
            }
        };
        let record = LexRecord {
            language: language.clone(),
            word: parsed.word,
            sense_id: parsed.sense_id,
            definition: parsed.definition.filter(|d| !d.is_empty()),
            usage: parsed.usage,
            period: Period::Unspecified,
            is_novel_sense: false,
            source: Source::Dbnary,
        };
        if let Err(reason) = record.validate() {
            row_error(opts, bad(reason))?;
            continue;
        }
        split.records.push(record);
    }
    Ok(split)
}

/// Replaces tabs and line breaks so a field fits in one TSV cell.
/// Returns `None` when the text was already clean.
pub fn sanitize_field(text: &str) -> Option<String> {
    if !text.contains(['\t', '\n', '\r']) {
        return None;
    }
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' if chars.peek() == Some(&'\n') => {}
            '\t' | '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    Some(out)
}

fn clean_cell<'a>(text: &'a str, field: &str, warnings: &mut Vec<String>) -> std::borrow::Cow<'a, str> {
    match sanitize_field(text) {
        Some(clean) => {
            let msg = format!("replaced tab/newline in `{field}` field: {:?}", truncate(text, 40));
            log::warn!("{msg}");
            warnings.push(msg);
            clean.into()
        }
        None => text.into(),
    }
}

fn truncate(text: &str, max: usize) -> String {
    text.chars().take(max).collect()
}

/// Writes a split as canonical TSV. Returns the warnings emitted while
/// sanitizing fields.
pub fn write_split(split: &DatasetSplit, path: &Path) -> Result<Vec<String>, CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut warnings = Vec::new();
    let mut body = CANONICAL_HEADER.join("\t");
    body.push('\n');
    out.write_all(body.as_bytes()).map_err(|e| CorpusError::io(path, e))?;
    for r in &split.records {
        let row = [
            clean_cell(r.language.code(), "language", &mut warnings),
            clean_cell(&r.word, "word", &mut warnings),
            clean_cell(&r.sense_id, "sense_id", &mut warnings),
            clean_cell(r.definition.as_deref().unwrap_or(""), "definition", &mut warnings),
            clean_cell(&r.usage, "usage", &mut warnings),
            r.period.as_str().into(),
            if r.is_novel_sense { "true" } else { "false" }.into(),
            r.source.as_str().into(),
        ]
        .join("\t");
        writeln!(out, "{row}").map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))?;
    Ok(warnings)
}

/// Reads a canonical split TSV written by [`write_split`].
pub fn read_split(path: &Path, name: SplitName, opts: ParseOptions) -> Result<DatasetSplit, CorpusError> {
    let (header, rows) = read_tsv(path)?;
    for (i, expected) in CANONICAL_HEADER.iter().enumerate() {
        if header.get(i).map(String::as_str) != Some(*expected) {
            return Err(CorpusError::MissingColumn {
                path: path.display().to_string(),
                field: expected,
                header: expected.to_string(),
            });
        }
    }
    let mut language: Option<Language> = None;
    let mut records = Vec::with_capacity(rows.len());
    for (line, cells) in rows {
        if cells.len() != CANONICAL_HEADER.len() {
            row_error(
                opts,
                malformed(
                    path,
                    line,
                    format!("expected {} fields, found {}", CANONICAL_HEADER.len(), cells.len()),
                ),
            )?;
            continue;
        }
        let parsed = (|| {
            let lang = Language::new(cells[0].clone()).map_err(|e| e.to_string())?;
            let period = Period::parse_cell(&cells[5]).ok_or("unknown period")?;
            let novel = parse_bool_cell(&cells[6]).ok_or("unknown novel flag")?;
            let source = match cells[7].as_str() {
                "axolotl" => Source::Axolotl,
                "dbnary" => Source::Dbnary,
                _ => return Err("unknown source".to_string()),
            };
            let record = LexRecord {
                language: lang,
                word: cells[1].clone(),
                sense_id: cells[2].clone(),
                definition: non_empty(&cells[3]),
                usage: cells[4].clone(),
                period,
                is_novel_sense: novel,
                source,
            };
            record.validate()?;
            Ok::<_, String>(record)
        })();
        match parsed {
            Ok(record) => {
                match &language {
                    None => language = Some(record.language.clone()),
                    Some(l) if *l != record.language => {
                        row_error(
                            opts,
                            malformed(path, line, format!("language {} in a {l} split", record.language)),
                        )?;
                        continue;
                    }
                    Some(_) => {}
                }
                records.push(record);
            }
            Err(reason) => row_error(opts, malformed(path, line, reason))?,
        }
    }
    // Header-only files carry no language; callers that care check `records`.
    let language = language.unwrap_or_else(|| Language("und".to_owned()));
    Ok(DatasetSplit {
        name,
        language,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitStats {
    pub records: usize,
    pub words: usize,
    pub senses: usize,
    pub with_definition: usize,
}

pub fn split_stats(split: &DatasetSplit) -> SplitStats {
    let words: HashSet<&str> = split.records.iter().map(|r| r.word.as_str()).collect();
    let senses: HashSet<(&str, &str)> = split
        .records
        .iter()
        .map(|r| (r.word.as_str(), r.sense_id.as_str()))
        .collect();
    SplitStats {
        records: split.records.len(),
        words: words.len(),
        senses: senses.len(),
        with_definition: split.records.iter().filter(|r| r.definition.is_some()).count(),
    }
}

/// Groups records by `(word, sense_id)`, preserving first-appearance order.
pub fn group_by_sense(records: &[LexRecord]) -> Vec<((String, String), Vec<&LexRecord>)> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut groups: Vec<((String, String), Vec<&LexRecord>)> = Vec::new();
    for r in records {
        let key = (r.word.as_str(), r.sense_id.as_str());
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push(((r.word.clone(), r.sense_id.clone()), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn cell_columns() -> ColumnMap {
        ColumnMap::default()
    }

    #[test]
    fn parses_shared_task_instance() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "train.tsv",
            "word\tsense_id\tperiod\texample\tgloss\n\
             cell\tcell_3\tnew\tIn multicellular organisms, groups of cells form tissues...\tA unit of a living organism\n",
        );
        let split = parse_axolotl_tsv(
            &path,
            Language::new("en").unwrap(),
            &cell_columns(),
            SplitName::TrainA,
            ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(split.records.len(), 1);
        let r = &split.records[0];
        assert_eq!(r.word, "cell");
        assert_eq!(r.sense_id, "cell_3");
        assert_eq!(r.period, Period::New);
        assert_eq!(r.definition.as_deref(), Some("A unit of a living organism"));
        assert!(!r.is_novel_sense);
        assert_eq!(
            split_stats(&split),
            SplitStats {
                records: 1,
                words: 1,
                senses: 1,
                with_definition: 1
            }
        );
    }

    #[test]
    fn header_only_file_is_empty_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "e.tsv", "word\tsense_id\texample\n");
        let split = parse_axolotl_tsv(
            &path,
            Language::finnish(),
            &cell_columns(),
            SplitName::Dev,
            ParseOptions::default(),
        )
        .unwrap();
        assert!(split.is_empty());
    }

    #[test]
    fn missing_mandatory_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "m.tsv", "word\tgloss\nx\ty\n");
        let err = parse_axolotl_tsv(
            &path,
            Language::finnish(),
            &cell_columns(),
            SplitName::Dev,
            ParseOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn { field: "sense_id", .. }));
    }

    #[test]
    fn malformed_row_strict_and_lenient() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "bad.tsv",
            "word\tsense_id\texample\na\ta_1\tusage one\nb\tb_1\n c\tc_1\tusage three\n",
        );
        let err = parse_axolotl_tsv(
            &path,
            Language::finnish(),
            &cell_columns(),
            SplitName::Dev,
            ParseOptions { lenient: false },
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { line: 3, .. }), "{err}");

        let split = parse_axolotl_tsv(
            &path,
            Language::finnish(),
            &cell_columns(),
            SplitName::Dev,
            ParseOptions { lenient: true },
        )
        .unwrap();
        assert_eq!(split.records.len(), 2);
    }

    #[test]
    fn empty_definition_cell_is_absent() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(
            &dir,
            "t.tsv",
            "word\tsense_id\texample\tgloss\tnovel\nkuu\tkuu_2\tKuu paistaa.\t\ttrue\n",
        );
        let split = parse_axolotl_tsv(
            &path,
            Language::finnish(),
            &cell_columns(),
            SplitName::Test,
            ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(split.records[0].definition, None);
        assert!(split.records[0].is_novel_sense);
    }

    #[test]
    fn flat_lexicon_line() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"word":"Tisch","sense_id":"Tisch_1","definition":"Möbelstück...","usage":"Der Tisch steht..."}"#;
        let path = write_tmp(&dir, "lex.jsonl", &format!("{line}\n{line}\n"));
        let split = parse_flat_lexicon(&path, Language::german(), SplitName::TrainAd, ParseOptions::default()).unwrap();
        assert_eq!(split.records.len(), 2);
        assert_eq!(split.records[0], split.records[1]);
        let r = &split.records[0];
        assert_eq!(r.source, Source::Dbnary);
        assert_eq!(r.period, Period::Unspecified);
        assert_eq!(r.definition.as_deref(), Some("Möbelstück..."));
    }

    #[test]
    fn flat_lexicon_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let good = r#"{"word":"a","sense_id":"a_1","definition":"d","usage":"u"}"#;
        let path = write_tmp(&dir, "lex.jsonl", &format!("{good}\n{{not json\n"));
        let err =
            parse_flat_lexicon(&path, Language::german(), SplitName::TrainAd, ParseOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn embedded_tab_is_replaced_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let mut split = DatasetSplit::new(SplitName::Test, Language::russian());
        split.records.push(LexRecord {
            language: Language::russian(),
            word: "кот".into(),
            sense_id: "кот_1".into(),
            definition: None,
            usage: "a\tb".into(),
            period: Period::Old,
            is_novel_sense: false,
            source: Source::Axolotl,
        });
        let path = dir.path().join("out.tsv");
        let warnings = write_split(&split, &path).unwrap();
        assert_eq!(warnings.len(), 1);
        let bytes = std::fs::read_to_string(&path).unwrap();
        let row = bytes.lines().nth(1).unwrap();
        assert_eq!(row, "ru\tкот\tкот_1\t\ta b\told\tfalse\taxolotl");
    }

    #[test]
    fn empty_split_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        write_split(&DatasetSplit::new(SplitName::Dev, Language::finnish()), &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "language\tword\tsense_id\tdefinition\tusage\tperiod\tnovel\tsource\n"
        );
    }

    #[test]
    fn language_validation() {
        assert!(Language::new("").is_err());
        assert!(Language::new("FI").is_err());
        assert!(Language::new("fi").is_ok());
    }
}
