//! Training-set assembly: contamination removal, sentence selection for long
//! usages, and the shared-task / lexicon recipes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetSplit, Language, LexRecord, SplitName};
use crate::text::{casefold, TargetMatcher};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("recipe `{recipe}` needs the {missing} split")]
    MissingIngredient {
        recipe: &'static str,
        missing: &'static str,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Case-folded words that must not appear in training data.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContaminationIndex {
    blocked_words: BTreeSet<String>,
}

impl ContaminationIndex {
    pub fn contains(&self, word: &str) -> bool {
        self.blocked_words.contains(&casefold(word))
    }

    pub fn len(&self) -> usize {
        self.blocked_words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocked_words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.blocked_words.iter().map(String::as_str)
    }
}

/// Union of the case-folded words of every held-out split, across languages.
pub fn build_contamination_index<'a>(heldout: impl IntoIterator<Item = &'a DatasetSplit>) -> ContaminationIndex {
    let blocked_words = heldout
        .into_iter()
        .flat_map(|s| s.records.iter())
        .map(|r| casefold(r.word.trim()))
        .filter(|w| !w.is_empty())
        .collect();
    ContaminationIndex { blocked_words }
}

/// Words dropped by [`contamination_filter`] with the number of records each lost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub removed: BTreeMap<String, usize>,
}

impl RemovalReport {
    pub fn words(&self) -> usize {
        self.removed.len()
    }

    pub fn records(&self) -> usize {
        self.removed.values().sum()
    }

    pub fn merge(&mut self, other: RemovalReport) {
        for (word, n) in other.removed {
            *self.removed.entry(word).or_default() += n;
        }
    }
}

/// Drops every record whose case-folded word is blocked. Survivors keep their order.
pub fn contamination_filter(split: &DatasetSplit, index: &ContaminationIndex) -> (DatasetSplit, RemovalReport) {
    let mut report = RemovalReport::default();
    let mut records = Vec::with_capacity(split.records.len());
    for r in &split.records {
        let folded = casefold(r.word.trim());
        if index.blocked_words.contains(&folded) {
            *report.removed.entry(folded).or_default() += 1;
        } else {
            records.push(r.clone());
        }
    }
    (
        DatasetSplit {
            name: split.name,
            language: split.language.clone(),
            records,
        },
        report,
    )
}

/// Abbreviations that end in a period but do not end a sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbbreviationGuard {
    entries: Vec<String>,
}

impl AbbreviationGuard {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AbbreviationGuard {
            entries: entries
                .into_iter()
                .map(Into::into)
                .filter(|e: &String| !e.trim().is_empty())
                .collect(),
        }
    }

    /// Built-in list for `fi`, `ru` and `de`; empty for other languages.
    pub fn for_language(language: &Language) -> Self {
        let entries: &[&str] = match language.code() {
            "de" => &[
                "z. B.", "z.B.", "d. h.", "d.h.", "u. a.", "u.a.", "o. ä.", "bzw.", "usw.", "ca.", "vgl.", "evtl.",
                "ggf.", "etc.", "Nr.", "Dr.", "Prof.", "St.", "Str.", "Jh.", "Jhd.", "bspw.", "insb.", "sog.", "S.",
                "u. ä.", "z. T.", "v. a.",
            ],
            "ru" => &[
                "т. е.",
                "т.е.",
                "т. д.",
                "т. п.",
                "т. н.",
                "и т. д.",
                "и т. п.",
                "г.",
                "гг.",
                "им.",
                "см.",
                "др.",
                "ул.",
                "проф.",
                "напр.",
                "в.",
                "вв.",
                "с.",
                "стр.",
            ],
            "fi" => &[
                "esim.", "ks.", "mm.", "n.", "ns.", "jne.", "yms.", "tms.", "ym.", "vrt.", "engl.", "lat.", "s.", "v.",
                "kl.", "ts.", "eKr.", "jKr.",
            ],
            _ => &[],
        };
        AbbreviationGuard::new(entries.iter().copied())
    }

    /// Reads a plain-text list, one abbreviation per line.
    pub fn from_file(path: &Path) -> Result<Self, CurationError> {
        let body = fs::read_to_string(path).map_err(|source| CurationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(AbbreviationGuard::new(body.lines().map(str::trim)))
    }

    /// True if the period ending `before` belongs to a guarded abbreviation,
    /// possibly one that continues into `after`.
    fn protects(&self, before: &str, after: &str) -> bool {
        self.entries.iter().any(|abbr| {
            abbr.char_indices().filter(|&(_, c)| c == '.').any(|(k, _)| {
                let (head, tail) = abbr.split_at(k + 1);
                before.ends_with(head) && at_word_start(before, before.len() - head.len()) && after.starts_with(tail)
            })
        })
    }
}

fn at_word_start(text: &str, idx: usize) -> bool {
    text[..idx]
        .chars()
        .next_back()
        .is_none_or(|c| c.is_whitespace() || matches!(c, '(' | '[' | '"' | '\'' | '„' | '«' | '“'))
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '“' | '»' | '«' | '’' | ')' | ']')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase()
        || matches!(
            c,
            '"' | '„' | '«' | '“' | '‚' | '‹' | '\'' | '(' | '[' | '\u{2014}' | '\u{2013}'
        )
}

/// Rule-based sentence splitter.
///
/// A boundary is a run of `. ! ? …` (plus closing quotes or brackets) followed by
/// whitespace and an uppercase letter or opening quote, unless the guard says the
/// period belongs to an abbreviation.
pub fn split_into_sentences(text: &str, guard: &AbbreviationGuard) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        if !is_terminal(chars[i].1) {
            i += 1;
            continue;
        }
        let mut end = i;
        while end + 1 < chars.len() && (is_terminal(chars[end + 1].1) || is_closing(chars[end + 1].1)) {
            end += 1;
        }
        let boundary = chars[end].0 + chars[end].1.len_utf8();
        let mut next = end + 1;
        while next < chars.len() && chars[next].1.is_whitespace() {
            next += 1;
        }
        let splits = next > end + 1 && next < chars.len() && opens_sentence(chars[next].1);
        let guarded = chars[i].1 == '.' && i == end && guard.protects(&text[start..boundary], &text[boundary..]);
        if splits && !guarded {
            push_trimmed(&mut sentences, &text[start..boundary]);
            start = chars[next].0;
            i = next;
        } else {
            i = end + 1;
        }
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, segment: &str) {
    let s = segment.trim();
    if !s.is_empty() {
        out.push(s.to_owned());
    }
}

/// Outcome of [`filter_usage_sentences`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSelection {
    pub record: LexRecord,
    pub kept_sentences: usize,
    pub total_sentences: usize,
    /// Set when no sentence matched and the full usage was kept.
    pub warning: Option<String>,
}

/// Keeps only the sentences of a usage that mention the target word.
pub fn filter_usage_sentences(
    record: &LexRecord,
    matcher: &TargetMatcher,
    guard: &AbbreviationGuard,
) -> SentenceSelection {
    let sentences = split_into_sentences(&record.usage, guard);
    let kept: Vec<&str> = sentences
        .iter()
        .filter(|s| matcher.matches_text(s))
        .map(String::as_str)
        .collect();
    let mut out = record.clone();
    if kept.is_empty() {
        let warning = format!(
            "no sentence of the usage for {:?} ({}) mentions the target; keeping it whole",
            record.word, record.sense_id
        );
        log::warn!("{warning}");
        return SentenceSelection {
            record: out,
            kept_sentences: sentences.len(),
            total_sentences: sentences.len(),
            warning: Some(warning),
        };
    }
    if kept.len() < sentences.len() {
        out.usage = kept.join(" ");
    }
    SentenceSelection {
        record: out,
        kept_sentences: kept.len(),
        total_sentences: sentences.len(),
        warning: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// Shared-task training data only.
    A,
    /// Shared-task data followed by lexicon data.
    APlusD,
    /// Lexicon only (languages without shared-task training data).
    D,
}

impl Recipe {
    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::A => "a",
            Recipe::APlusD => "a_plus_d",
            Recipe::D => "d",
        }
    }
}

impl FromStr for Recipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Recipe::A),
            "a_plus_d" | "a+d" => Ok(Recipe::APlusD),
            "d" => Ok(Recipe::D),
            other => Err(format!("unknown recipe {other:?} (expected a, a_plus_d or d)")),
        }
    }
}

/// Concatenates the recipe's ingredients (shared-task first) and drops exact
/// `(word, sense_id, usage)` duplicates, keeping the first copy.
pub fn assemble_training_set(
    axolotl_train: Option<&DatasetSplit>,
    lexicon: Option<&DatasetSplit>,
    recipe: Recipe,
) -> Result<DatasetSplit, CurationError> {
    let missing = |missing| CurationError::MissingIngredient {
        recipe: recipe.as_str(),
        missing,
    };
    let parts: Vec<&DatasetSplit> = match recipe {
        Recipe::A => vec![axolotl_train.ok_or_else(|| missing("shared-task training"))?],
        Recipe::D => vec![lexicon.ok_or_else(|| missing("lexicon"))?],
        Recipe::APlusD => vec![
            axolotl_train.ok_or_else(|| missing("shared-task training"))?,
            lexicon.ok_or_else(|| missing("lexicon"))?,
        ],
    };
    let name = match recipe {
        Recipe::A => SplitName::TrainA,
        Recipe::APlusD | Recipe::D => SplitName::TrainAd,
    };
    let mut seen: HashSet<(&str, &str, &str)> = HashSet::new();
    let mut records = Vec::new();
    for r in parts.iter().flat_map(|p| p.records.iter()) {
        if seen.insert((&r.word, &r.sense_id, &r.usage)) {
            records.push(r.clone());
        }
    }
    Ok(DatasetSplit {
        name,
        language: parts[0].language.clone(),
        records,
    })
}
