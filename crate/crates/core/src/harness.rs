//! Scoring of `target–sense–definition` predictions against gold glosses,
//! system comparison and error analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::AnnotationLabel;
use crate::corpus::DatasetSplit;
use crate::embedding::EmbeddingVector;
use crate::formats::Prediction;
use crate::metrics::{
    bertscore_greedy, detect_circularity, format_percent, length_stats, sentence_bleu, tokenize, welch_ttest,
    BertScoreResult, LengthStats, MetricsError, TTestResult, TokenEmbeddings,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldItem {
    pub word: String,
    pub sense_id: String,
    pub definition: String,
}

/// One gold item per novel `(word, sense_id)` with a definition; the first
/// definition wins.
pub fn load_gold(split: &DatasetSplit) -> (Vec<GoldItem>, Vec<String>) {
    let mut seen = HashSet::new();
    let mut gold = Vec::new();
    for r in &split.records {
        let Some(def) = r.definition.as_deref().filter(|d| !d.trim().is_empty()) else {
            continue;
        };
        if r.is_novel_sense && seen.insert((r.word.as_str(), r.sense_id.as_str())) {
            gold.push(GoldItem {
                word: r.word.clone(),
                sense_id: r.sense_id.clone(),
                definition: def.to_owned(),
            });
        }
    }
    let mut warnings = Vec::new();
    if gold.is_empty() {
        let msg = "gold split contains no novel senses with definitions".to_owned();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    (gold, warnings)
}

/// Source of per-token contextual embeddings for BERTScore.
pub trait TokenEmbedder {
    fn token_embeddings(&self, text: &str) -> Result<TokenEmbeddings, String>;
}

/// Token embeddings fetched ahead of time, looked up by exact text.
#[derive(Debug, Clone, Default)]
pub struct TokenEmbeddingTable {
    entries: HashMap<String, TokenEmbeddings>,
}

impl TokenEmbeddingTable {
    pub fn insert(&mut self, text: impl Into<String>, embeddings: TokenEmbeddings) {
        self.entries.insert(text.into(), embeddings);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TokenEmbedder for TokenEmbeddingTable {
    fn token_embeddings(&self, text: &str) -> Result<TokenEmbeddings, String> {
        self.entries
            .get(text)
            .cloned()
            .ok_or_else(|| format!("no token embeddings for {text:?}"))
    }
}

/// Offline embedder: each token maps to a fixed sparse pseudo-random vector
/// derived from its hash, so BERTScore reduces to (near-)exact token overlap.
#[derive(Debug, Clone, Copy)]
pub struct LexicalTokenEmbedder {
    pub dimension: usize,
}

impl Default for LexicalTokenEmbedder {
    fn default() -> Self {
        LexicalTokenEmbedder { dimension: 1024 }
    }
}

impl LexicalTokenEmbedder {
    fn vector(&self, token: &str) -> EmbeddingVector {
        let digest = Sha256::digest(token.as_bytes());
        let mut v = vec![0.0; self.dimension];
        for chunk in digest.chunks(4).take(4) {
            let raw = u32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            let sign = if raw & 1 == 0 { 1.0 } else { -1.0 };
            v[(raw >> 1) as usize % self.dimension] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        EmbeddingVector::new(v).expect("finite")
    }
}

impl TokenEmbedder for LexicalTokenEmbedder {
    fn token_embeddings(&self, text: &str) -> Result<TokenEmbeddings, String> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err("text has no tokens".into());
        }
        let vectors = tokens.iter().map(|t| self.vector(t)).collect();
        TokenEmbeddings::new(tokens, vectors).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub word: String,
    pub sense_id: String,
    pub predicted: bool,
    pub bleu: f64,
    pub bertscore_precision: f64,
    pub bertscore_recall: f64,
    pub bertscore_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub bleu: f64,
    pub bertscore_precision: f64,
    pub bertscore_recall: f64,
    pub bertscore_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub per_item: Vec<ItemScore>,
    /// Means of the per-item scores, ×100.
    pub aggregates: Aggregates,
    pub coverage: f64,
    /// Percent of all predictions that contain their target word.
    pub circularity_rate: f64,
    /// Mean prediction length over mean gold length (characters), on matched pairs.
    pub length_ratio: Option<f64>,
    pub extra_predictions: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScoreOptions {
    pub stem_min: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { stem_min: 4 }
    }
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

fn aggregate(items: &[ItemScore]) -> Aggregates {
    Aggregates {
        bleu: mean(items.iter().map(|i| i.bleu)) * 100.0,
        bertscore_precision: mean(items.iter().map(|i| i.bertscore_precision)) * 100.0,
        bertscore_recall: mean(items.iter().map(|i| i.bertscore_recall)) * 100.0,
        bertscore_f1: mean(items.iter().map(|i| i.bertscore_f1)) * 100.0,
    }
}

/// Scores every gold sense. Unpredicted senses score 0; predictions without
/// gold are counted and ignored.
pub fn score_predictions(
    predictions: &[Prediction],
    gold: &[GoldItem],
    embedder: &dyn TokenEmbedder,
    opts: ScoreOptions,
) -> ScoreReport {
    let mut warnings = Vec::new();
    let by_key: HashMap<(&str, &str), &Prediction> = predictions.iter().map(|p| (p.key(), p)).collect();
    let gold_keys: HashSet<(&str, &str)> = gold.iter().map(|g| (g.word.as_str(), g.sense_id.as_str())).collect();
    let extra_predictions = predictions.iter().filter(|p| !gold_keys.contains(&p.key())).count();
    if extra_predictions > 0 {
        let msg = format!("{extra_predictions} prediction(s) have no gold sense and were ignored");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut per_item = Vec::with_capacity(gold.len());
    let mut matched_preds = Vec::new();
    let mut matched_golds = Vec::new();
    for g in gold {
        let Some(p) = by_key.get(&(g.word.as_str(), g.sense_id.as_str())) else {
            per_item.push(ItemScore {
                word: g.word.clone(),
                sense_id: g.sense_id.clone(),
                predicted: false,
                bleu: 0.0,
                bertscore_precision: 0.0,
                bertscore_recall: 0.0,
                bertscore_f1: 0.0,
            });
            continue;
        };
        matched_preds.push(p.definition.as_str());
        matched_golds.push(g.definition.as_str());
        let bleu = match sentence_bleu(&tokenize(&p.definition), &tokenize(&g.definition)) {
            Ok(b) => b.score,
            Err(e) => {
                warnings.push(format!("{}/{}: BLEU not computed: {e}", g.word, g.sense_id));
                0.0
            }
        };
        let bert = match (
            embedder.token_embeddings(&p.definition),
            embedder.token_embeddings(&g.definition),
        ) {
            (Ok(c), Ok(r)) => bertscore_greedy(&c, &r).unwrap_or_else(|e| {
                warnings.push(format!("{}/{}: BERTScore not computed: {e}", g.word, g.sense_id));
                BertScoreResult::zero()
            }),
            (Err(e), _) | (_, Err(e)) => {
                warnings.push(format!("{}/{}: BERTScore not computed: {e}", g.word, g.sense_id));
                BertScoreResult::zero()
            }
        };
        per_item.push(ItemScore {
            word: g.word.clone(),
            sense_id: g.sense_id.clone(),
            predicted: true,
            bleu,
            bertscore_precision: bert.precision,
            bertscore_recall: bert.recall,
            bertscore_f1: bert.f1,
        });
    }

    let coverage = if gold.is_empty() {
        0.0
    } else {
        matched_preds.len() as f64 / gold.len() as f64
    };
    let circular = predictions
        .iter()
        .filter(|p| detect_circularity(&p.definition, &p.word, opts.stem_min))
        .count();
    let circularity_rate = if predictions.is_empty() {
        0.0
    } else {
        circular as f64 / predictions.len() as f64 * 100.0
    };
    let length_ratio = length_stats(&matched_preds, &matched_golds).ok().and_then(|s| s.ratio);
    ScoreReport {
        system: None,
        aggregates: aggregate(&per_item),
        per_item,
        coverage,
        circularity_rate,
        length_ratio,
        extra_predictions,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu,
    BertscorePrecision,
    BertscoreRecall,
    #[default]
    BertscoreF1,
}

impl Metric {
    fn of(self, item: &ItemScore) -> f64 {
        match self {
            Metric::Bleu => item.bleu,
            Metric::BertscorePrecision => item.bertscore_precision,
            Metric::BertscoreRecall => item.bertscore_recall,
            Metric::BertscoreF1 => item.bertscore_f1,
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(Metric::Bleu),
            "bertscore_precision" | "precision" => Ok(Metric::BertscorePrecision),
            "bertscore_recall" | "recall" => Ok(Metric::BertscoreRecall),
            "bertscore_f1" | "f1" => Ok(Metric::BertscoreF1),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Welch t-test over the per-item scores of two systems, on the union of
/// their gold keys (missing items count as 0).
pub fn compare_systems(
    a: &ScoreReport,
    b: &ScoreReport,
    metric: Metric,
) -> Result<(TTestResult, Vec<String>), HarnessError> {
    let index = |r: &ScoreReport| -> BTreeMap<(String, String), f64> {
        r.per_item
            .iter()
            .map(|i| ((i.word.clone(), i.sense_id.clone()), metric.of(i)))
            .collect()
    };
    let (ia, ib) = (index(a), index(b));
    let keys: BTreeSet<&(String, String)> = ia.keys().chain(ib.keys()).collect();
    let mut warnings = Vec::new();
    let only_a = ia.keys().filter(|k| !ib.contains_key(*k)).count();
    let only_b = ib.keys().filter(|k| !ia.contains_key(*k)).count();
    if only_a + only_b > 0 {
        let msg = format!(
            "reports cover different gold senses ({only_a} only in A, {only_b} only in B); missing items count as 0"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let xs: Vec<f64> = keys.iter().map(|k| ia.get(*k).copied().unwrap_or(0.0)).collect();
    let ys: Vec<f64> = keys.iter().map(|k| ib.get(*k).copied().unwrap_or(0.0)).collect();
    Ok((welch_ttest(&xs, &ys)?, warnings))
}

/// A percentage with the counts behind it. `display` uses one decimal and
/// `display_precise` two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub total: usize,
    pub percent: f64,
    pub display: String,
    pub display_precise: String,
}

impl Share {
    pub fn new(count: usize, total: usize) -> Option<Share> {
        assert!(count <= total, "share numerator exceeds denominator");
        (total > 0).then(|| {
            let percent = count as f64 / total as f64 * 100.0;
            Share {
                count,
                total,
                percent,
                display: format_percent(percent, 1),
                display_precise: format_percent(percent, 2),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub predictions: usize,
    pub circularity: Option<Share>,
    pub circular_items: Vec<(String, String)>,
    pub length: Option<LengthStats>,
    /// Shares over labeled tasks; absent without a label file.
    pub fluency: Option<Share>,
    pub adequacy: Option<Share>,
    pub labeled: usize,
}

/// Keeps the last label per task (store order).
pub fn latest_label_per_task(labels: &[AnnotationLabel]) -> BTreeMap<&str, &AnnotationLabel> {
    labels.iter().map(|l| (l.task_id.as_str(), l)).collect()
}

/// Automatic circularity on the full prediction set, length comparison on
/// matched pairs, and human fluency/adequacy shares when labels are given.
pub fn error_report(
    predictions: &[Prediction],
    gold: &[GoldItem],
    stem_min: usize,
    labels: Option<&[AnnotationLabel]>,
) -> ErrorSummary {
    let circular_items: Vec<(String, String)> = predictions
        .iter()
        .filter(|p| detect_circularity(&p.definition, &p.word, stem_min))
        .map(|p| (p.word.clone(), p.sense_id.clone()))
        .collect();
    let gold_by_key: HashMap<(&str, &str), &str> = gold
        .iter()
        .map(|g| ((g.word.as_str(), g.sense_id.as_str()), g.definition.as_str()))
        .collect();
    let (preds, golds): (Vec<&str>, Vec<&str>) = predictions
        .iter()
        .filter_map(|p| gold_by_key.get(&p.key()).map(|g| (p.definition.as_str(), *g)))
        .unzip();
    let length = length_stats(&preds, &golds).ok();
    let latest = labels.map(latest_label_per_task).unwrap_or_default();
    let labeled = latest.len();
    ErrorSummary {
        predictions: predictions.len(),
        circularity: Share::new(circular_items.len(), predictions.len()),
        circular_items,
        length,
        fluency: labels.and_then(|_| Share::new(latest.values().filter(|l| l.fluency_issue).count(), labeled)),
        adequacy: labels.and_then(|_| Share::new(latest.values().filter(|l| l.adequacy_issue).count(), labeled)),
        labeled,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Tsv,
    MarkdownTable,
}

impl ReportFormat {
    /// Guesses from a file extension; JSON otherwise.
    pub fn from_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => ReportFormat::Tsv,
            Some("md") => ReportFormat::MarkdownTable,
            _ => ReportFormat::Json,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "markdown_table" | "md" => Ok(ReportFormat::MarkdownTable),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// `BLEU / P / R / F1` row cell with two decimals.
pub fn table_row(a: &Aggregates) -> String {
    format!(
        "{:.2} / {:.2} / {:.2} / {:.2}",
        a.bleu, a.bertscore_precision, a.bertscore_recall, a.bertscore_f1
    )
}

pub fn render_report(report: &ScoreReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Tsv => {
            let mut s =
                String::from("word\tsense_id\tpredicted\tbleu\tbertscore_precision\tbertscore_recall\tbertscore_f1\n");
            for i in &report.per_item {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                    i.word,
                    i.sense_id,
                    i.predicted,
                    i.bleu * 100.0,
                    i.bertscore_precision * 100.0,
                    i.bertscore_recall * 100.0,
                    i.bertscore_f1 * 100.0
                );
            }
            let a = &report.aggregates;
            let _ = writeln!(
                s,
                "AGGREGATE\t\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                report.coverage, a.bleu, a.bertscore_precision, a.bertscore_recall, a.bertscore_f1
            );
            s
        }
        ReportFormat::MarkdownTable => {
            let name = report.system.as_deref().unwrap_or("system");
            let ratio = report.length_ratio.map_or("-".to_owned(), |r| format!("{r:.2}"));
            format!(
                "| System | BLEU / P / R / F1 | Coverage | Circ. (%) | Length ratio |\n\
                 |---|---|---|---|---|\n\
                 | {name} | {} | {:.2} | {:.1} | {ratio} |\n",
                table_row(&report.aggregates),
                report.coverage,
                report.circularity_rate,
            )
        }
    }
}

pub fn emit_report(report: &ScoreReport, path: &Path, format: ReportFormat) -> Result<(), HarnessError> {
    std::fs::write(path, render_report(report, format)).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<ScoreReport, HarnessError> {
    let body = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&body).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, LexRecord, Period, Source, SplitName};

    fn gold(word: &str, sense: &str, def: &str) -> GoldItem {
        GoldItem {
            word: word.into(),
            sense_id: sense.into(),
            definition: def.into(),
        }
    }

    fn pred(word: &str, sense: &str, def: &str) -> Prediction {
        Prediction {
            word: word.into(),
            sense_id: sense.into(),
            definition: def.into(),
        }
    }

    fn record(word: &str, sense: &str, def: Option<&str>, novel: bool) -> LexRecord {
        LexRecord {
            language: Language::finnish(),
            word: word.into(),
            sense_id: sense.into(),
            definition: def.map(str::to_owned),
            usage: "käyttö".into(),
            period: Period::New,
            is_novel_sense: novel,
            source: Source::Axolotl,
        }
    }

    #[test]
    fn gold_loading() {
        let split = DatasetSplit {
            name: SplitName::Test,
            language: Language::finnish(),
            records: vec![
                record("a", "a1", Some("first"), true),
                record("a", "a1", Some("second"), true),
                record("a", "a1", Some("third"), true),
                record("a", "a0", Some("old"), false),
                record("b", "b1", Some("bee"), true),
            ],
        };
        let (items, warnings) = load_gold(&split);
        assert_eq!(items, vec![gold("a", "a1", "first"), gold("b", "b1", "bee")]);
        assert!(warnings.is_empty());

        let none = DatasetSplit {
            name: SplitName::Test,
            language: Language::finnish(),
            records: vec![record("a", "a0", Some("old"), false)],
        };
        let (items, warnings) = load_gold(&none);
        assert!(items.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn echo_gold_scores_100() {
        let g = vec![
            gold("cell", "cell_3", "A unit of a living organism"),
            gold("kuu", "k1", "taivaankappale"),
        ];
        let p: Vec<Prediction> = g.iter().map(|g| pred(&g.word, &g.sense_id, &g.definition)).collect();
        let r = score_predictions(&p, &g, &LexicalTokenEmbedder::default(), ScoreOptions::default());
        assert_eq!(r.aggregates.bleu, 100.0);
        assert_eq!(r.aggregates.bertscore_f1, 100.0);
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.length_ratio, Some(1.0));
    }

    #[test]
    fn missing_prediction_scores_zero() {
        let g = vec![gold("a", "a1", "some text"), gold("b", "b1", "other text")];
        let p = vec![pred("a", "a1", "some text"), pred("z", "z1", "stray")];
        let r = score_predictions(&p, &g, &LexicalTokenEmbedder::default(), ScoreOptions::default());
        assert_eq!(r.coverage, 0.5);
        assert!(!r.per_item[1].predicted);
        assert_eq!(r.per_item[1].bleu, 0.0);
        assert_eq!(r.aggregates.bleu, 50.0);
        assert_eq!(r.extra_predictions, 1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn aggregate_is_mean_of_hand_values() {
        // per-item BLEU: 1.0, 0.716531..., 0.118563...
        let g = vec![
            gold("w1", "s", "x y z"),
            gold("w2", "s", "the cat sat down"),
            gold("w3", "s", "a b"),
        ];
        let p = vec![
            pred("w1", "s", "x y z"),
            pred("w2", "s", "the cat sat"),
            pred("w3", "s", "a a a"),
        ];
        let r = score_predictions(&p, &g, &LexicalTokenEmbedder::default(), ScoreOptions::default());
        let expected = (1.0 + (1.0f64 - 4.0 / 3.0).exp() + (1.0 / 3.0 * 0.05 * 0.1f64).powf(1.0 / 3.0)) / 3.0 * 100.0;
        assert!((r.aggregates.bleu - expected).abs() < 1e-9);
    }

    #[test]
    fn compare_identical_and_disjoint() {
        let g = vec![gold("a", "1", "x y"), gold("b", "1", "y z"), gold("c", "1", "q")];
        let p = vec![pred("a", "1", "x y"), pred("b", "1", "y"), pred("c", "1", "r")];
        let r = score_predictions(&p, &g, &LexicalTokenEmbedder::default(), ScoreOptions::default());
        let (t, w) = compare_systems(&r, &r, Metric::Bleu).unwrap();
        assert_eq!((t.t_statistic, t.p_value), (0.0, 1.0));
        assert!(w.is_empty());

        let g2 = vec![gold("d", "1", "x y"), gold("e", "1", "y z")];
        let r2 = score_predictions(&p, &g2, &LexicalTokenEmbedder::default(), ScoreOptions::default());
        let (_, w) = compare_systems(&r, &r2, Metric::Bleu).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn circularity_share() {
        let mut p = Vec::new();
        for i in 0..32 {
            let def = if i < 5 {
                format!("a table{i} sort of table")
            } else {
                "a piece of furniture".into()
            };
            p.push(pred("table", &format!("s{i}"), &def));
        }
        let summary = error_report(&p, &[], 4, None);
        let c = summary.circularity.unwrap();
        assert_eq!((c.count, c.total), (5, 32));
        assert_eq!(c.display, "15.6");
        assert!(summary.fluency.is_none());
    }

    #[test]
    fn fluency_share_from_labels() {
        let labels: Vec<AnnotationLabel> = (0..30)
            .map(|i| AnnotationLabel {
                task_id: format!("t{i}"),
                fluency_issue: i < 2,
                adequacy_issue: false,
                circular_override: None,
                annotator: "x".into(),
                timestamp: "2024-01-01T00:00:00Z".into(),
            })
            .collect();
        let s = error_report(&[], &[], 4, Some(&labels));
        let f = s.fluency.unwrap();
        assert_eq!(f.display_precise, "6.67");
        assert_eq!(s.adequacy.unwrap().percent, 0.0);
    }

    #[test]
    fn report_formats() {
        let g = vec![gold("a", "1", "x y")];
        let p = vec![pred("a", "1", "x y")];
        let r = score_predictions(&p, &g, &LexicalTokenEmbedder::default(), ScoreOptions::default());
        let md = render_report(&r, ReportFormat::MarkdownTable);
        assert!(md.contains("| 100.00 / 100.00 / 100.00 / 100.00 |"), "{md}");
        let tsv = render_report(&r, ReportFormat::Tsv);
        assert_eq!(tsv.lines().count(), 3);
        assert!(tsv.lines().last().unwrap().starts_with("AGGREGATE\t"));
        let back: ScoreReport = serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn lexical_embedder_distinguishes_tokens() {
        let e = LexicalTokenEmbedder::default();
        let a = e.token_embeddings("cat").unwrap();
        let b = e.token_embeddings("dog").unwrap();
        let s = bertscore_greedy(&a, &b).unwrap();
        assert!(s.f1 < 0.6, "{s:?}");
        assert!(e.token_embeddings("  ").is_err());
    }
}
