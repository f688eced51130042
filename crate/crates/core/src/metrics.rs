//! Evaluation metrics, implemented from first principles so that scores are
//! reproducible inside this crate: sentence BLEU, BERTScore greedy matching,
//! circularity detection, length statistics and Welch's t-test.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
pub use crate::text::tokenize;
use crate::text::TargetMatcher;

/// Numerator used for orders with n-grams but no matches.
pub const BLEU_ZERO_COUNT_EPSILON: f64 = 0.1;
pub const BLEU_MAX_ORDER: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("{0} side has no tokens")]
    EmptySide(&'static str),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("token and vector counts differ: {tokens} tokens, {vectors} vectors")]
    TokenVectorMismatch { tokens: usize, vectors: usize },
    #[error("list lengths differ: {0} predictions vs {1} golds")]
    LengthMismatch(usize, usize),
    #[error("no items to measure")]
    EmptyInput,
    #[error("each sample needs at least 2 values (got {0} and {1})")]
    InsufficientData(usize, usize),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuBreakdown {
    /// Modified precisions for n = 1..4; `None` where the hypothesis has no n-grams.
    pub precisions: [Option<f64>; BLEU_MAX_ORDER],
    pub brevity_penalty: f64,
    pub effective_orders: usize,
    pub score: f64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Smoothed sentence-level BLEU against a single reference.
pub fn sentence_bleu(hypothesis: &[String], reference: &[String]) -> Result<BleuBreakdown, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    if hypothesis.is_empty() {
        return Ok(BleuBreakdown {
            precisions: [None; BLEU_MAX_ORDER],
            brevity_penalty: 0.0,
            effective_orders: 0,
            score: 0.0,
        });
    }
    let mut precisions = [None; BLEU_MAX_ORDER];
    let mut log_sum = 0.0;
    let mut effective = 0;
    for n in 1..=BLEU_MAX_ORDER {
        if hypothesis.len() < n {
            continue;
        }
        let total = hypothesis.len() - n + 1;
        let ref_counts = ngram_counts(reference, n);
        let matched: usize = ngram_counts(hypothesis, n)
            .into_iter()
            .map(|(gram, count)| count.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let p = if matched == 0 {
            BLEU_ZERO_COUNT_EPSILON / total as f64
        } else {
            matched as f64 / total as f64
        };
        precisions[n - 1] = Some(p);
        log_sum += p.ln();
        effective += 1;
    }
    let (c, r) = (hypothesis.len() as f64, reference.len() as f64);
    let brevity_penalty = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    let score = (brevity_penalty * (log_sum / effective as f64).exp()).clamp(0.0, 1.0);
    Ok(BleuBreakdown {
        precisions,
        brevity_penalty,
        effective_orders: effective,
        score,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BertScoreResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BertScoreResult {
    pub fn zero() -> Self {
        BertScoreResult {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Cosine similarity clamped to [-1, 1]; zero vectors compare as 0 and
/// identical nonzero vectors as exactly 1.
pub fn token_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else if a == b {
        1.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Greedy matching over a precomputed `candidate × reference` similarity matrix.
pub fn bertscore_from_similarity(similarity: &[Vec<f64>]) -> Result<BertScoreResult, MetricsError> {
    let rows = similarity.len();
    let cols = similarity.first().map_or(0, Vec::len);
    if rows == 0 {
        return Err(MetricsError::EmptySide("candidate"));
    }
    if cols == 0 {
        return Err(MetricsError::EmptySide("reference"));
    }
    if let Some(bad) = similarity.iter().find(|r| r.len() != cols) {
        return Err(MetricsError::DimensionMismatch(cols, bad.len()));
    }
    let precision = similarity
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / rows as f64;
    let recall = (0..cols)
        .map(|j| similarity.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cols as f64;
    Ok(BertScoreResult {
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

/// A tokenized text with one contextual vector per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbeddings {
    pub tokens: Vec<String>,
    pub vectors: Vec<EmbeddingVector>,
}

impl TokenEmbeddings {
    pub fn new(tokens: Vec<String>, vectors: Vec<EmbeddingVector>) -> Result<Self, MetricsError> {
        if tokens.len() != vectors.len() {
            return Err(MetricsError::TokenVectorMismatch {
                tokens: tokens.len(),
                vectors: vectors.len(),
            });
        }
        Ok(TokenEmbeddings { tokens, vectors })
    }

    fn dimension(&self) -> Option<usize> {
        self.vectors.first().map(EmbeddingVector::dimension)
    }
}

/// BERTScore without idf weighting or baseline rescaling.
pub fn bertscore_greedy(cand: &TokenEmbeddings, reference: &TokenEmbeddings) -> Result<BertScoreResult, MetricsError> {
    let cd = cand.dimension().ok_or(MetricsError::EmptySide("candidate"))?;
    let rd = reference.dimension().ok_or(MetricsError::EmptySide("reference"))?;
    for v in cand.vectors.iter().chain(&reference.vectors) {
        if v.dimension() != cd {
            return Err(MetricsError::DimensionMismatch(cd, v.dimension()));
        }
    }
    if cd != rd {
        return Err(MetricsError::DimensionMismatch(cd, rd));
    }
    let similarity: Vec<Vec<f64>> = cand
        .vectors
        .iter()
        .map(|c| {
            reference
                .vectors
                .iter()
                .map(|r| token_cosine(c.values(), r.values()))
                .collect()
        })
        .collect();
    bertscore_from_similarity(&similarity)
}

/// True when the definition mentions the word itself (or, with `stem_min > 0`,
/// a token sharing its stem).
pub fn detect_circularity(definition: &str, word: &str, stem_min: usize) -> bool {
    TargetMatcher::new(word, stem_min).matches_text(definition)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_prediction_chars: f64,
    pub mean_gold_chars: f64,
    /// `None` when the gold side has zero mean length.
    pub ratio: Option<f64>,
}

/// Mean character lengths of both sides and their ratio (prediction / gold).
pub fn length_stats<P: AsRef<str>, G: AsRef<str>>(predictions: &[P], golds: &[G]) -> Result<LengthStats, MetricsError> {
    if predictions.len() != golds.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), golds.len()));
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mean = |xs: &mut dyn Iterator<Item = usize>| xs.sum::<usize>() as f64 / predictions.len() as f64;
    let mean_prediction_chars = mean(&mut predictions.iter().map(|p| p.as_ref().chars().count()));
    let mean_gold_chars = mean(&mut golds.iter().map(|g| g.as_ref().chars().count()));
    Ok(LengthStats {
        mean_prediction_chars,
        mean_gold_chars,
        ratio: (mean_gold_chars > 0.0).then(|| mean_prediction_chars / mean_gold_chars),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    /// Set when both samples have zero variance and a convention was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch (unequal variances) t-test.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::InsufficientData(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_and_variance(a);
    let (mb, vb) = mean_and_variance(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        if ma == mb {
            return Ok(TTestResult {
                t_statistic: 0.0,
                degrees_of_freedom: df,
                p_value: 1.0,
                note: Some("both samples are constant and equal".into()),
            });
        }
        let note = "both samples are constant with different means; p set to 0".to_owned();
        log::warn!("{note}");
        return Ok(TTestResult {
            t_statistic: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
            degrees_of_freedom: df,
            p_value: 0.0,
            note: Some(note),
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_sided_p(t, df),
        note: None,
    })
}

/// Two-sided tail probability of Student's t: `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) || a <= 0.0 || b <= 0.0 {
        return f64::NAN;
    }
    if x == 0.0 || x == 1.0 {
        return x;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + odd * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Formats a percentage for tables, e.g. `15.6`.
pub fn format_percent(value: f64, decimals: usize) -> String {
    format!("{value:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn vecs(rows: &[&[f64]]) -> Vec<EmbeddingVector> {
        rows.iter().map(|r| EmbeddingVector::new(r.to_vec()).unwrap()).collect()
    }

    fn te(rows: &[&[f64]]) -> TokenEmbeddings {
        let v = vecs(rows);
        TokenEmbeddings::new((0..v.len()).map(|i| format!("t{i}")).collect(), v).unwrap()
    }

    #[test]
    fn bleu_identity() {
        let x = toks("a unit of a living organism");
        let b = sentence_bleu(&x, &x).unwrap();
        assert_eq!(b.score, 1.0);
        let one = toks("cell");
        assert_eq!(sentence_bleu(&one, &one).unwrap().score, 1.0);
    }

    #[test]
    fn bleu_short_hypothesis() {
        let b = sentence_bleu(&toks("the cat sat"), &toks("the cat sat down")).unwrap();
        assert_eq!(b.precisions, [Some(1.0), Some(1.0), Some(1.0), None]);
        assert_eq!(b.effective_orders, 3);
        assert!((b.brevity_penalty - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-15);
        assert!((b.score - 0.716531).abs() < 5e-7, "{}", b.score);
    }

    #[test]
    fn bleu_clipping_and_smoothing() {
        let b = sentence_bleu(&toks("a a a"), &toks("a b")).unwrap();
        assert_eq!(b.precisions[0], Some(1.0 / 3.0));
        assert_eq!(b.precisions[1], Some(0.05));
        assert_eq!(b.precisions[2], Some(0.1));
        assert_eq!(b.precisions[3], None);
        assert_eq!(b.brevity_penalty, 1.0);
        assert!((b.score - 0.118563).abs() < 5e-7, "{}", b.score);
    }

    #[test]
    fn bleu_edge_cases() {
        assert_eq!(sentence_bleu(&toks("a"), &[]), Err(MetricsError::EmptyReference));
        let empty = sentence_bleu(&[], &toks("a b")).unwrap();
        assert_eq!(
            (empty.score, empty.brevity_penalty, empty.effective_orders),
            (0.0, 0.0, 0)
        );
    }

    #[test]
    fn bertscore_examples() {
        let a = te(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = bertscore_greedy(&a, &a).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));

        let c = te(&[&[1.0, 0.0, 0.0]]);
        let d = te(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(bertscore_greedy(&c, &d).unwrap(), BertScoreResult::zero());

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = te(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = te(&[&[1.0, 0.0], &[h, h]]);
        let s = bertscore_greedy(&c, &r).unwrap();
        assert!((s.precision - 0.853553).abs() < 1e-6);
        assert!((s.recall - 0.853553).abs() < 1e-6);
        assert!((s.f1 - 0.853553).abs() < 1e-6);
    }

    #[test]
    fn bertscore_errors() {
        let a = te(&[&[1.0, 0.0]]);
        let b = te(&[&[1.0, 0.0, 0.0]]);
        assert_eq!(bertscore_greedy(&a, &b), Err(MetricsError::DimensionMismatch(2, 3)));
        let empty = TokenEmbeddings::new(vec![], vec![]).unwrap();
        assert_eq!(bertscore_greedy(&empty, &a), Err(MetricsError::EmptySide("candidate")));
        assert_eq!(bertscore_greedy(&a, &empty), Err(MetricsError::EmptySide("reference")));
    }

    #[test]
    fn circularity() {
        assert!(detect_circularity("a table is a sort of a table", "table", 4));
        assert!(detect_circularity("a table is a sort of a table", "table", 0));
        assert!(!detect_circularity("a unit of a living organism", "cell", 4));
        assert!(detect_circularity("предмет мебели в виде таблицы", "таблица", 4));
        assert!(!detect_circularity("предмет мебели в виде таблицы", "таблица", 0));
        assert!(detect_circularity("Ein Tisch.", "tisch", 0));
    }

    #[test]
    fn lengths() {
        let same = ["abc", "de"];
        assert_eq!(length_stats(&same, &same).unwrap().ratio, Some(1.0));
        let preds = vec!["x".repeat(20); 3];
        let golds = vec!["y".repeat(10); 3];
        assert_eq!(length_stats(&preds, &golds).unwrap().ratio, Some(2.0));
        let s = length_stats(&["", "abcd"], &["ab", "ab"]).unwrap();
        assert_eq!(s.mean_prediction_chars, 2.0);
        assert_eq!(
            length_stats(&["a"], &["a", "b"]),
            Err(MetricsError::LengthMismatch(1, 2))
        );
        // characters, not bytes
        assert_eq!(length_stats(&["кот"], &["cat"]).unwrap().ratio, Some(1.0));
    }

    #[test]
    fn welch_examples() {
        let r = welch_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));

        let r = welch_ttest(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((r.t_statistic + 1.095445).abs() < 1e-6);
        assert!((r.degrees_of_freedom - 6.0).abs() < 1e-12);
        assert!((r.p_value - 0.3153).abs() < 1e-4, "{}", r.p_value);

        let s = welch_ttest(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.t_statistic, -r.t_statistic);
        assert_eq!(s.p_value, r.p_value);
    }

    #[test]
    fn welch_degenerate() {
        let r = welch_ttest(&[1.0, 1.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));
        let r = welch_ttest(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.note.is_some());
        assert_eq!(
            welch_ttest(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::InsufficientData(1, 2))
        );
    }

    #[test]
    fn special_functions() {
        // Γ(5) = 24
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(0.3, 2.5, 1.0) - 0.3f64.powf(2.5)).abs() < 1e-13);
        // t with 1 df is Cauchy: p(|T| > 1) = 0.5
        assert!((student_t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn percent_format() {
        assert_eq!(format_percent(5.0 / 32.0 * 100.0, 1), "15.6");
        assert_eq!(format_percent(2.0 / 30.0 * 100.0, 2), "6.67");
    }
}
