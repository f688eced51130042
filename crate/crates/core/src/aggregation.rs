//! Turns per-usage generated definitions into one label per `(word, sense)`.
//!
//! Each sense's candidate definitions are embedded and averaged into a
//! prototype; candidates are ranked by cosine similarity to it. Senses of one
//! word are then labeled greedily so that two senses share a label only when a
//! sense has run out of unused candidates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;

/// Similarity assigned to candidates whose embedding is the zero vector.
pub const ZERO_VECTOR_SIMILARITY: f64 = f64::NEG_INFINITY;

/// Similarities closer than this rank as ties.
const SIMILARITY_QUANTUM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("no vectors to average")]
    EmptyInput,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("sense {word}/{sense_id} has no candidate definitions")]
    EmptyGroup { word: String, sense_id: String },
    #[error("groups for different words ({0:?}, {1:?}) passed to one assignment batch")]
    MixedWords(String, String),
}

/// Component-wise arithmetic mean, without normalization.
pub fn mean_embedding(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector, AggregationError> {
    let weighted: Vec<(&EmbeddingVector, f64)> = vectors.iter().map(|v| (v, 1.0)).collect();
    weighted_mean(&weighted)
}

fn weighted_mean(vectors: &[(&EmbeddingVector, f64)]) -> Result<EmbeddingVector, AggregationError> {
    let (first, _) = vectors.first().ok_or(AggregationError::EmptyInput)?;
    let dim = first.dimension();
    let mut sum = vec![0.0; dim];
    let mut total = 0.0;
    for (v, w) in vectors {
        if v.dimension() != dim {
            return Err(AggregationError::DimensionMismatch(dim, v.dimension()));
        }
        for (acc, x) in sum.iter_mut().zip(v.values()) {
            *acc += w * x;
        }
        total += w;
    }
    let mean = sum.into_iter().map(|s| s / total).collect();
    Ok(EmbeddingVector::new(mean).expect("mean of finite vectors is finite"))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, AggregationError> {
    if a.dimension() != b.dimension() {
        return Err(AggregationError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(AggregationError::ZeroVector);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionCandidate {
    pub text: String,
    pub embedding: EmbeddingVector,
    pub frequency: usize,
    /// Filled in by [`rank_candidates`].
    pub similarity_to_prototype: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseGroup {
    pub word: String,
    pub sense_id: String,
    pub candidates: Vec<DefinitionCandidate>,
    pub usage_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SenseGroup {
    /// Builds a group from one generation per usage (`None` for failed
    /// generations). Identical texts collapse into one candidate whose
    /// frequency counts them.
    pub fn from_generations<F>(
        word: impl Into<String>,
        sense_id: impl Into<String>,
        generations: &[Option<String>],
        mut embed: F,
    ) -> Result<Self, AggregationError>
    where
        F: FnMut(&str) -> Option<EmbeddingVector>,
    {
        let word = word.into();
        let sense_id = sense_id.into();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut candidates: Vec<DefinitionCandidate> = Vec::new();
        let mut warnings = Vec::new();
        for text in generations.iter().flatten() {
            let text = text.trim();
            if text.is_empty() {
                continue;
            }
            if let Some(&i) = index.get(text) {
                candidates[i].frequency += 1;
                continue;
            }
            let Some(embedding) = embed(text) else {
                warnings.push(format!("no embedding for candidate {text:?}; dropped"));
                continue;
            };
            if let Some(first) = candidates.first() {
                if first.embedding.dimension() != embedding.dimension() {
                    return Err(AggregationError::DimensionMismatch(
                        first.embedding.dimension(),
                        embedding.dimension(),
                    ));
                }
            }
            index.insert(text, candidates.len());
            candidates.push(DefinitionCandidate {
                text: text.to_owned(),
                embedding,
                frequency: 1,
                similarity_to_prototype: 0.0,
            });
        }
        Ok(SenseGroup {
            word,
            sense_id,
            candidates,
            usage_count: generations.len(),
            warnings,
        })
    }
}

fn quantize(similarity: f64) -> i64 {
    if similarity.is_finite() {
        (similarity / SIMILARITY_QUANTUM).round() as i64
    } else {
        i64::MIN
    }
}

fn by_similarity(a: &DefinitionCandidate, b: &DefinitionCandidate) -> Ordering {
    quantize(b.similarity_to_prototype)
        .cmp(&quantize(a.similarity_to_prototype))
        .then(b.frequency.cmp(&a.frequency))
        .then_with(|| a.text.cmp(&b.text))
}

fn by_frequency(a: &DefinitionCandidate, b: &DefinitionCandidate) -> Ordering {
    b.frequency
        .cmp(&a.frequency)
        .then(quantize(b.similarity_to_prototype).cmp(&quantize(a.similarity_to_prototype)))
        .then_with(|| a.text.cmp(&b.text))
}

/// Scores every candidate against the frequency-weighted prototype and sorts
/// by (similarity desc, frequency desc, text asc).
pub fn rank_candidates(group: &SenseGroup) -> Result<SenseGroup, AggregationError> {
    if group.candidates.is_empty() {
        return Err(AggregationError::EmptyGroup {
            word: group.word.clone(),
            sense_id: group.sense_id.clone(),
        });
    }
    let mut ranked = group.clone();
    // canonical summation order, so the prototype does not depend on input order
    ranked.candidates.sort_by(|a, b| a.text.cmp(&b.text));
    let weighted: Vec<(&EmbeddingVector, f64)> = ranked
        .candidates
        .iter()
        .map(|c| (&c.embedding, c.frequency as f64))
        .collect();
    let prototype = weighted_mean(&weighted)?;
    let mut similarities = Vec::with_capacity(ranked.candidates.len());
    for c in &ranked.candidates {
        similarities.push(match cosine(&c.embedding, &prototype) {
            Ok(s) => s,
            Err(AggregationError::ZeroVector) => {
                let msg = format!(
                    "{}/{}: zero similarity basis for {:?}; ranked last",
                    group.word, group.sense_id, c.text
                );
                log::warn!("{msg}");
                ranked.warnings.push(msg);
                ZERO_VECTOR_SIMILARITY
            }
            Err(e) => return Err(e),
        });
    }
    for (c, s) in ranked.candidates.iter_mut().zip(similarities) {
        c.similarity_to_prototype = s;
    }
    ranked.candidates.sort_by(by_similarity);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateOrdering {
    #[default]
    PrototypeSimilarity,
    Frequency,
}

impl FromStr for CandidateOrdering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prototype_similarity" => Ok(CandidateOrdering::PrototypeSimilarity),
            "frequency" => Ok(CandidateOrdering::Frequency),
            other => Err(format!(
                "unknown ordering {other:?} (expected prototype_similarity or frequency)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseLabelAssignment {
    pub word: String,
    pub sense_id: String,
    pub label: String,
    /// Position of the accepted candidate in the ranked list.
    pub rank_used: usize,
    /// True when every candidate was already taken by another sense.
    pub fallback: bool,
}

/// Labels the senses of one word.
///
/// Senses are visited by (usage count desc, sense_id asc); each takes the
/// first candidate in its ranked list that no earlier sense has taken, or its
/// top candidate with `fallback = true` when none is left.
pub fn assign_sense_labels(
    groups: &[SenseGroup],
    ordering: CandidateOrdering,
) -> Result<Vec<SenseLabelAssignment>, AggregationError> {
    if let Some(first) = groups.first() {
        if let Some(other) = groups.iter().find(|g| g.word != first.word) {
            return Err(AggregationError::MixedWords(first.word.clone(), other.word.clone()));
        }
    }
    let mut ranked = groups.iter().map(rank_candidates).collect::<Result<Vec<_>, _>>()?;
    if ordering == CandidateOrdering::Frequency {
        for g in &mut ranked {
            g.candidates.sort_by(by_frequency);
        }
    }
    ranked.sort_by(|a, b| {
        b.usage_count
            .cmp(&a.usage_count)
            .then_with(|| a.sense_id.cmp(&b.sense_id))
    });

    let mut taken: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(ranked.len());
    for g in ranked {
        let free = g.candidates.iter().position(|c| !taken.contains(&c.text));
        let (rank_used, fallback) = match free {
            Some(i) => (i, false),
            None => (0, true),
        };
        let label = g.candidates[rank_used].text.clone();
        taken.insert(label.clone());
        out.push(SenseLabelAssignment {
            word: g.word,
            sense_id: g.sense_id,
            label,
            rank_used,
            fallback,
        });
    }
    Ok(out)
}

/// Partitions groups by word and labels each word independently. Words are
/// returned in ascending order; groups without candidates are reported and skipped.
pub fn assign_all(
    groups: Vec<SenseGroup>,
    ordering: CandidateOrdering,
) -> Result<(Vec<SenseLabelAssignment>, Vec<String>), AggregationError> {
    let mut by_word: BTreeMap<String, Vec<SenseGroup>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for g in groups {
        warnings.extend(g.warnings.iter().cloned());
        if g.candidates.is_empty() {
            warnings.push(format!(
                "{}/{}: no usable generations; sense left unlabeled",
                g.word, g.sense_id
            ));
            continue;
        }
        by_word.entry(g.word.clone()).or_default().push(g);
    }
    let mut out = Vec::new();
    for groups in by_word.values() {
        out.extend(assign_sense_labels(groups, ordering)?);
    }
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn cand(text: &str, e: &[f64], frequency: usize) -> DefinitionCandidate {
        DefinitionCandidate {
            text: text.into(),
            embedding: v(e),
            frequency,
            similarity_to_prototype: 0.0,
        }
    }

    fn group(sense: &str, usage_count: usize, candidates: Vec<DefinitionCandidate>) -> SenseGroup {
        SenseGroup {
            word: "w".into(),
            sense_id: sense.into(),
            candidates,
            usage_count,
            warnings: vec![],
        }
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            mean_embedding(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap(),
            v(&[0.5, 0.5])
        );
        assert_eq!(mean_embedding(&[v(&[3.0, -1.0])]).unwrap(), v(&[3.0, -1.0]));
        let m = mean_embedding(&[v(&[1.0, 0.0]), v(&[0.9, 0.1]), v(&[0.0, 1.0])]).unwrap();
        assert!((m.values()[0] - 1.9 / 3.0).abs() < 1e-15);
        assert!((m.values()[1] - 1.1 / 3.0).abs() < 1e-15);
        assert_eq!(mean_embedding(&[]), Err(AggregationError::EmptyInput));
        assert_eq!(
            mean_embedding(&[v(&[1.0]), v(&[1.0, 2.0])]),
            Err(AggregationError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[0.9, 0.1]), &v(&[0.6333, 0.3667])).unwrap();
        assert!((c - 0.9155).abs() < 1e-4, "{c}");
        assert_eq!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(AggregationError::ZeroVector)
        );
    }

    #[test]
    fn ranks_three_candidates() {
        let g = group(
            "s",
            3,
            vec![
                cand("one", &[1.0, 0.0], 1),
                cand("near", &[0.9, 0.1], 1),
                cand("other", &[0.0, 1.0], 1),
            ],
        );
        let r = rank_candidates(&g).unwrap();
        let texts: Vec<_> = r.candidates.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["near", "one", "other"]);
        let sims: Vec<_> = r.candidates.iter().map(|c| c.similarity_to_prototype).collect();
        assert!((sims[0] - 0.9155).abs() < 1e-4);
        assert!((sims[1] - 0.8654).abs() < 1e-4);
        assert!((sims[2] - 0.5011).abs() < 1e-4);
    }

    #[test]
    fn singleton_and_ties() {
        let r = rank_candidates(&group("s", 1, vec![cand("only", &[2.0, 1.0], 1)])).unwrap();
        assert!((r.candidates[0].similarity_to_prototype - 1.0).abs() < 1e-15);

        let r = rank_candidates(&group(
            "s",
            3,
            vec![
                cand("b", &[1.0, 1.0], 1),
                cand("a", &[1.0, 1.0], 1),
                cand("c", &[1.0, 1.0], 2),
            ],
        ))
        .unwrap();
        let texts: Vec<_> = r.candidates.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["c", "a", "b"]);
    }

    #[test]
    fn zero_embedding_ranked_last() {
        let r = rank_candidates(&group(
            "s",
            2,
            vec![cand("zero", &[0.0, 0.0], 5), cand("real", &[1.0, 0.0], 1)],
        ))
        .unwrap();
        assert_eq!(r.candidates[1].text, "zero");
        assert_eq!(r.candidates[1].similarity_to_prototype, ZERO_VECTOR_SIMILARITY);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn frequency_weights_prototype() {
        // "a" repeated three times pulls the prototype towards itself
        let r = rank_candidates(&group(
            "s",
            4,
            vec![cand("a", &[1.0, 0.0], 3), cand("b", &[0.0, 1.0], 1)],
        ))
        .unwrap();
        assert_eq!(r.candidates[0].text, "a");
    }

    #[test]
    fn disjoint_senses() {
        let groups = [
            group("s1", 2, vec![cand("x", &[1.0, 0.0], 2)]),
            group("s2", 1, vec![cand("y", &[0.0, 1.0], 1)]),
        ];
        let out = assign_sense_labels(&groups, CandidateOrdering::default()).unwrap();
        assert_eq!(out[0].label, "x");
        assert_eq!(out[1].label, "y");
        assert!(out.iter().all(|a| a.rank_used == 0 && !a.fallback));
    }

    #[test]
    fn conflict_moves_to_next_candidate() {
        let groups = [
            group(
                "s2",
                2,
                vec![cand("shared", &[1.0, 0.0], 1), cand("own", &[0.6, 0.4], 1)],
            ),
            group("s1", 3, vec![cand("shared", &[1.0, 0.0], 3)]),
        ];
        let out = assign_sense_labels(&groups, CandidateOrdering::PrototypeSimilarity).unwrap();
        assert_eq!(out[0].sense_id, "s1");
        assert_eq!((out[0].label.as_str(), out[0].rank_used), ("shared", 0));
        assert_eq!(out[1].sense_id, "s2");
        assert_eq!(
            (out[1].label.as_str(), out[1].rank_used, out[1].fallback),
            ("own", 1, false)
        );
    }

    #[test]
    fn exhaustion_falls_back() {
        let groups = [
            group("s1", 2, vec![cand("same", &[1.0, 0.0], 2)]),
            group("s2", 1, vec![cand("same", &[1.0, 0.0], 1)]),
        ];
        let out = assign_sense_labels(&groups, CandidateOrdering::PrototypeSimilarity).unwrap();
        assert_eq!(out[0].label, "same");
        assert!(!out[0].fallback);
        assert_eq!(out[1].label, "same");
        assert!(out[1].fallback);
        assert_eq!(out[1].rank_used, 0);
    }

    #[test]
    fn frequency_ordering_differs() {
        // prototype winner "mid" has frequency 1; "far" has frequency 2
        let g = group(
            "s",
            4,
            vec![
                cand("far", &[1.0, 0.0], 2),
                cand("mid", &[0.8, 0.6], 1),
                cand("other", &[0.0, 1.0], 1),
            ],
        );
        let by_proto = assign_sense_labels(std::slice::from_ref(&g), CandidateOrdering::PrototypeSimilarity).unwrap();
        let by_freq = assign_sense_labels(&[g], CandidateOrdering::Frequency).unwrap();
        assert_eq!(by_proto[0].label, "mid");
        assert_eq!(by_freq[0].label, "far");
    }

    #[test]
    fn errors() {
        let empty = group("s", 1, vec![]);
        assert!(matches!(
            assign_sense_labels(&[empty], CandidateOrdering::default()),
            Err(AggregationError::EmptyGroup { .. })
        ));
        let mut other = group("s", 1, vec![cand("x", &[1.0], 1)]);
        other.word = "v".into();
        assert!(matches!(
            assign_sense_labels(
                &[group("t", 1, vec![cand("x", &[1.0], 1)]), other],
                CandidateOrdering::default()
            ),
            Err(AggregationError::MixedWords(..))
        ));
    }

    #[test]
    fn groups_from_generations() {
        let gens = vec![
            Some("a thing".to_owned()),
            None,
            Some(" a thing ".to_owned()),
            Some("another".to_owned()),
        ];
        let mut calls = 0;
        let g = SenseGroup::from_generations("w", "s", &gens, |t| {
            calls += 1;
            Some(v(&[t.len() as f64, 1.0]))
        })
        .unwrap();
        assert_eq!(calls, 2);
        assert_eq!(g.usage_count, 4);
        assert_eq!(g.candidates.len(), 2);
        assert_eq!(g.candidates.iter().map(|c| c.frequency).sum::<usize>(), 3);
    }

    #[test]
    fn assign_all_partitions_words() {
        let mut a = group("s1", 1, vec![cand("x", &[1.0], 1)]);
        a.word = "b-word".into();
        let mut b = group("s1", 1, vec![cand("x", &[1.0], 1)]);
        b.word = "a-word".into();
        let mut c = group("s2", 1, vec![]);
        c.word = "a-word".into();
        let (out, warnings) = assign_all(vec![a, b, c], CandidateOrdering::default()).unwrap();
        assert_eq!(
            out.iter().map(|a| a.word.as_str()).collect::<Vec<_>>(),
            ["a-word", "b-word"]
        );
        // same label across different words is not a conflict
        assert!(out.iter().all(|a| !a.fallback));
        assert_eq!(warnings.len(), 1);
    }
}
