//! Aspect assignment by cosine similarity against seed-term anchors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::embedding::{Encoder, SentenceEmbedding, TokenEmbeddingMatrix, TokenSequence, Vocab};
use crate::embedding::{sentence_embedding, tokenize};
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::scalar::{dot, mean_vectors, Scalar};

/// Aspect name. Defaults to inflation, growth and employment; the anchor
/// file may define others.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AspectLabel(pub String);

impl AspectLabel {
    pub fn new(name: impl Into<String>) -> Self {
        AspectLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn defaults() -> Vec<AspectLabel> {
        ["inflation", "growth", "employment"].into_iter().map(AspectLabel::new).collect()
    }
}

impl fmt::Display for AspectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One entry of the anchor configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub label: AspectLabel,
    pub seeds: Vec<String>,
}

impl AnchorSpec {
    pub fn defaults() -> Vec<AnchorSpec> {
        AspectLabel::defaults()
            .into_iter()
            .map(|label| AnchorSpec {
                seeds: vec![label.0.clone()],
                label,
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Vec<AnchorSpec>> {
        let specs: Vec<AnchorSpec> = read_json(path)?;
        validate_specs(&specs)?;
        Ok(specs)
    }
}

pub fn validate_specs(specs: &[AnchorSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("anchor list is empty".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for s in specs {
        if s.seeds.is_empty() {
            return Err(Error::Config(format!("anchor {} has no seed terms", s.label)));
        }
        if !seen.insert(&s.label) {
            return Err(Error::Config(format!("duplicate anchor label {}", s.label)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AspectAnchor<T> {
    pub label: AspectLabel,
    pub seed_terms: Vec<String>,
    pub anchor_vector: SentenceEmbedding<T>,
}

/// Per-sentence decision. `label` is `None` for unclassified sentences
/// (degenerate embedding, or best score below the optional threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectAssignment {
    pub doc_id: String,
    pub sent_index: usize,
    pub label: Option<AspectLabel>,
    pub scores: BTreeMap<AspectLabel, f64>,
}

/// Cosine of the angle between `u` and `v`, clamped to [-1, 1].
pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if !(nu > T::zero() && nv > T::zero()) || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::DegenerateVector);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Anchor vector = mean of the sentence embeddings of the seed terms.
pub fn build_anchor<T: Scalar, E: Encoder<T> + ?Sized>(
    label: AspectLabel,
    seed_terms: &[String],
    vocab: &Vocab,
    backend: &E,
) -> Result<AspectAnchor<T>> {
    if seed_terms.is_empty() {
        return Err(Error::Config(format!("anchor {label} has no seed terms")));
    }
    let embs = seed_terms
        .iter()
        .map(|s| sentence_embedding(&tokenize(s, vocab)?, backend))
        .collect::<Result<Vec<_>>>()?;
    let v = mean_vectors(embs.iter().map(|e| e.vector.as_slice())).expect("non-empty seeds");
    anchor_from_vector(label, seed_terms.to_vec(), v)
}

pub fn anchor_from_vector<T: Scalar>(label: AspectLabel, seed_terms: Vec<String>, v: Vec<T>) -> Result<AspectAnchor<T>> {
    let anchor_vector = SentenceEmbedding::new(v, crate::embedding::Pooling::SentenceMean);
    if anchor_vector.is_degenerate() {
        return Err(Error::DegenerateVector);
    }
    Ok(AspectAnchor {
        label,
        seed_terms,
        anchor_vector,
    })
}

/// Label with the highest score; ties go to the lexicographically smallest name.
fn argmax(scores: &BTreeMap<AspectLabel, f64>) -> Option<AspectLabel> {
    let mut best: Option<(&AspectLabel, f64)> = None;
    // BTreeMap iterates in name order, so a strict `>` keeps the first name on ties.
    for (label, &s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((label, s));
        }
    }
    best.map(|(l, _)| l.clone())
}

fn assignment(
    doc_id: &str,
    sent_index: usize,
    scores: Result<BTreeMap<AspectLabel, f64>>,
    min_cos: Option<f64>,
) -> Result<AspectAssignment> {
    let (label, scores) = match scores {
        Ok(scores) => {
            let label = argmax(&scores).filter(|l| min_cos.is_none_or(|m| scores[l] >= m));
            (label, scores)
        }
        Err(Error::DegenerateVector) => {
            warn!("{doc_id}#{sent_index}: degenerate embedding, left unclassified");
            (None, BTreeMap::new())
        }
        Err(e) => return Err(e),
    };
    Ok(AspectAssignment {
        doc_id: doc_id.to_string(),
        sent_index,
        label,
        scores,
    })
}

fn check_anchors<T>(anchors: &[AspectAnchor<T>]) -> Result<()> {
    if anchors.is_empty() {
        return Err(Error::Config("at least one anchor required".into()));
    }
    Ok(())
}

/// Scores a sentence embedding against every anchor and picks the argmax.
pub fn classify_aspect<T: Scalar>(
    doc_id: &str,
    sent_index: usize,
    emb: &SentenceEmbedding<T>,
    anchors: &[AspectAnchor<T>],
    min_cos: Option<f64>,
) -> Result<AspectAssignment> {
    check_anchors(anchors)?;
    let scores = anchors
        .iter()
        .map(|a| Ok((a.label.clone(), cosine_similarity(&emb.vector, &a.anchor_vector.vector)?.to_f64_lossy())))
        .collect();
    assignment(doc_id, sent_index, scores, min_cos)
}

/// Word-level variant: an anchor's score is the maximum cosine over the
/// content-token rows.
pub fn classify_aspect_wordlevel<T: Scalar>(
    doc_id: &str,
    sent_index: usize,
    mat: &TokenEmbeddingMatrix<T>,
    anchors: &[AspectAnchor<T>],
    min_cos: Option<f64>,
) -> Result<AspectAssignment> {
    check_anchors(anchors)?;
    if mat.content_rows().next().is_none() {
        return Err(Error::NoContentTokens);
    }
    let scores = anchors
        .iter()
        .map(|a| {
            let mut best: Option<T> = None;
            for row in mat.content_rows() {
                let c = cosine_similarity(row, &a.anchor_vector.vector)?;
                best = Some(best.map_or(c, |b| b.max(c)));
            }
            Ok((a.label.clone(), best.expect("content rows").to_f64_lossy()))
        })
        .collect();
    assignment(doc_id, sent_index, scores, min_cos)
}

/// Number of classified sentences per label; every anchor label is present.
pub fn aspect_distribution(
    labels: &[AspectLabel],
    assignments: &[AspectAssignment],
) -> BTreeMap<AspectLabel, usize> {
    let mut counts: BTreeMap<AspectLabel, usize> = labels.iter().map(|l| (l.clone(), 0)).collect();
    for a in assignments {
        if let Some(l) = &a.label {
            *counts.entry(l.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Shannon entropy (natural log) of the normalized counts; 0 for no mass.
pub fn entropy(counts: &BTreeMap<AspectLabel, usize>) -> f64 {
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * (total as f64 / c as f64).ln()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingComparison {
    pub n_sentences: usize,
    pub entropy_sentence: f64,
    pub entropy_word: f64,
    pub counts_sentence: BTreeMap<AspectLabel, usize>,
    pub counts_word: BTreeMap<AspectLabel, usize>,
}

/// Classifies every sequence under both sentence-mean and word-level pooling
/// and reports the balance (entropy) of each label distribution.
pub fn compare_pooling<T: Scalar, E: Encoder<T> + ?Sized>(
    seqs: &[(String, usize, TokenSequence)],
    anchors: &[AspectAnchor<T>],
    backend: &E,
    batch_size: usize,
) -> Result<PoolingComparison> {
    if seqs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let labels: Vec<AspectLabel> = anchors.iter().map(|a| a.label.clone()).collect();
    let mut by_sentence = Vec::with_capacity(seqs.len());
    let mut by_word = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(batch_size.max(1)) {
        let batch: Vec<TokenSequence> = chunk.iter().map(|(_, _, s)| s.clone()).collect();
        let states = backend.encode_batch(&batch)?;
        for ((doc_id, idx, seq), st) in chunk.iter().zip(&states) {
            let words = crate::embedding::pool_layers(seq, st)?;
            let sent = crate::embedding::pool_content(&words)?;
            by_sentence.push(classify_aspect(doc_id, *idx, &sent, anchors, None)?);
            by_word.push(classify_aspect_wordlevel(doc_id, *idx, &words, anchors, None)?);
        }
    }
    let counts_sentence = aspect_distribution(&labels, &by_sentence);
    let counts_word = aspect_distribution(&labels, &by_word);
    Ok(PoolingComparison {
        n_sentences: seqs.len(),
        entropy_sentence: entropy(&counts_sentence),
        entropy_word: entropy(&counts_word),
        counts_sentence,
        counts_word,
    })
}
