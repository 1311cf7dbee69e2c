//! Sentence sentiment (dense head over the [CLS] state) and aggregation into
//! monthly per-aspect net-tone series.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aspect::{AspectAssignment, AspectLabel};
use crate::embedding::SentenceEmbedding;
use crate::error::{Error, Result};
use crate::io::{read_json, write_atomic};
use crate::month::YearMonth;
use crate::scalar::{dot, Scalar};

/// Class order of the classifier outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `labels.json` sidecar written next to the classifier graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelsSidecar {
    pub labels: Vec<String>,
}

impl LabelsSidecar {
    pub fn expected() -> Self {
        LabelsSidecar {
            labels: SentimentLabel::ALL.iter().map(|l| l.as_str().to_string()).collect(),
        }
    }

    /// Fails unless the sidecar lists exactly positive, negative, neutral.
    pub fn check(path: &Path) -> Result<()> {
        let found: LabelsSidecar = read_json(path)?;
        if found != Self::expected() {
            return Err(Error::Config(format!(
                "{}: class order must be [\"positive\",\"negative\",\"neutral\"], found {:?}",
                path.display(),
                found.labels
            )));
        }
        Ok(())
    }
}

/// Dense classification head: `logits = W·x + b`, `W` is `3 × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead<T> {
    pub weight: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseHead<T> {
    pub fn zeros(d: usize) -> Self {
        DenseHead {
            weight: vec![vec![T::zero(); d]; 3],
            bias: vec![T::zero(); 3],
        }
    }

    /// Gaussian head (std `1/sqrt(d)`) for the stub backend.
    pub fn stub(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e47_1e47);
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        DenseHead {
            weight: (0..3)
                .map(|_| (0..d).map(|_| T::lit(normal.sample(&mut rng))).collect())
                .collect(),
            bias: vec![T::zero(); 3],
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        if self.weight.len() != 3 || self.bias.len() != 3 {
            return Err(Error::Config("dense head must have 3 output classes".into()));
        }
        let d = self.dim();
        if let Some(row) = self.weight.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[T]) -> Result<[T; 3]> {
        self.validate()?;
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok([0, 1, 2].map(|k| dot(&self.weight[k], x) + self.bias[k]))
    }
}

impl DenseHead<f64> {
    pub fn load(path: &Path) -> Result<Self> {
        let head: Self = read_json(path)?;
        head.validate()?;
        Ok(head)
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub doc_id: String,
    pub sent_index: usize,
    pub probs: [f64; 3],
    pub label: SentimentLabel,
}

/// Turns raw logits into a prediction; ties resolve positive < negative < neutral.
pub fn prediction_from_logits<T: Scalar>(doc_id: &str, sent_index: usize, logits: &[T]) -> Result<SentencePrediction> {
    if logits.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            actual: logits.len(),
        });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFiniteLogits(format!("{doc_id}#{sent_index}")));
    }
    let p = softmax(logits);
    let probs = [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()];
    let mut best = 0;
    for k in 1..3 {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    Ok(SentencePrediction {
        doc_id: doc_id.to_string(),
        sent_index,
        probs,
        label: SentimentLabel::ALL[best],
    })
}

pub fn classify_sentiment<T: Scalar>(
    doc_id: &str,
    sent_index: usize,
    cls_vec: &SentenceEmbedding<T>,
    head: &DenseHead<T>,
) -> Result<SentencePrediction> {
    let logits = head.logits(&cls_vec.vector)?;
    prediction_from_logits(doc_id, sent_index, &logits)
}

/// Largest absolute difference between two logit tables.
pub fn max_logit_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Sentence counts and net tone of one aspect within one document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectTone {
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_neu: usize,
}

impl AspectTone {
    pub fn n(&self) -> usize {
        self.n_pos + self.n_neg + self.n_neu
    }

    /// `(n_pos - n_neg) / n`.
    pub fn score(&self) -> f64 {
        (self.n_pos as f64 - self.n_neg as f64) / self.n() as f64
    }
}

/// Per-aspect tone of one document. Only aspects with at least one
/// classified sentence appear.
pub fn document_aspect_score(
    preds: &[SentencePrediction],
    assigns: &[AspectAssignment],
    doc_id: &str,
) -> Result<BTreeMap<AspectLabel, AspectTone>> {
    let pred_map: HashMap<usize, SentimentLabel> = preds
        .iter()
        .filter(|p| p.doc_id == doc_id)
        .map(|p| (p.sent_index, p.label))
        .collect();
    let assign_keys: BTreeSet<usize> = assigns
        .iter()
        .filter(|a| a.doc_id == doc_id)
        .map(|a| a.sent_index)
        .collect();
    let pred_keys: BTreeSet<usize> = pred_map.keys().copied().collect();
    if pred_keys != assign_keys {
        let orphans: Vec<String> = pred_keys
            .symmetric_difference(&assign_keys)
            .map(|i| format!("({doc_id}, {i})"))
            .collect();
        return Err(Error::JoinMismatch(orphans.join(", ")));
    }

    let mut tones: BTreeMap<AspectLabel, AspectTone> = BTreeMap::new();
    for a in assigns.iter().filter(|a| a.doc_id == doc_id) {
        let Some(label) = &a.label else { continue };
        let t = tones.entry(label.clone()).or_insert(AspectTone {
            n_pos: 0,
            n_neg: 0,
            n_neu: 0,
        });
        match pred_map[&a.sent_index] {
            SentimentLabel::Positive => t.n_pos += 1,
            SentimentLabel::Negative => t.n_neg += 1,
            SentimentLabel::Neutral => t.n_neu += 1,
        }
    }
    Ok(tones)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentScores {
    pub doc_id: String,
    pub meeting_date: NaiveDate,
    pub tones: BTreeMap<AspectLabel, AspectTone>,
}

/// One row of the monthly series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub month: YearMonth,
    pub aspect: AspectLabel,
    pub score: f64,
    pub n_sentences: usize,
}

/// Month score = unweighted mean of the document scores dated in that month.
/// Rows are ordered by (month, aspect); months without documents are absent.
pub fn build_series(docs: &[DocumentScores]) -> Vec<SeriesRow> {
    let mut groups: BTreeMap<(YearMonth, AspectLabel), (Vec<f64>, usize)> = BTreeMap::new();
    for d in docs {
        let month = YearMonth::of(d.meeting_date);
        for (aspect, tone) in &d.tones {
            let g = groups.entry((month, aspect.clone())).or_default();
            g.0.push(tone.score());
            g.1 += tone.n();
        }
    }
    groups
        .into_iter()
        .map(|((month, aspect), (scores, n))| SeriesRow {
            month,
            aspect,
            score: scores.iter().sum::<f64>() / scores.len() as f64,
            n_sentences: n,
        })
        .collect()
}

/// Monthly scores of one aspect.
pub fn aspect_series(rows: &[SeriesRow], aspect: &AspectLabel) -> BTreeMap<YearMonth, f64> {
    rows.iter()
        .filter(|r| &r.aspect == aspect)
        .map(|r| (r.month, r.score))
        .collect()
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    write_atomic(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["month", "aspect", "score", "n_sentences"])?;
        for r in rows {
            wtr.write_record([
                r.month.to_string(),
                r.aspect.to_string(),
                r.score.to_string(),
                r.n_sentences.to_string(),
            ])?;
        }
        wtr.flush()
    })
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Pooling;
    use proptest::prelude::*;
    use SentimentLabel::*;

    fn pred(doc: &str, i: usize, label: SentimentLabel) -> SentencePrediction {
        SentencePrediction {
            doc_id: doc.into(),
            sent_index: i,
            probs: [0.0; 3],
            label,
        }
    }

    fn assign(doc: &str, i: usize, aspect: Option<&str>) -> AspectAssignment {
        AspectAssignment {
            doc_id: doc.into(),
            sent_index: i,
            label: aspect.map(AspectLabel::new),
            scores: BTreeMap::new(),
        }
    }

    #[test]
    fn zero_head_is_uniform() {
        let cls = SentenceEmbedding::new(vec![0.3, -1.0, 2.0], Pooling::Cls);
        let p = classify_sentiment("d", 0, &cls, &DenseHead::<f64>::zeros(3)).unwrap();
        for q in p.probs {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(p.label, Positive);
    }

    #[test]
    fn biased_head_closed_form() {
        let mut head = DenseHead::<f64>::zeros(2);
        head.bias = vec![10.0, 0.0, 0.0];
        let cls = SentenceEmbedding::new(vec![1.0, 1.0], Pooling::Cls);
        let p = classify_sentiment("d", 0, &cls, &head).unwrap();
        let e10 = 10f64.exp();
        let expected = e10 / (e10 + 2.0);
        assert_eq!(p.label, Positive);
        assert!((p.probs[0] - expected).abs() < 1e-12);
        assert!((p.probs[0] - 0.99991).abs() < 1e-5);
    }

    #[test]
    fn tie_break_order() {
        assert_eq!(prediction_from_logits("d", 0, &[0.0, 1.0, 1.0]).unwrap().label, Negative);
        assert_eq!(prediction_from_logits("d", 0, &[0.0, 0.0, 1.0]).unwrap().label, Neutral);
    }

    #[test]
    fn non_finite_logits() {
        assert!(matches!(
            prediction_from_logits("d", 3, &[f64::NAN, 0.0, 0.0]),
            Err(Error::NonFiniteLogits(p)) if p == "d#3"
        ));
    }

    #[test]
    fn head_dimension_mismatch() {
        let cls = SentenceEmbedding::new(vec![1.0; 4], Pooling::Cls);
        assert!(matches!(
            classify_sentiment("d", 0, &cls, &DenseHead::<f64>::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(z in prop::array::uniform3(-30.0f64..30.0), c in -50.0f64..50.0) {
            let p = softmax(&z);
            let q = softmax(&z.map(|x| x + c));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((0.0..=1.0).contains(a));
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn net_tone_bounded_and_monotone(labels in prop::collection::vec(0usize..3, 1..30), flip in any::<prop::sample::Index>()) {
            let preds: Vec<_> = labels.iter().enumerate().map(|(i, &k)| pred("d", i, SentimentLabel::ALL[k])).collect();
            let assigns: Vec<_> = (0..labels.len()).map(|i| assign("d", i, Some("growth"))).collect();
            let t = document_aspect_score(&preds, &assigns, "d").unwrap()[&AspectLabel::new("growth")];
            prop_assert!((-1.0..=1.0).contains(&t.score()));
            prop_assert_eq!(t.score() == 1.0, labels.iter().all(|&k| k == 0));
            prop_assert_eq!(t.score() == -1.0, labels.iter().all(|&k| k == 1));

            let neutrals: Vec<usize> = labels.iter().enumerate().filter(|(_, &k)| k == 2).map(|(i, _)| i).collect();
            if !neutrals.is_empty() {
                let j = neutrals[flip.index(neutrals.len())];
                let mut flipped = preds.clone();
                flipped[j].label = Positive;
                let t2 = document_aspect_score(&flipped, &assigns, "d").unwrap()[&AspectLabel::new("growth")];
                prop_assert!(t2.score() >= t.score());
            }
        }
    }

    #[test]
    fn document_score_counting() {
        let preds = vec![
            pred("d", 0, Positive),
            pred("d", 1, Positive),
            pred("d", 2, Negative),
            pred("d", 3, Neutral),
            pred("d", 4, Neutral),
            pred("e", 0, Negative),
        ];
        let assigns = vec![
            assign("d", 0, Some("growth")),
            assign("d", 1, Some("growth")),
            assign("d", 2, Some("growth")),
            assign("d", 3, Some("growth")),
            assign("d", 4, Some("inflation")),
            assign("e", 0, Some("growth")),
        ];
        let s = document_aspect_score(&preds, &assigns, "d").unwrap();
        assert_eq!(s[&AspectLabel::new("growth")].score(), 0.25);
        assert_eq!(s[&AspectLabel::new("inflation")].score(), 0.0);
        assert!(!s.contains_key(&AspectLabel::new("employment")));
        // conservation: counts across aspects = classified sentences of d
        assert_eq!(s.values().map(AspectTone::n).sum::<usize>(), 5);
    }

    #[test]
    fn unclassified_excluded() {
        let preds = vec![pred("d", 0, Positive), pred("d", 1, Negative)];
        let assigns = vec![assign("d", 0, Some("growth")), assign("d", 1, None)];
        let s = document_aspect_score(&preds, &assigns, "d").unwrap();
        assert_eq!(s[&AspectLabel::new("growth")].n(), 1);
    }

    #[test]
    fn join_mismatch_lists_orphans() {
        let preds = vec![pred("d", 0, Positive), pred("d", 2, Positive)];
        let assigns = vec![assign("d", 0, Some("growth")), assign("d", 1, Some("growth"))];
        match document_aspect_score(&preds, &assigns, "d") {
            Err(Error::JoinMismatch(keys)) => assert_eq!(keys, "(d, 1), (d, 2)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn doc(id: &str, date: &str, aspect: &str, pos: usize, neg: usize, neu: usize) -> DocumentScores {
        DocumentScores {
            doc_id: id.into(),
            meeting_date: date.parse().unwrap(),
            tones: [(AspectLabel::new(aspect), AspectTone { n_pos: pos, n_neg: neg, n_neu: neu })].into(),
        }
    }

    #[test]
    fn monthly_mean() {
        // growth scores 0.2 and 0.4
        let docs = vec![
            doc("a", "2019-06-05", "growth", 3, 2, 0),
            doc("b", "2019-06-19", "growth", 2, 0, 3),
            doc("c", "2019-08-01", "growth", 1, 0, 0),
        ];
        let rows = build_series(&docs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].month.to_string(), "2019-06");
        assert!((rows[0].score - 0.3).abs() < 1e-15);
        assert_eq!(rows[0].n_sentences, 10);
        assert_eq!(rows[1].month.to_string(), "2019-08");
        assert_eq!(rows[1].score, 1.0);
    }

    #[test]
    fn series_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("series.csv");
        let rows = build_series(&[doc("a", "2019-06-05", "growth", 1, 2, 0)]);
        write_series_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "month,aspect,score,n_sentences\n2019-06,growth,-0.3333333333333333,3\n");
        assert_eq!(read_series_csv(&p).unwrap(), rows);
    }

    #[test]
    fn sidecar_order_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.json");
        std::fs::write(&p, r#"{"labels": ["positive","negative","neutral"]}"#).unwrap();
        assert!(LabelsSidecar::check(&p).is_ok());
        std::fs::write(&p, r#"{"labels": ["negative","positive","neutral"]}"#).unwrap();
        assert!(LabelsSidecar::check(&p).is_err());
    }
}
