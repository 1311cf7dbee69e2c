//! Stage orchestration with file-based handoff.
//!
//! Every stage reads its inputs from, and writes its outputs atomically to,
//! the configured output directory:
//!
//! | stage             | reads                                        | writes |
//! |-------------------|----------------------------------------------|--------|
//! | `ingest`          | corpus directory                             | `sentences.jsonl` |
//! | `embed`           | `sentences.jsonl`                            | `embeddings.jsonl`, `embed_stats.json` |
//! | `aspects`         | `embeddings.jsonl` (word pooling: live model)| `aspects.jsonl`, `aspect_counts.json` |
//! | `sentiment`       | `embeddings.jsonl` or classifier graph       | `predictions.jsonl` |
//! | `series`          | sentences, aspects, predictions              | `series.csv` |
//! | `regress`         | `series.csv`, macro CSVs                     | `regression.json`, `regression.txt` |
//! | `stats`           | corpus directory, `sentences.jsonl`          | `stats.json` |
//! | `compare-pooling` | `sentences.jsonl`, live model                | `pooling_comparison.json` |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aspect::{
    anchor_from_vector, aspect_distribution, build_anchor, classify_aspect, classify_aspect_wordlevel,
    compare_pooling, AnchorSpec, AspectAnchor, AspectAssignment, AspectLabel,
};
use crate::corpus::{corpus_stats, ingest_document, load_corpus, Blacklist, Sentence};
use crate::embedding::cache::{CacheRecord, EmbeddingCache, ANCHOR_DOC_PREFIX};
use crate::embedding::stub::StubEncoder;
use crate::embedding::{BackendMode, Embedder, EmbeddingBackendConfig, Pooling, Vocab};
use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_atomic, write_json, write_jsonl};
use crate::regression::report::{plot_svg, write_report};
use crate::regression::{load_macro_csv, regress, RegressionResult};
use crate::sentiment::{
    build_series, classify_sentiment, document_aspect_score, aspect_series, max_logit_deviation,
    read_series_csv, write_series_csv, DenseHead, DocumentScores, LabelsSidecar, SentencePrediction,
};

pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const EMBED_STATS_FILE: &str = "embed_stats.json";
pub const ASPECTS_FILE: &str = "aspects.jsonl";
pub const ASPECT_COUNTS_FILE: &str = "aspect_counts.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SERIES_FILE: &str = "series.csv";
pub const REGRESSION_STEM: &str = "regression";
pub const STATS_FILE: &str = "stats.json";
pub const POOLING_FILE: &str = "pooling_comparison.json";

/// Maximum |logit| deviation tolerated between the classifier graph and the
/// explicit head applied to the encoder's [CLS] state.
pub const HEAD_PARITY_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingChoice {
    #[default]
    Sentence,
    Word,
}

impl FromStr for PoolingChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(PoolingChoice::Sentence),
            "word" => Ok(PoolingChoice::Word),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

/// One macro regression run by `regress` / `run-all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub aspect: AspectLabel,
    pub indicator: String,
    #[serde(rename = "macro")]
    pub macro_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: Option<PathBuf>,
    pub blacklist_path: Option<PathBuf>,
    pub encoder_path: Option<PathBuf>,
    pub classifier_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub anchors_path: Option<PathBuf>,
    /// Explicit dense head (`{"weight": [[..]], "bias": [..]}`); required for
    /// sentiment in cache mode, used as a parity check in model mode.
    pub head_path: Option<PathBuf>,
    /// Precomputed embeddings for cache mode.
    pub cache_path: Option<PathBuf>,
    pub pooling: PoolingChoice,
    pub backend_mode: BackendMode,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub batch_size: usize,
    /// Hidden size of the stub encoder.
    pub stub_dim: usize,
    pub min_cos: Option<f64>,
    pub lead: u32,
    pub regressions: Vec<RegressionSpec>,
    pub plot: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: None,
            blacklist_path: None,
            encoder_path: None,
            classifier_path: None,
            vocab_path: None,
            anchors_path: None,
            head_path: None,
            cache_path: None,
            pooling: PoolingChoice::Sentence,
            backend_mode: BackendMode::Model,
            output_dir: PathBuf::from("out"),
            seed: 0,
            workers: 1,
            batch_size: 16,
            stub_dim: 64,
            min_cos: None,
            lead: 0,
            regressions: Vec::new(),
            plot: false,
        }
    }
}

fn require_existing<'a>(field: &str, path: &'a Option<PathBuf>) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{field} is required for this stage")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{field} {} does not exist", p.display())));
    }
    Ok(p)
}

impl PipelineConfig {
    /// Reads a JSON config. Relative paths in it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = crate::io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.corpus_dir,
            &mut cfg.blacklist_path,
            &mut cfg.encoder_path,
            &mut cfg.classifier_path,
            &mut cfg.vocab_path,
            &mut cfg.anchors_path,
            &mut cfg.head_path,
            &mut cfg.cache_path,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.output_dir);
        for r in &mut cfg.regressions {
            rebase(&mut r.macro_path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.stub_dim == 0 {
            return Err(Error::Config("stub_dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn backend_config(&self) -> EmbeddingBackendConfig {
        EmbeddingBackendConfig {
            mode: self.backend_mode,
            encoder_path: self.encoder_path.clone(),
            vocab_path: self.vocab_path.clone(),
            batch_size: self.batch_size,
        }
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn upstream(&self, name: &str) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact(p))
        }
    }

    fn blacklist(&self) -> Result<Blacklist> {
        match &self.blacklist_path {
            Some(_) => Blacklist::from_file(require_existing("blacklist_path", &self.blacklist_path)?),
            None => Ok(Blacklist::default()),
        }
    }

    fn anchor_specs(&self) -> Result<Vec<AnchorSpec>> {
        match &self.anchors_path {
            Some(_) => AnchorSpec::load(require_existing("anchors_path", &self.anchors_path)?),
            None => Ok(AnchorSpec::defaults()),
        }
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Embed,
    Aspects,
    Sentiment,
    Series,
    Regress,
    Stats,
    ComparePooling,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Embed,
        Stage::Aspects,
        Stage::Sentiment,
        Stage::Series,
        Stage::Regress,
        Stage::Stats,
        Stage::ComparePooling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Aspects => "aspects",
            Stage::Sentiment => "sentiment",
            Stage::Series => "series",
            Stage::Regress => "regress",
            Stage::Stats => "stats",
            Stage::ComparePooling => "compare-pooling",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    if matches!(stage, Stage::Embed | Stage::Aspects | Stage::Sentiment | Stage::ComparePooling) {
        cfg.backend_config().validate()?;
    }
    info!("running stage {stage}");
    match stage {
        Stage::Ingest => ingest(cfg),
        Stage::Embed => embed(cfg),
        Stage::Aspects => aspects(cfg),
        Stage::Sentiment => sentiment(cfg),
        Stage::Series => series(cfg),
        Stage::Regress => regress_stage(cfg),
        Stage::Stats => stats(cfg),
        Stage::ComparePooling => compare_pooling_stage(cfg),
    }
}

/// ingest → embed → aspects → sentiment → series → stats, then regress when
/// regressions are configured.
pub fn run_all(cfg: &PipelineConfig) -> Result<()> {
    for stage in [
        Stage::Ingest,
        Stage::Embed,
        Stage::Aspects,
        Stage::Sentiment,
        Stage::Series,
        Stage::Stats,
    ] {
        run_stage(stage, cfg)?;
    }
    if !cfg.regressions.is_empty() {
        run_stage(Stage::Regress, cfg)?;
    }
    Ok(())
}

pub fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let dir = require_existing("corpus_dir", &cfg.corpus_dir)?;
    let blacklist = cfg.blacklist()?;
    let docs = load_corpus(dir)?;
    let per_doc: Vec<Vec<Sentence>> = cfg
        .thread_pool()?
        .install(|| docs.par_iter().map(|d| ingest_document(d, &blacklist)).collect());
    let sentences: Vec<Sentence> = per_doc.into_iter().flatten().collect();
    info!("ingested {} documents, {} sentences", docs.len(), sentences.len());
    write_jsonl(&cfg.artifact(SENTENCES_FILE), &sentences)
}

fn read_sentences(cfg: &PipelineConfig) -> Result<Vec<Sentence>> {
    read_jsonl(&cfg.upstream(SENTENCES_FILE)?)
}

/// Tokenizer + encoder for the stub and model modes.
fn live_embedder(cfg: &PipelineConfig, sentences: &[Sentence], specs: &[AnchorSpec]) -> Result<Embedder<f64>> {
    match cfg.backend_mode {
        BackendMode::Stub => {
            let vocab = match &cfg.vocab_path {
                Some(_) => Vocab::from_file(require_existing("vocab_path", &cfg.vocab_path)?)?,
                None => Vocab::from_corpus(
                    sentences
                        .iter()
                        .map(|s| s.text.as_str())
                        .chain(specs.iter().flat_map(|a| a.seeds.iter().map(String::as_str))),
                ),
            };
            Ok(Embedder::new(vocab, Box::new(StubEncoder::new(cfg.stub_dim, cfg.seed)), cfg.batch_size))
        }
        BackendMode::Model => model_embedder(cfg),
        BackendMode::Cache => Err(Error::Config(
            "this stage needs token-level states; use backend mode \"stub\" or \"model\"".into(),
        )),
    }
}

#[cfg(feature = "onnx")]
fn model_embedder(cfg: &PipelineConfig) -> Result<Embedder<f64>> {
    let vocab = Vocab::from_file(require_existing("vocab_path", &cfg.vocab_path)?)?;
    let encoder = crate::embedding::onnx::OnnxEncoder::load(
        require_existing("encoder_path", &cfg.encoder_path)?,
        vocab.pad_id(),
        cfg.batch_size,
    )?;
    Ok(Embedder::new(vocab, Box::new(encoder), cfg.batch_size))
}

#[cfg(not(feature = "onnx"))]
fn model_embedder(_cfg: &PipelineConfig) -> Result<Embedder<f64>> {
    Err(Error::Config("built without the `onnx` feature; backend mode \"model\" unavailable".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedStats {
    pub backend_mode: BackendMode,
    pub n_sentences: usize,
    pub n_truncated: usize,
    pub hidden_size: usize,
}

/// Encodes sentences in `batch_size` chunks spread over the worker pool;
/// output order follows the input.
fn encode_sentences(
    cfg: &PipelineConfig,
    embedder: &Embedder<f64>,
    sentences: &[Sentence],
) -> Result<Vec<crate::embedding::EncodedSentence<f64>>> {
    let chunks: Vec<&[Sentence]> = sentences.chunks(embedder.batch_size).collect();
    let encoded: Vec<Vec<_>> = cfg.thread_pool()?.install(|| {
        chunks
            .par_iter()
            .map(|chunk| {
                let texts: Vec<&str> = chunk.iter().map(|s| s.text.as_str()).collect();
                embedder.encode_texts(&texts).map_err(|e| match e {
                    Error::Backend { message, .. } => Error::backend(
                        format!("{}#{}..", chunk[0].doc_id, chunk[0].sent_index),
                        message,
                    ),
                    other => other,
                })
            })
            .collect::<Result<_>>()
    })?;
    Ok(encoded.into_iter().flatten().collect())
}

pub fn embed(cfg: &PipelineConfig) -> Result<()> {
    let sentences = read_sentences(cfg)?;
    let specs = cfg.anchor_specs()?;
    let (records, stats) = match cfg.backend_mode {
        BackendMode::Cache => embed_from_cache(cfg, &sentences, &specs)?,
        _ => {
            let embedder = live_embedder(cfg, &sentences, &specs)?;
            let encoded = encode_sentences(cfg, &embedder, &sentences)?;
            let mut records = Vec::with_capacity(2 * sentences.len() + specs.len());
            for spec in &specs {
                let anchor = build_anchor(spec.label.clone(), &spec.seeds, &embedder.vocab, &*embedder.encoder)?;
                records.push(CacheRecord::new(
                    format!("{ANCHOR_DOC_PREFIX}{}", spec.label),
                    0,
                    &anchor.anchor_vector,
                ));
            }
            for (s, e) in sentences.iter().zip(&encoded) {
                records.push(CacheRecord::new(&s.doc_id, s.sent_index, &e.sentence));
                records.push(CacheRecord::new(&s.doc_id, s.sent_index, &e.cls));
            }
            let stats = EmbedStats {
                backend_mode: cfg.backend_mode,
                n_sentences: sentences.len(),
                n_truncated: encoded.iter().filter(|e| e.truncated).count(),
                hidden_size: embedder.encoder.hidden_size(),
            };
            (records, stats)
        }
    };
    write_jsonl(&cfg.artifact(EMBEDDINGS_FILE), &records)?;
    write_json(&cfg.artifact(EMBED_STATS_FILE), &stats)
}

/// Copies the anchors and every sentence's sentence-mean vector (plus the
/// [CLS] vector when present) out of the configured cache.
fn embed_from_cache(
    cfg: &PipelineConfig,
    sentences: &[Sentence],
    specs: &[AnchorSpec],
) -> Result<(Vec<CacheRecord>, EmbedStats)> {
    let cache = EmbeddingCache::load(require_existing("cache_path", &cfg.cache_path)?)?;
    let mut records = Vec::new();
    let mut dim = None;
    for spec in specs {
        let v = cache
            .anchor(spec.label.as_str())
            .ok_or_else(|| Error::Config(format!("cache has no anchor vector for {}", spec.label)))?;
        dim.get_or_insert(v.dim());
        records.push(CacheRecord::new(format!("{ANCHOR_DOC_PREFIX}{}", spec.label), 0, &v));
    }
    for s in sentences {
        let v = cache
            .get(&s.doc_id, s.sent_index, Pooling::SentenceMean)
            .ok_or_else(|| Error::Config(format!("cache has no sentence-mean vector for ({}, {})", s.doc_id, s.sent_index)))?;
        records.push(CacheRecord::new(&s.doc_id, s.sent_index, &v));
        if let Some(c) = cache.get(&s.doc_id, s.sent_index, Pooling::Cls) {
            records.push(CacheRecord::new(&s.doc_id, s.sent_index, &c));
        }
    }
    let stats = EmbedStats {
        backend_mode: BackendMode::Cache,
        n_sentences: sentences.len(),
        n_truncated: 0,
        hidden_size: dim.unwrap_or(0),
    };
    Ok((records, stats))
}

fn load_anchors(cache: &EmbeddingCache, specs: &[AnchorSpec]) -> Result<Vec<AspectAnchor<f64>>> {
    specs
        .iter()
        .map(|spec| {
            let v = cache.anchor(spec.label.as_str()).ok_or_else(|| {
                Error::Config(format!("{EMBEDDINGS_FILE} has no anchor for {}; re-run embed", spec.label))
            })?;
            anchor_from_vector(spec.label.clone(), spec.seeds.clone(), v.vector)
        })
        .collect()
}

fn missing_vector(s: &Sentence, pooling: Pooling) -> Error {
    Error::Config(format!(
        "{EMBEDDINGS_FILE} has no {pooling} vector for ({}, {})",
        s.doc_id, s.sent_index
    ))
}

pub fn aspects(cfg: &PipelineConfig) -> Result<()> {
    let sentences = read_sentences(cfg)?;
    let specs = cfg.anchor_specs()?;
    let cache = EmbeddingCache::load(&cfg.upstream(EMBEDDINGS_FILE)?)?;
    let anchors = load_anchors(&cache, &specs)?;
    let pool = cfg.thread_pool()?;

    let assignments: Vec<AspectAssignment> = match cfg.pooling {
        PoolingChoice::Sentence => pool.install(|| {
            sentences
                .par_iter()
                .map(|s| {
                    let emb = cache
                        .get(&s.doc_id, s.sent_index, Pooling::SentenceMean)
                        .ok_or_else(|| missing_vector(s, Pooling::SentenceMean))?;
                    classify_aspect(&s.doc_id, s.sent_index, &emb, &anchors, cfg.min_cos)
                })
                .collect::<Result<_>>()
        })?,
        PoolingChoice::Word => {
            let embedder = live_embedder(cfg, &sentences, &specs)?;
            let encoded = encode_sentences(cfg, &embedder, &sentences)?;
            sentences
                .iter()
                .zip(&encoded)
                .map(|(s, e)| classify_aspect_wordlevel(&s.doc_id, s.sent_index, &e.words, &anchors, cfg.min_cos))
                .collect::<Result<_>>()?
        }
    };
    let labels: Vec<AspectLabel> = specs.iter().map(|s| s.label.clone()).collect();
    let counts = aspect_distribution(&labels, &assignments);
    write_jsonl(&cfg.artifact(ASPECTS_FILE), &assignments)?;
    write_json(&cfg.artifact(ASPECT_COUNTS_FILE), &counts)
}

fn head_sentiment(
    cfg: &PipelineConfig,
    sentences: &[Sentence],
    cache: &EmbeddingCache,
    head: &DenseHead<f64>,
) -> Result<Vec<SentencePrediction>> {
    cfg.thread_pool()?.install(|| {
        sentences
            .par_iter()
            .map(|s| {
                let cls = cache
                    .get(&s.doc_id, s.sent_index, Pooling::Cls)
                    .ok_or_else(|| missing_vector(s, Pooling::Cls))?;
                classify_sentiment(&s.doc_id, s.sent_index, &cls, head)
            })
            .collect()
    })
}

pub fn sentiment(cfg: &PipelineConfig) -> Result<()> {
    let sentences = read_sentences(cfg)?;
    let preds = match cfg.backend_mode {
        BackendMode::Stub => {
            let cache = EmbeddingCache::load(&cfg.upstream(EMBEDDINGS_FILE)?)?;
            let head = DenseHead::stub(cfg.stub_dim, cfg.seed);
            head_sentiment(cfg, &sentences, &cache, &head)?
        }
        BackendMode::Cache => {
            let cache = EmbeddingCache::load(&cfg.upstream(EMBEDDINGS_FILE)?)?;
            let head = DenseHead::load(require_existing("head_path", &cfg.head_path)?)?;
            head_sentiment(cfg, &sentences, &cache, &head)?
        }
        BackendMode::Model => model_sentiment(cfg, &sentences)?,
    };
    write_jsonl(&cfg.artifact(PREDICTIONS_FILE), &preds)
}

#[cfg(feature = "onnx")]
fn model_sentiment(cfg: &PipelineConfig, sentences: &[Sentence]) -> Result<Vec<SentencePrediction>> {
    use crate::embedding::onnx::OnnxClassifier;
    use crate::embedding::tokenize;
    use crate::sentiment::prediction_from_logits;

    let classifier_path = require_existing("classifier_path", &cfg.classifier_path)?;
    LabelsSidecar::check(&classifier_path.with_file_name("labels.json"))?;
    let vocab = Vocab::from_file(require_existing("vocab_path", &cfg.vocab_path)?)?;
    let classifier = OnnxClassifier::load(classifier_path, vocab.pad_id(), cfg.batch_size)?;
    let seqs = sentences
        .iter()
        .map(|s| tokenize(&s.text, &vocab))
        .collect::<Result<Vec<_>>>()?;
    let chunks: Vec<_> = seqs.chunks(cfg.batch_size.max(1)).collect();
    let logits: Vec<Vec<f64>> = cfg.thread_pool()?.install(|| {
        chunks
            .par_iter()
            .map(|c| classifier.logits(c))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    if cfg.head_path.is_some() {
        let head = DenseHead::load(require_existing("head_path", &cfg.head_path)?)?;
        let cache = EmbeddingCache::load(&cfg.upstream(EMBEDDINGS_FILE)?)?;
        let via_head = sentences
            .iter()
            .map(|s| {
                let cls = cache
                    .get(&s.doc_id, s.sent_index, Pooling::Cls)
                    .ok_or_else(|| missing_vector(s, Pooling::Cls))?;
                Ok(head.logits(&cls.vector)?.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let dev = max_logit_deviation(&logits, &via_head);
        info!("classifier/head logit parity: max deviation {dev:.3e}");
        if dev > HEAD_PARITY_TOLERANCE {
            return Err(Error::backend(
                "classifier parity check",
                format!("max logit deviation {dev:.3e} exceeds {HEAD_PARITY_TOLERANCE:e}"),
            ));
        }
    }

    sentences
        .iter()
        .zip(&logits)
        .map(|(s, z)| prediction_from_logits(&s.doc_id, s.sent_index, z))
        .collect()
}

#[cfg(not(feature = "onnx"))]
fn model_sentiment(_cfg: &PipelineConfig, _sentences: &[Sentence]) -> Result<Vec<SentencePrediction>> {
    Err(Error::Config("built without the `onnx` feature; backend mode \"model\" unavailable".into()))
}

pub fn series(cfg: &PipelineConfig) -> Result<()> {
    let sentences = read_sentences(cfg)?;
    let assigns: Vec<AspectAssignment> = read_jsonl(&cfg.upstream(ASPECTS_FILE)?)?;
    let preds: Vec<SentencePrediction> = read_jsonl(&cfg.upstream(PREDICTIONS_FILE)?)?;

    let mut docs: Vec<(String, chrono::NaiveDate)> = Vec::new();
    for s in &sentences {
        if docs.last().is_none_or(|(id, _)| id != &s.doc_id) {
            docs.push((s.doc_id.clone(), s.meeting_date));
        }
    }
    let mut preds_by_doc: BTreeMap<&str, Vec<SentencePrediction>> = BTreeMap::new();
    for p in &preds {
        preds_by_doc.entry(&p.doc_id).or_default().push(p.clone());
    }
    let mut assigns_by_doc: BTreeMap<&str, Vec<AspectAssignment>> = BTreeMap::new();
    for a in &assigns {
        assigns_by_doc.entry(&a.doc_id).or_default().push(a.clone());
    }
    let known: std::collections::HashSet<&str> = docs.iter().map(|(id, _)| id.as_str()).collect();
    if let Some(orphan) = preds_by_doc.keys().chain(assigns_by_doc.keys()).find(|k| !known.contains(*k)) {
        return Err(Error::JoinMismatch(format!("document {orphan} not in {SENTENCES_FILE}")));
    }

    let empty_p = Vec::new();
    let empty_a = Vec::new();
    let scores = docs
        .iter()
        .map(|(doc_id, date)| {
            let p = preds_by_doc.get(doc_id.as_str()).unwrap_or(&empty_p);
            let a = assigns_by_doc.get(doc_id.as_str()).unwrap_or(&empty_a);
            Ok(DocumentScores {
                doc_id: doc_id.clone(),
                meeting_date: *date,
                tones: document_aspect_score(p, a, doc_id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_series_csv(&cfg.artifact(SERIES_FILE), &build_series(&scores))
}

/// Explicit single regression from CLI flags; otherwise `cfg.regressions`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressArgs {
    pub series: Option<PathBuf>,
    pub macro_path: Option<PathBuf>,
    pub indicator: Option<String>,
    pub aspect: Option<AspectLabel>,
    pub lead: Option<u32>,
}

pub fn regress_stage(cfg: &PipelineConfig) -> Result<()> {
    regress_with(cfg, &RegressArgs::default())
}

pub fn regress_with(cfg: &PipelineConfig, args: &RegressArgs) -> Result<()> {
    let series_path = match &args.series {
        Some(p) if p.is_file() => p.clone(),
        Some(p) => return Err(Error::MissingArtifact(p.clone())),
        None => cfg.upstream(SERIES_FILE)?,
    };
    let rows = read_series_csv(&series_path)?;
    let lead = args.lead.unwrap_or(cfg.lead);

    let specs = match (&args.macro_path, &args.indicator, &args.aspect) {
        (Some(m), Some(i), Some(a)) => vec![RegressionSpec {
            aspect: a.clone(),
            indicator: i.clone(),
            macro_path: m.clone(),
        }],
        (None, None, None) => cfg.regressions.clone(),
        _ => {
            return Err(Error::Config(
                "--macro, --indicator and --aspect must be given together".into(),
            ))
        }
    };
    if specs.is_empty() {
        return Err(Error::Config("no regressions configured".into()));
    }

    let mut results: Vec<RegressionResult> = Vec::with_capacity(specs.len());
    for spec in &specs {
        if !spec.macro_path.is_file() {
            return Err(Error::Config(format!("macro file {} does not exist", spec.macro_path.display())));
        }
        let macro_series = load_macro_csv(&spec.macro_path, &spec.indicator)?;
        let x = aspect_series(&rows, &spec.aspect);
        let (result, pairs) = regress(&x, &macro_series, &spec.aspect, lead)?;
        if cfg.plot {
            let svg = plot_svg(&result, &pairs);
            let path = cfg.artifact(&format!("{REGRESSION_STEM}_{}_{}.svg", spec.indicator, spec.aspect));
            write_atomic(&path, |w| w.write_all(svg.as_bytes()))?;
        }
        results.push(result);
    }
    write_report(&cfg.output_dir, REGRESSION_STEM, &results)
}

pub fn stats(cfg: &PipelineConfig) -> Result<()> {
    let docs = load_corpus(require_existing("corpus_dir", &cfg.corpus_dir)?)?;
    let sentences = read_sentences(cfg)?;
    let st = corpus_stats(&docs, &sentences)?;
    write_json(&cfg.artifact(STATS_FILE), &st)
}

pub fn compare_pooling_stage(cfg: &PipelineConfig) -> Result<()> {
    let sentences = read_sentences(cfg)?;
    let specs = cfg.anchor_specs()?;
    let embedder = live_embedder(cfg, &sentences, &specs)?;
    let anchors = specs
        .iter()
        .map(|s| build_anchor(s.label.clone(), &s.seeds, &embedder.vocab, &*embedder.encoder))
        .collect::<Result<Vec<_>>>()?;
    let seqs = sentences
        .iter()
        .map(|s| Ok((s.doc_id.clone(), s.sent_index, embedder.tokenize(&s.text)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = compare_pooling(&seqs, &anchors, &*embedder.encoder, embedder.batch_size)?;
    info!(
        "entropy sentence-mean {:.4}, word {:.4}",
        report.entropy_sentence, report.entropy_word
    );
    write_json(&cfg.artifact(POOLING_FILE), &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("embedd".parse::<Stage>().is_err());
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"backend_mode": "stub", "workers": 4}"#).unwrap();
        assert_eq!(cfg.pooling, PoolingChoice::Sentence);
        assert_eq!(cfg.workers, 4);
        assert!(cfg.validate().is_ok());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn model_mode_requires_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            output_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        assert!(cfg.validate().is_ok());
        assert!(matches!(run_stage(Stage::Embed, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn missing_upstream_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            backend_mode: BackendMode::Stub,
            output_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        match run_stage(Stage::Embed, &cfg) {
            Err(Error::MissingArtifact(p)) => assert!(p.ends_with(SENTENCES_FILE)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
