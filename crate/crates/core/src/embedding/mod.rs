//! Token- and sentence-level embeddings from a BERT-family encoder.
//!
//! Every backend implements [`Encoder`], which returns the hidden states of
//! the last four encoder layers for each sequence. Pooling is shared:
//!
//! * word embeddings: per-token mean over the last four layers;
//! * sentence embedding: mean of the content-token rows (no [CLS]/[SEP]);
//! * classification state: final-layer row at position 0.

pub mod cache;
#[cfg(feature = "onnx")]
pub mod onnx;
pub mod stub;
pub mod wordpiece;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{l2_norm, mean_vectors, Scalar};

pub use wordpiece::{tokenize, TokenSequence, Vocab};

/// Number of trailing encoder layers averaged into word embeddings.
pub const POOLED_LAYERS: usize = 4;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Hidden states of the trailing encoder layers for one sequence, oldest
/// layer first, each `attention_length × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates<T> {
    pub layers: Vec<Matrix<T>>,
}

impl<T: Scalar> LayerStates<T> {
    pub fn final_layer(&self) -> &Matrix<T> {
        self.layers.last().expect("at least one layer")
    }
}

/// A transformer encoder producing per-layer hidden states.
///
/// Implementations must be deterministic, and the states of a sequence
/// must not depend on the other members of the batch.
pub trait Encoder<T: Scalar>: Send + Sync {
    fn hidden_size(&self) -> usize;

    /// Returns at least [`POOLED_LAYERS`] trailing layers per sequence, each
    /// trimmed to the sequence's `attention_length` rows.
    fn encode_batch(&self, batch: &[TokenSequence]) -> Result<Vec<LayerStates<T>>>;
}

impl<T: Scalar, E: Encoder<T> + ?Sized> Encoder<T> for Box<E> {
    fn hidden_size(&self) -> usize {
        (**self).hidden_size()
    }
    fn encode_batch(&self, batch: &[TokenSequence]) -> Result<Vec<LayerStates<T>>> {
        (**self).encode_batch(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pooling {
    #[serde(rename = "sentence-mean")]
    SentenceMean,
    #[serde(rename = "word")]
    Word,
    #[serde(rename = "cls")]
    Cls,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::SentenceMean => "sentence-mean",
            Pooling::Word => "word",
            Pooling::Cls => "cls",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-token embeddings, `attention_length × d`, rows include [CLS] and [SEP].
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingMatrix<T> {
    pub rows: Matrix<T>,
    pub pooling_source: &'static str,
}

impl<T: Scalar> TokenEmbeddingMatrix<T> {
    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    /// Rows between [CLS] and [SEP].
    pub fn content_rows(&self) -> impl Iterator<Item = &[T]> {
        let n = self.rows.rows();
        (1..n.saturating_sub(1)).map(move |i| self.rows.row(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding<T> {
    pub vector: Vec<T>,
    pub pooling: Pooling,
    pub norm: T,
}

impl<T: Scalar> SentenceEmbedding<T> {
    pub fn new(vector: Vec<T>, pooling: Pooling) -> Self {
        let norm = l2_norm(&vector);
        SentenceEmbedding {
            vector,
            pooling,
            norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.norm > T::zero()) || !self.norm.is_finite()
    }
}

fn provenance(seq: &TokenSequence) -> String {
    format!("sentence {:?}", seq.original_text)
}

fn encode_one<T: Scalar, E: Encoder<T> + ?Sized>(
    seq: &TokenSequence,
    backend: &E,
) -> Result<LayerStates<T>> {
    let mut out = backend
        .encode_batch(std::slice::from_ref(seq))
        .map_err(|e| Error::backend(provenance(seq), e))?;
    out.pop()
        .ok_or_else(|| Error::backend(provenance(seq), "backend returned no states"))
}

/// Per-token mean over the last [`POOLED_LAYERS`] layers.
pub fn pool_layers<T: Scalar>(seq: &TokenSequence, states: &LayerStates<T>) -> Result<TokenEmbeddingMatrix<T>> {
    if states.layers.len() < POOLED_LAYERS {
        return Err(Error::backend(
            provenance(seq),
            format!("expected {POOLED_LAYERS} layers, got {}", states.layers.len()),
        ));
    }
    let last = &states.layers[states.layers.len() - POOLED_LAYERS..];
    let (rows, cols) = (last[0].rows(), last[0].cols());
    if rows != seq.attention_length || last.iter().any(|m| m.rows() != rows || m.cols() != cols) {
        return Err(Error::backend(provenance(seq), "inconsistent hidden-state shapes"));
    }
    let data = mean_vectors(last.iter().map(Matrix::as_slice)).expect("non-empty layers");
    let rows = Matrix::new(rows, cols, data);
    if !rows.is_finite() {
        return Err(Error::backend(provenance(seq), "non-finite hidden states"));
    }
    Ok(TokenEmbeddingMatrix {
        rows,
        pooling_source: "last4-mean",
    })
}

/// Mean of the content rows of a token matrix.
pub fn pool_content<T: Scalar>(mat: &TokenEmbeddingMatrix<T>) -> Result<SentenceEmbedding<T>> {
    let v = mean_vectors(mat.content_rows()).ok_or(Error::NoContentTokens)?;
    Ok(SentenceEmbedding::new(v, Pooling::SentenceMean))
}

/// Final-layer row at position 0.
pub fn pool_cls<T: Scalar>(states: &LayerStates<T>) -> SentenceEmbedding<T> {
    SentenceEmbedding::new(states.final_layer().row(0).to_vec(), Pooling::Cls)
}

pub fn word_embeddings<T: Scalar, E: Encoder<T> + ?Sized>(
    seq: &TokenSequence,
    backend: &E,
) -> Result<TokenEmbeddingMatrix<T>> {
    pool_layers(seq, &encode_one(seq, backend)?)
}

pub fn sentence_embedding<T: Scalar, E: Encoder<T> + ?Sized>(
    seq: &TokenSequence,
    backend: &E,
) -> Result<SentenceEmbedding<T>> {
    if seq.content_len() == 0 {
        return Err(Error::NoContentTokens);
    }
    pool_content(&word_embeddings(seq, backend)?)
}

pub fn cls_state<T: Scalar, E: Encoder<T> + ?Sized>(
    seq: &TokenSequence,
    backend: &E,
) -> Result<SentenceEmbedding<T>> {
    Ok(pool_cls(&encode_one(seq, backend)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Model,
    Cache,
    Stub,
}

impl std::str::FromStr for BackendMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(BackendMode::Model),
            "cache" => Ok(BackendMode::Cache),
            "stub" => Ok(BackendMode::Stub),
            other => Err(Error::Config(format!("unknown backend mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBackendConfig {
    pub mode: BackendMode,
    pub encoder_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub batch_size: usize,
}

impl EmbeddingBackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.mode == BackendMode::Model && (self.encoder_path.is_none() || self.vocab_path.is_none()) {
            return Err(Error::Config(
                "backend mode \"model\" requires both encoder_path and vocab_path".into(),
            ));
        }
        Ok(())
    }
}

/// Tokenizer plus encoder, embedding texts in fixed-size batches.
pub struct Embedder<T: Scalar> {
    pub vocab: Vocab,
    pub encoder: Box<dyn Encoder<T>>,
    pub batch_size: usize,
}

/// Everything computed for one sentence in a single encoder pass.
#[derive(Debug, Clone)]
pub struct EncodedSentence<T> {
    pub words: TokenEmbeddingMatrix<T>,
    pub sentence: SentenceEmbedding<T>,
    pub cls: SentenceEmbedding<T>,
    pub truncated: bool,
}

impl<T: Scalar> Embedder<T> {
    pub fn new(vocab: Vocab, encoder: Box<dyn Encoder<T>>, batch_size: usize) -> Self {
        Embedder {
            vocab,
            encoder,
            batch_size: batch_size.max(1),
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence> {
        tokenize(text, &self.vocab)
    }

    /// Encodes `texts` in batches, returning results in input order.
    pub fn encode_texts(&self, texts: &[&str]) -> Result<Vec<EncodedSentence<T>>> {
        let seqs = texts
            .iter()
            .map(|t| self.tokenize(t))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(self.batch_size) {
            let states = self.encoder.encode_batch(chunk).map_err(|e| {
                Error::backend(format!("batch starting at {:?}", chunk[0].original_text), e)
            })?;
            if states.len() != chunk.len() {
                return Err(Error::backend("batch", "backend returned wrong batch size"));
            }
            for (seq, st) in chunk.iter().zip(&states) {
                let words = pool_layers(seq, st)?;
                let sentence = pool_content(&words)?;
                out.push(EncodedSentence {
                    sentence,
                    cls: pool_cls(st),
                    words,
                    truncated: seq.truncated,
                });
            }
        }
        Ok(out)
    }

    pub fn sentence_embedding(&self, text: &str) -> Result<SentenceEmbedding<T>> {
        sentence_embedding(&self.tokenize(text)?, &*self.encoder)
    }
}
