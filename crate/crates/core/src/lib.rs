//! Weakly supervised aspect-based sentiment analysis of central-bank meeting
//! minutes.
//!
//! Sentences are embedded with a BERT-family encoder, assigned to an economic
//! aspect by cosine similarity to seed-term anchors, scored for tone by a
//! three-way classifier, aggregated into monthly aspect sentiment series and
//! regressed against macroeconomic indicators.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the pipeline uses.

pub mod aspect;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod io;
pub mod month;
pub mod pipeline;
pub mod regression;
pub mod scalar;
pub mod sentiment;

pub use aspect::{AnchorSpec, AspectAssignment, AspectLabel};
pub use corpus::{Blacklist, CorpusStats, RawDocument, Sentence};
pub use embedding::{BackendMode, Pooling, TokenSequence, Vocab};
pub use error::{Error, Result};
pub use month::YearMonth;
pub use pipeline::{PipelineConfig, Stage};
pub use regression::{MacroSeries, RegressionResult};
pub use scalar::Scalar;
pub use sentiment::{SentencePrediction, SentimentLabel, SeriesRow};

pub type Embedding = embedding::SentenceEmbedding<f64>;
pub type TokenMatrix = embedding::TokenEmbeddingMatrix<f64>;
pub type Anchor = aspect::AspectAnchor<f64>;
pub type Head = sentiment::DenseHead<f64>;
pub type Fit = regression::OlsFit<f64>;
pub type Embedder = embedding::Embedder<f64>;
