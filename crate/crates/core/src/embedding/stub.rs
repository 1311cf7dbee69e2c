//! Deterministic stand-in encoder for tests and model-free runs.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Encoder, LayerStates, Matrix, Pooling, SentenceEmbedding, TokenSequence, POOLED_LAYERS};
use crate::error::Result;
use crate::scalar::{l2_norm, Scalar};

fn text_hash(text: &str, seed: u64) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write(text.as_bytes());
    h.finish()
}

/// Unit-norm Gaussian direction seeded by a 64-bit hash of `text`.
pub fn stub_vector(text: &str, d: usize, seed: u64) -> Vec<f64> {
    assert!(d > 0, "stub dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(text_hash(text, seed));
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = l2_norm(&v);
    for x in &mut v {
        *x /= norm;
    }
    v
}

pub fn stub_embed_seeded<T: Scalar>(text: &str, d: usize, seed: u64) -> SentenceEmbedding<T> {
    let v = stub_vector(text, d, seed).into_iter().map(T::lit).collect();
    SentenceEmbedding::new(v, Pooling::SentenceMean)
}

/// Deterministic unit vector for `text` (seed 0).
pub fn stub_embed<T: Scalar>(text: &str, d: usize) -> SentenceEmbedding<T> {
    stub_embed_seeded(text, d, 0)
}

/// Encoder whose layer-`l` state for token `t` is a per-(layer, token id)
/// stub vector plus the sum of those vectors over the sequence divided by
/// `sqrt(n)`. The [CLS] position is keyed by the whole token sequence, so
/// its state differs between sentences that share most of their words.
#[derive(Debug, Clone)]
pub struct StubEncoder {
    dim: usize,
    seed: u64,
}

impl StubEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "stub dimension must be positive");
        StubEncoder { dim, seed }
    }

    fn token_vector(&self, layer: usize, token: u32) -> Vec<f64> {
        stub_vector(&format!("layer{layer}/token{token}"), self.dim, self.seed)
    }

    fn encode_one<T: Scalar>(&self, seq: &TokenSequence) -> LayerStates<T> {
        let n = seq.attention_length;
        let layers = (0..POOLED_LAYERS)
            .map(|layer| {
                let base: Vec<Vec<f64>> = seq.tokens[..n]
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| match i {
                        0 => stub_vector(&format!("layer{layer}/cls{:?}", &seq.tokens[..n]), self.dim, self.seed),
                        _ => self.token_vector(layer, t),
                    })
                    .collect();
                let mut ctx = vec![0.0; self.dim];
                for row in &base {
                    for (c, x) in ctx.iter_mut().zip(row) {
                        *c += x;
                    }
                }
                let scale = (n as f64).sqrt();
                let data = base
                    .iter()
                    .flat_map(|row| {
                        row.iter()
                            .zip(&ctx)
                            .map(|(x, c)| T::lit(x + c / scale))
                    })
                    .collect();
                Matrix::new(n, self.dim, data)
            })
            .collect();
        LayerStates { layers }
    }
}

impl<T: Scalar> Encoder<T> for StubEncoder {
    fn hidden_size(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, batch: &[TokenSequence]) -> Result<Vec<LayerStates<T>>> {
        Ok(batch.iter().map(|s| self.encode_one(s)).collect())
    }
}
