//! Precomputed embedding cache (JSON Lines keyed by document and sentence).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Pooling, SentenceEmbedding};
use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_jsonl};

/// Prefix of the `doc_id` under which aspect anchor vectors are cached;
/// the full key is `@anchor:<label>` with `sent_index` 0.
pub const ANCHOR_DOC_PREFIX: &str = "@anchor:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub doc_id: String,
    pub sent_index: usize,
    pub pooling: Pooling,
    pub vector: Vec<f64>,
}

impl CacheRecord {
    pub fn new(doc_id: impl Into<String>, sent_index: usize, emb: &SentenceEmbedding<f64>) -> Self {
        CacheRecord {
            doc_id: doc_id.into(),
            sent_index,
            pooling: emb.pooling,
            vector: emb.vector.clone(),
        }
    }

    pub fn embedding(&self) -> SentenceEmbedding<f64> {
        SentenceEmbedding::new(self.vector.clone(), self.pooling)
    }
}

pub fn write_cache(path: &Path, records: &[CacheRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_cache(path: &Path) -> Result<Vec<CacheRecord>> {
    let records: Vec<CacheRecord> = read_jsonl(path)?;
    if let Some(r) = records.iter().find(|r| r.vector.iter().any(|x| !x.is_finite())) {
        return Err(Error::Config(format!(
            "non-finite vector in cache for ({}, {})",
            r.doc_id, r.sent_index
        )));
    }
    Ok(records)
}

/// Lookup over cache records by (doc_id, sent_index, pooling).
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    map: HashMap<(String, usize, Pooling), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn from_records(records: Vec<CacheRecord>) -> Result<Self> {
        let mut map = HashMap::with_capacity(records.len());
        for r in records {
            let key = (r.doc_id, r.sent_index, r.pooling);
            if map.contains_key(&key) {
                return Err(Error::Config(format!(
                    "duplicate cache entry ({}, {}, {})",
                    key.0, key.1, key.2
                )));
            }
            map.insert(key, r.vector);
        }
        Ok(EmbeddingCache { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(read_cache(path)?)
    }

    pub fn get(&self, doc_id: &str, sent_index: usize, pooling: Pooling) -> Option<SentenceEmbedding<f64>> {
        self.map
            .get(&(doc_id.to_string(), sent_index, pooling))
            .map(|v| SentenceEmbedding::new(v.clone(), pooling))
    }

    pub fn anchor(&self, label: &str) -> Option<SentenceEmbedding<f64>> {
        self.get(&format!("{ANCHOR_DOC_PREFIX}{label}"), 0, Pooling::SentenceMean)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(vecs in prop::collection::vec(
            prop::collection::vec(-1e6f64..1e6, 1..12), 1..8)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("cache.jsonl");
            let recs: Vec<CacheRecord> = vecs.iter().enumerate().map(|(i, v)| CacheRecord {
                doc_id: format!("d{i}"),
                sent_index: i,
                pooling: Pooling::SentenceMean,
                vector: v.clone(),
            }).collect();
            write_cache(&p, &recs).unwrap();
            let back = read_cache(&p).unwrap();
            prop_assert_eq!(back.len(), recs.len());
            for (a, b) in back.iter().zip(&recs) {
                let bits_a: Vec<u64> = a.vector.iter().map(|x| x.to_bits()).collect();
                let bits_b: Vec<u64> = b.vector.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn schema_field_names() {
        let r = CacheRecord {
            doc_id: "m1".into(),
            sent_index: 3,
            pooling: Pooling::SentenceMean,
            vector: vec![0.5, -1.0],
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"doc_id":"m1","sent_index":3,"pooling":"sentence-mean","vector":[0.5,-1.0]}"#
        );
    }

    #[test]
    fn lookup_and_duplicates() {
        let r = |d: &str, p| CacheRecord {
            doc_id: d.into(),
            sent_index: 0,
            pooling: p,
            vector: vec![1.0],
        };
        let c = EmbeddingCache::from_records(vec![r("a", Pooling::SentenceMean), r("a", Pooling::Cls), r("@anchor:growth", Pooling::SentenceMean)]).unwrap();
        assert!(c.get("a", 0, Pooling::Cls).is_some());
        assert!(c.get("a", 1, Pooling::Cls).is_none());
        assert!(c.anchor("growth").is_some());
        assert!(EmbeddingCache::from_records(vec![r("a", Pooling::Cls), r("a", Pooling::Cls)]).is_err());
    }
}
