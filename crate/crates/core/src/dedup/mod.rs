//! Semantic deduplication of instruction data.
//!
//! Every record is embedded, embeddings are L2-normalized, all pairs are
//! compared, and a record is dropped when its similarity to an earlier kept
//! record exceeds the threshold (strictly). The earliest occurrence always
//! survives, so output order is input order minus removals.

mod cosine;
mod embed;
mod engine;
mod pipeline;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cosine::{cosine, l2_norm, normalize, CosineError};
pub use embed::{EmbedError, EmbeddingProvider, FixedEmbeddings, HashingEmbedder, HttpEmbeddingProvider};
pub use engine::{Parallelism, DEFAULT_TILE_SIZE};
pub use pipeline::{run_pipeline, PipelineError, PipelineSummary};

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub text: String,
    /// Precomputed embedding; records without one are sent to the provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            embedding: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupConfig {
    pub threshold: f64,
    pub batch_size: usize,
    pub tile_size: usize,
    pub parallelism: Parallelism,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            batch_size: DEFAULT_BATCH_SIZE,
            tile_size: DEFAULT_TILE_SIZE,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub removed_id: String,
    pub kept_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub kept_ids: Vec<String>,
    pub removed: Vec<Removal>,
    pub threshold: f64,
    /// Number of unordered pairs scored: `n (n - 1) / 2`.
    pub pairs_compared: u64,
}

/// How far a run got before it failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupProgress {
    pub embedded: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DedupError {
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {0:?} has empty text")]
    EmptyText(String),
    #[error("embedding provider failed after {}/{} records: {source}", progress.embedded, progress.total)]
    Provider {
        #[source]
        source: EmbedError,
        progress: DedupProgress,
    },
    #[error("embedding provider returned {got} vectors for {expected} texts")]
    ProviderCount { expected: usize, got: usize },
    #[error("record {id:?}: embedding has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("record {id:?}: {source}")]
    BadEmbedding {
        id: String,
        #[source]
        source: CosineError,
    },
}

/// Deduplicates `records` in input order. Returns the kept records and an
/// audit report listing each removal with its kept partner.
pub fn dedup(
    records: Vec<DatasetRecord>,
    provider: &dyn EmbeddingProvider,
    config: &DedupConfig,
) -> Result<(Vec<DatasetRecord>, DedupReport), DedupError> {
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(DedupError::InvalidThreshold(config.threshold));
    }
    if config.batch_size == 0 {
        return Err(DedupError::ZeroBatchSize);
    }
    let mut seen = HashSet::with_capacity(records.len());
    for record in &records {
        if !seen.insert(record.id.as_str()) {
            return Err(DedupError::DuplicateId(record.id.clone()));
        }
        if record.text.trim().is_empty() {
            return Err(DedupError::EmptyText(record.id.clone()));
        }
    }

    let unit = unit_embeddings(&records, provider, config.batch_size)?;
    let candidates = engine::candidate_pairs(&unit, config.threshold, config.tile_size, config.parallelism);
    let (kept_mask, decisions) = engine::reduce(&candidates);

    let n = records.len() as u64;
    let report = DedupReport {
        kept_ids: records
            .iter()
            .zip(&kept_mask)
            .filter(|(_, k)| **k)
            .map(|(r, _)| r.id.clone())
            .collect(),
        removed: decisions
            .iter()
            .map(|d| Removal {
                removed_id: records[d.removed].id.clone(),
                kept_id: records[d.kept].id.clone(),
                similarity: d.similarity,
            })
            .collect(),
        threshold: config.threshold,
        pairs_compared: n * n.saturating_sub(1) / 2,
    };
    let kept = records
        .into_iter()
        .zip(kept_mask)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    Ok((kept, report))
}

/// Embeds records lacking a vector (batches run in parallel) and normalizes
/// every vector to unit length.
fn unit_embeddings(
    records: &[DatasetRecord],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<Vec<Vec<f64>>, DedupError> {
    let missing: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.embedding.is_none())
        .map(|(i, _)| i)
        .collect();

    let batches: Vec<Result<Vec<Vec<f64>>, EmbedError>> = missing
        .par_chunks(batch_size)
        .map(|chunk| {
            let texts: Vec<&str> = chunk.iter().map(|&i| records[i].text.as_str()).collect();
            provider.embed(&texts)
        })
        .collect();

    let mut computed: Vec<Option<Vec<f64>>> = vec![None; records.len()];
    let mut embedded = records.len() - missing.len();
    for (chunk, batch) in missing.chunks(batch_size).zip(batches) {
        let vectors = batch.map_err(|source| DedupError::Provider {
            source,
            progress: DedupProgress {
                embedded,
                total: records.len(),
            },
        })?;
        if vectors.len() != chunk.len() {
            return Err(DedupError::ProviderCount {
                expected: chunk.len(),
                got: vectors.len(),
            });
        }
        for (&i, v) in chunk.iter().zip(vectors) {
            computed[i] = Some(v);
        }
        embedded += chunk.len();
    }

    let mut dim = None;
    records
        .iter()
        .zip(computed)
        .map(|(record, computed)| {
            let mut v = computed.or_else(|| record.embedding.clone()).unwrap_or_default();
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected {
                return Err(DedupError::DimensionMismatch {
                    id: record.id.clone(),
                    expected,
                    found: v.len(),
                });
            }
            normalize(&mut v).map_err(|source| DedupError::BadEmbedding {
                id: record.id.clone(),
                source,
            })?;
            Ok(v)
        })
        .collect()
}
