//! Sentence embedding providers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct EmbedError(pub String);

/// Maps texts to fixed-dimension vectors, in order. Identical texts must map
/// to identical vectors within a run.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).embed(texts)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).embed(texts)
    }
}

/// Offline bag-of-words embedder using signed feature hashing.
///
/// Words (and single CJK characters) are hashed with FNV-1a into `dim`
/// buckets. Texts sharing most of their words land close together, which is
/// enough to exercise the pipeline without a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for token in tokens(text) {
            let h = fnv1a(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
            any = true;
        }
        if !any || v.iter().all(|x| *x == 0.0) {
            // Fall back to the raw text so punctuation-only rows still embed.
            let h = fnv1a(text.as_bytes());
            v[(h % self.dim as u64) as usize] += 1.0;
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF)
}

fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Looks texts up in a fixed table. Unknown texts are an error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedEmbeddings {
    table: HashMap<String, Vec<f64>>,
}

impl FixedEmbeddings {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        Self {
            table: entries.into_iter().collect(),
        }
    }
}

impl EmbeddingProvider for FixedEmbeddings {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(*t)
                    .cloned()
                    .ok_or_else(|| EmbedError(format!("no embedding for text {t:?}")))
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequestBody<'a> {
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedReplyBody {
    embeddings: Vec<Vec<f64>>,
}

/// Remote embedding service: `POST {"texts": [...]}`, reply
/// `{"embeddings": [[...], ...]}` in the same order.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
            endpoint: endpoint.into(),
            api_key,
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut request = self.client.post(&self.endpoint).json(&EmbedRequestBody { texts });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| EmbedError(format!("embedding request failed: {e}")))?;
        if !response.status().is_success() {
            return Err(EmbedError(format!(
                "embedding service returned status {}",
                response.status().as_u16()
            )));
        }
        let body: EmbedReplyBody = response
            .json()
            .map_err(|e| EmbedError(format!("malformed embedding reply: {e}")))?;
        if body.embeddings.len() != texts.len() {
            return Err(EmbedError(format!(
                "embedding service returned {} vectors for {} texts",
                body.embeddings.len(),
                texts.len()
            )));
        }
        Ok(body.embeddings)
    }
}
