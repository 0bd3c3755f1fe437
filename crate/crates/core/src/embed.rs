//! Embedding vectors, cosine similarity and the built-in hashed n-gram embedder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::text::{fnv1a, script_runs};

/// L2-normalized dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        let norm = values
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self(
            values
                .into_iter()
                .map(|v| (f64::from(v) / norm) as f32)
                .collect(),
        ))
    }

    /// Wraps values that are already unit length (e.g. read back from a store).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt()
    }

    /// Dot product; equals cosine similarity for unit vectors.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.0.len() != other.0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.0.len(),
                got: other.0.len(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum())
    }
}

/// `dot(a, b) / (|a| |b|)`, accumulated in f64.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// A text embedding capability. Implementations return unit-length vectors.
pub trait Embedder: Send + Sync {
    /// Stable identifier written to store manifests.
    fn id(&self) -> &str;

    fn embed(&self, texts: &[&str]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError>;

    fn embed_one(&self, text: &str) -> std::result::Result<EmbeddingVector, ProviderError> {
        self.embed(&[text])?
            .pop()
            .ok_or_else(|| ProviderError::new(self.id(), "empty embedding response"))
    }
}

/// Deterministic feature-hashing embedder.
///
/// Features: Han characters (weight 0.5) and adjacent Han bigrams (1.0);
/// lowercased alphanumeric words (1.0) and their boundary-padded character
/// trigrams (0.5). Each feature is hashed with FNV-1a into one of `dim`
/// buckets with a hash-derived sign.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

pub const DEFAULT_HASH_DIM: usize = 512;

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM)
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            id: format!("hash-ngram-v1-{dim}"),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    fn add(&self, acc: &mut [f32], ns: u8, feature: &str, weight: f32) {
        let mut bytes = Vec::with_capacity(feature.len() + 1);
        bytes.push(ns);
        bytes.extend_from_slice(feature.as_bytes());
        let h = fnv1a(&bytes);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign * weight;
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f32; self.dim];
        let lowered = text.to_lowercase();
        for (cjk, run) in script_runs(&lowered) {
            if cjk {
                let chars: Vec<char> = run.chars().collect();
                for (i, c) in chars.iter().enumerate() {
                    self.add(&mut acc, b'u', c.encode_utf8(&mut [0; 4]), 0.5);
                    if let Some(next) = chars.get(i + 1) {
                        let bigram: String = [*c, *next].iter().collect();
                        self.add(&mut acc, b'b', &bigram, 1.0);
                    }
                }
            } else {
                self.add(&mut acc, b'w', run, 1.0);
                let padded: Vec<char> = std::iter::once('^')
                    .chain(run.chars())
                    .chain(std::iter::once('$'))
                    .collect();
                for w in padded.windows(3) {
                    let tri: String = w.iter().collect();
                    self.add(&mut acc, b't', &tri, 0.5);
                }
            }
        }
        match EmbeddingVector::normalized(acc) {
            Ok(v) => v,
            // Texts without letters (or whose features cancel) hash as a whole.
            Err(_) => {
                let mut acc = vec![0.0f32; self.dim];
                self.add(&mut acc, b'r', text, 1.0);
                EmbeddingVector::normalized(acc).expect("single feature is non-zero")
            }
        }
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[&str]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}
