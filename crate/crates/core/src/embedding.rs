//! Fixed-length embedding vectors and the cosine metric.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 512;

/// A non-zero, finite vector. Values are held as `f32` (the on-disk width);
/// arithmetic is done in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("embedding must have positive dimension"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("embedding contains non-finite values"));
        }
        let e = Self { values };
        if e.norm() == 0.0 {
            return Err(Error::usage("embedding has zero norm"));
        }
        Ok(e)
    }

    /// Builds an L2-normalized embedding from raw components.
    pub fn normalized(values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::usage("cannot normalize zero or non-finite vector"));
        }
        Self::new(values.iter().map(|v| (v / norm) as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn to_base64(&self) -> String {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        B64.encode(bytes)
    }

    pub fn from_base64(dim: usize, data: &str) -> Result<Self> {
        let bytes = B64
            .decode(data)
            .map_err(|e| Error::usage(format!("embedding base64: {e}")))?;
        if bytes.len() != dim * 4 {
            return Err(Error::usage(format!(
                "embedding payload has {} bytes, expected {}",
                bytes.len(),
                dim * 4
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(values)
    }
}

/// dot(a, b) / (|a| |b|), clamped to [-1, 1].
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    Ok((dot / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRepr {
    dim: usize,
    f32le_b64: String,
}

impl Serialize for Embedding {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EmbeddingRepr {
            dim: self.dim(),
            f32le_b64: self.to_base64(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = EmbeddingRepr::deserialize(d)?;
        Embedding::from_base64(repr.dim, &repr.f32le_b64).map_err(serde::de::Error::custom)
    }
}
