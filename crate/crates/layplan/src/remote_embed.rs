//! Embedding transport over HTTP.
//!
//! Request body: `{"model", "input"}`. The vector is read from
//! `data[0].embedding` and scaled to unit length.

use layplan_core::metrics::{EmbeddingProvider, ProviderError};
use serde_json::{json, Value};

use crate::http_backend::post_json;

pub const URL_VAR: &str = "LAYPLAN_EMBED_URL";
pub const KEY_VAR: &str = "LAYPLAN_EMBED_KEY";
pub const MODEL_VAR: &str = "LAYPLAN_EMBED_MODEL";

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    url: String,
    key: Option<String>,
    model: String,
    dim: usize,
    timeout_ms: u64,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, key: Option<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            url: url.into(),
            key,
            model: model.into(),
            dim,
            timeout_ms: 30_000,
        }
    }

    pub fn from_env(dim: usize) -> Option<Self> {
        let var = |n: &str| std::env::var(n).ok().filter(|v| !v.trim().is_empty());
        let url = var(URL_VAR)?;
        Some(Self::new(url, var(KEY_VAR), var(MODEL_VAR).unwrap_or_else(|| "default".into()), dim))
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let body = json!({ "model": self.model, "input": text });
        let reply = post_json(&self.url, self.key.as_deref(), self.timeout_ms, &body)
            .map_err(|e| ProviderError::Backend(e.to_string()))?;
        let v: Vec<f64> = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(Value::as_f64).collect())
            .ok_or_else(|| ProviderError::Backend("reply has no data[0].embedding".into()))?;
        if v.len() != self.dim {
            return Err(ProviderError::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(if norm > 0.0 { v.iter().map(|x| x / norm).collect() } else { v })
    }
}
