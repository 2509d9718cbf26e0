use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{EmbedError, EmbeddingProvider, EmbeddingProviderConfig};
use crate::http::{post_json, HttpFailure, RetryPolicy};
use crate::limiter::InFlightLimiter;

/// Embeddings-style JSON-over-HTTP backend.
pub struct RemoteEmbedder {
    config: EmbeddingProviderConfig,
    base_url: String,
    api_key: Option<String>,
    limiter: InFlightLimiter,
}

impl RemoteEmbedder {
    pub fn from_config(config: EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        let base_url = match &config.endpoint {
            Some(e) => e.clone(),
            None => std::env::var("EMBED_BASE_URL").map_err(|_| {
                EmbedError::Config(
                    "no embedding endpoint configured and EMBED_BASE_URL is unset".into(),
                )
            })?,
        };
        let api_key = std::env::var("EMBED_API_KEY")
            .ok()
            .filter(|k| !k.is_empty());
        Ok(Self::new(config, base_url, api_key))
    }

    pub fn new(config: EmbeddingProviderConfig, base_url: String, api_key: Option<String>) -> Self {
        let limiter = InFlightLimiter::new(config.max_in_flight);
        Self {
            config,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            limiter,
        }
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = json!({ "model": self.config.model_name, "input": texts });
        let url = format!("{}/embeddings", self.base_url);
        let policy = RetryPolicy {
            max_attempts: self.config.max_attempts.max(1),
            initial_backoff: Duration::from_millis(self.config.initial_backoff_ms),
        };
        let _permit = self.limiter.acquire();
        let value =
            post_json(&url, self.api_key.as_deref(), &body, &policy).map_err(|f| match f {
                HttpFailure::Exhausted { attempts, message } => {
                    EmbedError::Transport { attempts, message }
                }
                HttpFailure::Rejected(message) => EmbedError::Contract(message),
            })?;
        parse_embeddings(value)
    }
}

#[derive(Deserialize)]
struct DataItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Accepts `{"data": [{"embedding": [...], "index": i}]}`,
/// `{"embeddings": [[...]]}` or a bare array of vectors.
pub(crate) fn parse_embeddings(value: serde_json::Value) -> Result<Vec<Vec<f64>>, EmbedError> {
    let bad =
        |e: serde_json::Error| EmbedError::Contract(format!("unreadable embeddings response: {e}"));
    if let Some(data) = value.get("data") {
        let mut items: Vec<DataItem> = serde_json::from_value(data.clone()).map_err(bad)?;
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
        }
        return Ok(items.into_iter().map(|i| i.embedding).collect());
    }
    if let Some(list) = value.get("embeddings") {
        return serde_json::from_value(list.clone()).map_err(bad);
    }
    serde_json::from_value(value).map_err(bad)
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.batch_size.max(1)) {
            let vectors = self.request(batch)?;
            if vectors.len() != batch.len() {
                return Err(EmbedError::CountMismatch {
                    requested: batch.len(),
                    returned: vectors.len(),
                });
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}
