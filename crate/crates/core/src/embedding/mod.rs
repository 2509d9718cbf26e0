//! Dense text embeddings behind a pluggable provider contract.
//!
//! Every vector that leaves [`embed_batch`] is L2-normalized, so downstream
//! code may treat dot products as cosines.

mod mock;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mock_embed, MockEmbedder};
pub use remote::RemoteEmbedder;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector is all zeros")]
    ZeroVector,
    #[error("vector has non-finite component at {0}")]
    NonFinite(usize),
    #[error("text has no tokens to embed")]
    EmptyText,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding backend returned {returned} vectors for {requested} inputs")]
    CountMismatch { requested: usize, returned: usize },
    #[error("embedding backend violated its contract: {0}")]
    Contract(String),
    #[error("embedding request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

impl EmbedError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(
            self,
            Self::Transport { .. } | Self::Contract(_) | Self::CountMismatch { .. }
        )
    }
}

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::InvalidInput("empty vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn normalized(&self) -> Result<Self, EmbedError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|v| v / n).collect()))
    }
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedBackend {
    RemoteHttp,
    DeterministicMock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub backend: EmbedBackend,
    pub model_name: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_embed_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
}

fn default_embed_in_flight() -> usize {
    8
}
fn default_batch_size() -> usize {
    64
}
pub(crate) fn default_attempts() -> u32 {
    3
}
pub(crate) fn default_backoff_ms() -> u64 {
    500
}

impl EmbeddingProviderConfig {
    pub fn mock(dim: usize, seed: u64) -> Self {
        Self {
            backend: EmbedBackend::DeterministicMock,
            model_name: format!("token-hash-{dim}"),
            dim,
            endpoint: None,
            seed,
            max_in_flight: default_embed_in_flight(),
            batch_size: default_batch_size(),
            max_attempts: default_attempts(),
            initial_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn remote(model_name: impl Into<String>, dim: usize, endpoint: Option<String>) -> Self {
        Self {
            backend: EmbedBackend::RemoteHttp,
            model_name: model_name.into(),
            dim,
            endpoint,
            ..Self::mock(dim, 0)
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim < 2 {
            return Err(EmbedError::Config(format!(
                "dim must be at least 2, got {}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn backoff(&self) -> Duration {
        Duration::from_millis(self.initial_backoff_ms)
    }

    /// Instantiate the configured backend. The remote backend reads
    /// `EMBED_BASE_URL` (when no endpoint is configured) and `EMBED_API_KEY`.
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        self.validate()?;
        Ok(match self.backend {
            EmbedBackend::DeterministicMock => Box::new(MockEmbedder::new(self.dim, self.seed)?),
            EmbedBackend::RemoteHttp => Box::new(RemoteEmbedder::from_config(self.clone())?),
        })
    }
}

/// Backend contract. Implementations return raw vectors; [`embed_batch`]
/// validates and normalizes them.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn model_name(&self) -> &str;
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Embed `texts` in order, checking dimensions and L2-normalizing.
pub fn embed_batch(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::InvalidInput("no texts to embed".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbedError::InvalidInput(format!("text {i} is blank")));
    }
    let raw = provider.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            requested: texts.len(),
            returned: raw.len(),
        });
    }
    raw.into_iter()
        .map(|values| {
            if values.len() != provider.dim() {
                return Err(EmbedError::Contract(format!(
                    "backend returned dimension {} but provider is configured for {}",
                    values.len(),
                    provider.dim()
                )));
            }
            let v =
                EmbeddingVector::new(values).map_err(|e| EmbedError::Contract(e.to_string()))?;
            v.normalized()
                .map_err(|_| EmbedError::Contract("backend returned an all-zero vector".into()))
        })
        .collect()
}

pub fn embed_one(
    provider: &dyn EmbeddingProvider,
    text: &str,
) -> Result<EmbeddingVector, EmbedError> {
    Ok(embed_batch(provider, &[text.to_string()])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn cosine_hand_values() {
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(),
            1.0
        );
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            0.0
        );
        let c = cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.6, 0.8])).unwrap();
        assert!((c - 0.6).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(EmbedError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(EmbedError::ZeroVector)
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
    }

    struct Fixed(Vec<Vec<f64>>, usize);
    impl EmbeddingProvider for Fixed {
        fn dim(&self) -> usize {
            self.1
        }
        fn model_name(&self) -> &str {
            "fixed"
        }
        fn embed_raw(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn wrong_backend_dimension_is_contract_violation() {
        let p = Fixed(vec![vec![1.0; 4096]], 1024);
        let err = embed_batch(&p, &["x".into()]).unwrap_err();
        assert!(matches!(err, EmbedError::Contract(_)), "{err}");
    }

    #[test]
    fn blank_text_rejected() {
        let p = Fixed(vec![vec![1.0, 0.0]], 2);
        assert!(embed_batch(&p, &["  ".into()]).is_err());
        assert!(embed_batch(&p, &[]).is_err());
    }

    fn nonzero_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..16)
            .prop_flat_map(|d| {
                (
                    prop::collection::vec(-10.0f64..10.0, d),
                    prop::collection::vec(-10.0f64..10.0, d),
                )
            })
            .prop_filter("non-zero", |(a, b)| {
                a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3)
            })
    }

    proptest! {
        #[test]
        fn cosine_self_symmetric_and_scale_free((a, b) in nonzero_pair(), s in 0.01f64..100.0) {
            let (va, vb) = (v(&a), v(&b));
            prop_assert!((cosine_similarity(&va, &va).unwrap() - 1.0).abs() < 1e-9);
            let ab = cosine_similarity(&va, &vb).unwrap();
            prop_assert!((ab - cosine_similarity(&vb, &va).unwrap()).abs() < 1e-12);
            let scaled = v(&a.iter().map(|x| x * s).collect::<Vec<_>>());
            prop_assert!((ab - cosine_similarity(&scaled, &vb).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
