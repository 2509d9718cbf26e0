use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::embedding::EmbeddingVector;

/// A probability vector over embedding dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionVector {
    probs: Vec<f64>,
}

impl DistributionVector {
    /// Absolute components divided by their sum.
    pub fn from_vector(v: &EmbeddingVector) -> Result<Self, MetricError> {
        if v.dim() < 2 {
            return Err(MetricError::InvalidInput(
                "distribution needs at least 2 dimensions".into(),
            ));
        }
        let l1: f64 = v.values().iter().map(|x| x.abs()).sum();
        if l1 == 0.0 {
            return Err(MetricError::InvalidInput(
                "all-zero vector has no distribution".into(),
            ));
        }
        Ok(Self {
            probs: v.values().iter().map(|x| x.abs() / l1).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// Shannon entropy in nats, with 0 ln 0 taken as 0.
    pub fn entropy(&self) -> f64 {
        let h: f64 = self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        h + 0.0
    }
}

/// Unweighted mean of the per-vector distributions.
pub fn mixture_distribution(
    vectors: &[EmbeddingVector],
) -> Result<DistributionVector, MetricError> {
    let first = vectors
        .first()
        .ok_or_else(|| MetricError::InvalidInput("entropy of an empty vector set".into()))?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        if v.dim() != dim {
            return Err(MetricError::InvalidInput(format!(
                "dimension mismatch: {} vs {dim}",
                v.dim()
            )));
        }
        let p = DistributionVector::from_vector(v)?;
        for (a, x) in acc.iter_mut().zip(p.probs) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(DistributionVector {
        probs: acc.into_iter().map(|x| x / n).collect(),
    })
}

/// Entropy (nats) of the mixture distribution of a query set's embeddings.
pub fn vector_entropy(vectors: &[EmbeddingVector]) -> Result<f64, MetricError> {
    Ok(mixture_distribution(vectors)?.entropy())
}
