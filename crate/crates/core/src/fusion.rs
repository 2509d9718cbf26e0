//! Reciprocal Rank Fusion over per-query ranked lists.
//!
//! A chunk's fused score is the sum, over the lists that contain it, of
//! `1 / (smoothing + rank)`. Lists that do not contain the chunk contribute
//! nothing. Only ranks enter the score; raw similarities are ignored.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{QueryRef, RankedList};

pub const DEFAULT_SMOOTHING: u32 = 60;
pub const DEFAULT_OUTPUT_DEPTH: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("no ranked lists to fuse")]
    NoLists,
    #[error("smoothing constant must be positive")]
    ZeroSmoothing,
    #[error("ranked list {index} ({query_ref}) is malformed: {reason}")]
    MalformedList {
        index: usize,
        query_ref: QueryRef,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    #[serde(flatten)]
    pub query_ref: QueryRef,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEntry {
    pub chunk_id: String,
    pub score: f64,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRanking {
    pub smoothing: u32,
    pub entries: Vec<FusedEntry>,
}

impl FusedRanking {
    pub fn chunk_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.chunk_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keep the first `depth` entries.
    pub fn truncate(&self, depth: usize) -> FusedRanking {
        FusedRanking {
            smoothing: self.smoothing,
            entries: self.entries.iter().take(depth).cloned().collect(),
        }
    }
}

/// Output order: score descending, then more contributing lists first,
/// then ascending chunk id.
pub fn fused_order(a: &FusedEntry, b: &FusedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.contributions.len().cmp(&a.contributions.len()))
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

pub fn rrf_fuse(lists: &[RankedList], smoothing: u32) -> Result<FusedRanking, FusionError> {
    if lists.is_empty() {
        return Err(FusionError::NoLists);
    }
    if smoothing == 0 {
        return Err(FusionError::ZeroSmoothing);
    }
    let mut by_chunk: HashMap<&str, Vec<Contribution>> = HashMap::new();
    for (index, list) in lists.iter().enumerate() {
        list.validate()
            .map_err(|reason| FusionError::MalformedList {
                index,
                query_ref: list.query_ref,
                reason,
            })?;
        for e in &list.entries {
            by_chunk
                .entry(e.chunk_id.as_str())
                .or_default()
                .push(Contribution {
                    query_ref: list.query_ref,
                    rank: e.rank,
                });
        }
    }

    let k = f64::from(smoothing);
    let mut entries: Vec<FusedEntry> = by_chunk
        .into_iter()
        .map(|(chunk_id, mut contributions)| {
            // canonical summation order keeps scores independent of list order
            contributions.sort_by(|a, b| a.rank.cmp(&b.rank).then(a.query_ref.cmp(&b.query_ref)));
            let score = contributions
                .iter()
                .map(|c| 1.0 / (k + c.rank as f64))
                .sum();
            FusedEntry {
                chunk_id: chunk_id.to_string(),
                score,
                contributions,
            }
        })
        .collect();
    entries.sort_by(fused_order);
    Ok(FusedRanking { smoothing, entries })
}
