//! Exact brute-force cosine index over chunk embeddings.
//!
//! Vectors are stored as `f32` (the on-disk precision) and scored in `f64`.
//! Results are ordered by descending cosine with ties broken by ascending
//! chunk id, so every search is reproducible across platforms and thread
//! counts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Chunk;
use crate::embedding::{
    embed_batch, EmbedError, EmbeddingProvider, EmbeddingProviderConfig, EmbeddingVector,
};
use crate::exec::{map_ordered, Execution};

pub const MAGIC: &[u8; 4] = b"IFIX";
pub const FORMAT_VERSION: u32 = 1;
pub const METRIC_COSINE: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4;
const EMBED_GROUP: usize = 256;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("unsupported index format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("duplicate chunk id {0:?}")]
    DuplicateId(String),
    #[error("query dimension {actual} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid index input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Identifies which query produced a ranked list: intent statement `l` of
/// hypothesis `m` (both 1-based), or the raw question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "QueryRefRepr", try_from = "QueryRefRepr")]
pub enum QueryRef {
    Intent { m: u32, l: u32 },
    RawQuestion,
}

/// Wire form: `{"m": .., "l": ..}` with `m = l = 0` for the raw question.
#[derive(Serialize, Deserialize)]
struct QueryRefRepr {
    m: u32,
    l: u32,
}

impl From<QueryRef> for QueryRefRepr {
    fn from(q: QueryRef) -> Self {
        match q {
            QueryRef::Intent { m, l } => Self { m, l },
            QueryRef::RawQuestion => Self { m: 0, l: 0 },
        }
    }
}

impl TryFrom<QueryRefRepr> for QueryRef {
    type Error = String;
    fn try_from(r: QueryRefRepr) -> Result<Self, String> {
        match (r.m, r.l) {
            (0, 0) => Ok(QueryRef::RawQuestion),
            (0, _) | (_, 0) => Err(format!("invalid query reference m={} l={}", r.m, r.l)),
            (m, l) => Ok(QueryRef::Intent { m, l }),
        }
    }
}

impl std::fmt::Display for QueryRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QueryRef::Intent { m, l } => write!(f, "s({m},{l})"),
            QueryRef::RawQuestion => f.write_str("question"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub chunk_id: String,
    pub rank: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_ref: QueryRef,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Ranks are exactly `1..=n`, scores never increase, ids are unique.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(format!(
                    "entry {i} has rank {} (expected {})",
                    e.rank,
                    i + 1
                ));
            }
            if !e.score.is_finite() {
                return Err(format!("entry {i} has a non-finite score"));
            }
            if i > 0 && e.score > self.entries[i - 1].score {
                return Err(format!("score increases at rank {}", e.rank));
            }
            if !seen.insert(e.chunk_id.as_str()) {
                return Err(format!("chunk {:?} listed twice", e.chunk_id));
            }
        }
        Ok(())
    }

    pub fn truncated(&self, depth: usize) -> RankedList {
        RankedList {
            query_ref: self.query_ref,
            entries: self.entries.iter().take(depth).cloned().collect(),
        }
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.chunk_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMeta {
    pub doc_id: String,
    pub ordinal: usize,
    /// Passage text, kept so retrieval results can be scored and shown
    /// without the chunk file.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    inv_norms: Vec<f64>,
    metadata: BTreeMap<String, ChunkMeta>,
    embedder: Option<EmbeddingProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildWarning {
    pub chunk_id: String,
    pub message: String,
}

fn inv_norm(v: &[f32]) -> Option<f64> {
    let n = v
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    (n > 0.0 && n.is_finite()).then(|| 1.0 / n)
}

impl VectorIndex {
    /// Assemble an index from raw vectors. Chunk ids must be unique and every
    /// vector must have length `dim` and be non-zero.
    pub fn from_entries(
        dim: usize,
        entries: Vec<(String, Vec<f32>)>,
        metadata: BTreeMap<String, ChunkMeta>,
    ) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::Invalid("dimension must be positive".into()));
        }
        let mut ids = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut inv_norms = Vec::with_capacity(entries.len());
        let mut seen = HashSet::new();
        for (id, v) in entries {
            if !seen.insert(id.clone()) {
                return Err(IndexError::DuplicateId(id));
            }
            if v.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            let inv = inv_norm(&v).ok_or_else(|| {
                IndexError::Invalid(format!("vector for {id:?} is zero or non-finite"))
            })?;
            inv_norms.push(inv);
            data.extend_from_slice(&v);
            ids.push(id);
        }
        Ok(Self {
            dim,
            ids,
            data,
            inv_norms,
            metadata,
            embedder: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn metadata(&self) -> &BTreeMap<String, ChunkMeta> {
        &self.metadata
    }

    pub fn chunk(&self, id: &str) -> Option<&ChunkMeta> {
        self.metadata.get(id)
    }

    pub fn doc_id(&self, chunk_id: &str) -> Option<&str> {
        self.metadata.get(chunk_id).map(|m| m.doc_id.as_str())
    }

    /// Embedder that produced the stored vectors, when recorded.
    pub fn embedder(&self) -> Option<&EmbeddingProviderConfig> {
        self.embedder.as_ref()
    }

    pub fn set_embedder(&mut self, config: Option<EmbeddingProviderConfig>) {
        self.embedder = config;
    }

    fn score(&self, i: usize, query: &[f64], q_inv: f64) -> f64 {
        let dot: f64 = self
            .vector(i)
            .iter()
            .zip(query)
            .map(|(&x, &q)| f64::from(x) * q)
            .sum();
        // `+ 0.0` folds -0.0 into +0.0 so zero scores tie on id alone
        (dot * self.inv_norms[i] * q_inv).clamp(-1.0, 1.0) + 0.0
    }

    pub fn search(&self, query: &EmbeddingVector, top_k: usize) -> Result<RankedList, IndexError> {
        self.search_with(query, top_k, Execution::default(), QueryRef::RawQuestion)
    }

    /// Exact top-`top_k` by cosine, ties by ascending chunk id.
    pub fn search_with(
        &self,
        query: &EmbeddingVector,
        top_k: usize,
        exec: Execution,
        query_ref: QueryRef,
    ) -> Result<RankedList, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if top_k == 0 {
            return Err(IndexError::Invalid("top_k must be positive".into()));
        }
        let q = query.values();
        let qn = query.norm();
        if qn == 0.0 {
            return Err(IndexError::Embed(EmbedError::ZeroVector));
        }
        let q_inv = 1.0 / qn;

        let positions: Vec<usize> = (0..self.len()).collect();
        let mut scored: Vec<(f64, usize)> =
            map_ordered(&positions, exec, |&i| (self.score(i, q, q_inv), i));

        let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        let k = top_k.min(scored.len());
        if k < scored.len() && k > 0 {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);

        Ok(RankedList {
            query_ref,
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(r, (score, i))| RankedEntry {
                    chunk_id: self.ids[i].clone(),
                    rank: r + 1,
                    score,
                })
                .collect(),
        })
    }

    /// SHA-256 of the binary serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4 + self.ids.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&METRIC_COSINE.to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in self.vector(i) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Parse the binary layout. Metadata is left empty.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IndexError::Corrupt("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let metric = r.u32()?;
        if metric != METRIC_COSINE {
            return Err(IndexError::Corrupt(format!("unknown metric tag {metric}")));
        }
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| IndexError::Corrupt("chunk id is not UTF-8".into()))?
                .to_string();
            let raw = r.take(dim * 4)?;
            let v = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            entries.push((id, v));
        }
        if r.pos != bytes.len() {
            return Err(IndexError::Corrupt(format!(
                "{} trailing bytes after last entry",
                bytes.len() - r.pos
            )));
        }
        Self::from_entries(dim, entries, BTreeMap::new()).map_err(|e| match e {
            IndexError::Invalid(m) => IndexError::Corrupt(m),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IndexError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

/// Embed every chunk and build the index. Chunks whose body is blank are
/// skipped and reported as warnings.
pub fn build_index(
    chunks: &[Chunk],
    provider: &dyn EmbeddingProvider,
    exec: Execution,
) -> Result<(VectorIndex, Vec<BuildWarning>), IndexError> {
    if chunks.is_empty() {
        return Err(IndexError::Invalid("no chunks to index".into()));
    }
    let mut seen = HashSet::new();
    for c in chunks {
        if !seen.insert(c.id.as_str()) {
            return Err(IndexError::DuplicateId(c.id.clone()));
        }
    }
    let mut warnings = Vec::new();
    let kept: Vec<&Chunk> = chunks
        .iter()
        .filter(|c| {
            let keep = !c.body.trim().is_empty();
            if !keep {
                log::warn!("skipping chunk {} with empty body", c.id);
                warnings.push(BuildWarning {
                    chunk_id: c.id.clone(),
                    message: "empty body; not indexed".into(),
                });
            }
            keep
        })
        .collect();

    let groups: Vec<&[&Chunk]> = kept.chunks(EMBED_GROUP).collect();
    let embedded = map_ordered(&groups, exec, |group| {
        let texts: Vec<String> = group.iter().map(|c| c.body.clone()).collect();
        embed_batch(provider, &texts)
    });

    let mut entries = Vec::with_capacity(kept.len());
    let mut metadata = BTreeMap::new();
    for (group, vectors) in groups.iter().zip(embedded) {
        for (c, v) in group.iter().zip(vectors?) {
            entries.push((c.id.clone(), v.values().iter().map(|&x| x as f32).collect()));
            metadata.insert(
                c.id.clone(),
                ChunkMeta {
                    doc_id: c.doc_id.clone(),
                    ordinal: c.ordinal,
                    text: c.body.clone(),
                },
            );
        }
    }
    let index = VectorIndex::from_entries(provider.dim(), entries, metadata)?;
    Ok((index, warnings))
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    dim: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedder: Option<EmbeddingProviderConfig>,
    chunks: BTreeMap<String, ChunkMeta>,
}

/// Path of the JSON metadata written next to an index file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| IndexError::Io { path: p, source }
    };
    let mut f = fs::File::create(path).map_err(io(path))?;
    f.write_all(&index.to_bytes()).map_err(io(path))?;
    f.flush().map_err(io(path))?;

    let meta = Sidecar {
        format_version: FORMAT_VERSION,
        dim: index.dim,
        count: index.len(),
        embedder: index.embedder.clone(),
        chunks: index.metadata.clone(),
    };
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| io(&side)(e.into()))?;
    fs::write(&side, json).map_err(io(&side))
}

pub fn load_index(path: &Path) -> Result<VectorIndex, IndexError> {
    let bytes = fs::read(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut index = VectorIndex::from_bytes(&bytes)?;
    let side = sidecar_path(path);
    let raw = fs::read(&side).map_err(|source| IndexError::Io {
        path: side.clone(),
        source,
    })?;
    let meta: Sidecar = serde_json::from_slice(&raw)
        .map_err(|e| IndexError::Corrupt(format!("{}: {e}", side.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(IndexError::UnsupportedVersion(meta.format_version));
    }
    if meta.dim != index.dim || meta.count != index.len() {
        return Err(IndexError::Corrupt(
            "metadata sidecar does not match index header".into(),
        ));
    }
    if let Some(missing) = index.ids.iter().find(|id| !meta.chunks.contains_key(*id)) {
        return Err(IndexError::Corrupt(format!(
            "no metadata for chunk {missing:?}"
        )));
    }
    index.metadata = meta.chunks;
    index.embedder = meta.embedder;
    Ok(index)
}
