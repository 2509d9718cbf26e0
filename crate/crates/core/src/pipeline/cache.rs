use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::StrategyConfig;
use crate::corpus::QuestionRecord;
use crate::hypothesis::QueryPool;
use crate::prompts::templates;

/// Query pools keyed by everything that shapes generation, kept in memory
/// and optionally mirrored to one JSON file per pool. Degraded pools are
/// never stored so a later run can retry them.
#[derive(Debug, Default)]
pub struct PoolCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, QueryPool>>,
}

impl PoolCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            mem: Mutex::default(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Key over question, generation settings, model, seed and prompt hashes.
    pub fn key(record: &QuestionRecord, config: &StrategyConfig, model: &str) -> String {
        let t = templates();
        let llm = config.llm.as_ref();
        let material = json!({
            "question_id": record.id,
            "question": record.question,
            "mode": config.kind,
            "max_instances": config.max_instances,
            "temperature": llm.map(|c| c.temperature),
            "max_tokens": llm.map(|c| c.max_output_tokens),
            "model": model,
            "seed": config.seed,
            "prompts": [&t.hypotheses.hash, &t.decompose.hash, &t.split.hash, &t.repair.hash],
        });
        hex::encode(Sha256::digest(material.to_string().as_bytes()))
    }

    fn file(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<QueryPool> {
        if let Some(p) = self.mem.lock().unwrap_or_else(|e| e.into_inner()).get(key) {
            return Some(p.clone());
        }
        let path = self.file(key)?;
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<QueryPool>(&text) {
            Ok(pool) => {
                self.mem
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .insert(key.to_string(), pool.clone());
                Some(pool)
            }
            Err(e) => {
                log::warn!("ignoring unreadable cached pool {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &str, pool: &QueryPool) -> io::Result<()> {
        if pool.degraded {
            return Ok(());
        }
        if let Some(path) = self.file(key) {
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, serde_json::to_vec_pretty(pool)?)?;
            fs::rename(&tmp, &path)?;
        }
        self.mem
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.to_string(), pool.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mem.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
