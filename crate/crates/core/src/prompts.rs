//! Versioned prompt templates shipped with the crate.
//!
//! Each template file holds a system part and a user part separated by a
//! line containing only `---`. Placeholders are written `{{name}}`. Every run
//! record references templates by the SHA-256 of the file contents.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct Template {
    pub name: &'static str,
    pub system: &'static str,
    pub user: &'static str,
    pub hash: String,
}

impl Template {
    fn parse(name: &'static str, raw: &'static str) -> Self {
        let (system, user) = raw
            .split_once("\n---\n")
            .unwrap_or_else(|| panic!("template {name} lacks a --- separator"));
        Self {
            name,
            system: system.trim(),
            user: user.trim(),
            hash: hex::encode(Sha256::digest(raw.as_bytes())),
        }
    }

    /// Substitute `{{key}}` placeholders. Returns `(system, user)`.
    pub fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        let fill = |s: &str| {
            vars.iter().fold(s.to_string(), |acc, (k, v)| {
                acc.replace(&format!("{{{{{k}}}}}"), v)
            })
        };
        (fill(self.system), fill(self.user))
    }
}

pub struct Templates {
    pub hypotheses: Template,
    pub decompose: Template,
    pub split: Template,
    pub repair: Template,
    pub answer: Template,
    pub judge: Template,
}

impl Templates {
    fn all(&self) -> [&Template; 6] {
        [
            &self.hypotheses,
            &self.decompose,
            &self.split,
            &self.repair,
            &self.answer,
            &self.judge,
        ]
    }

    /// Template name (with version) → content hash.
    pub fn hashes(&self) -> BTreeMap<&'static str, String> {
        self.all()
            .iter()
            .map(|t| (t.name, t.hash.clone()))
            .collect()
    }
}

pub fn templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(|| Templates {
        hypotheses: Template::parse(
            "hypotheses.v1",
            include_str!("../prompts/hypotheses.v1.txt"),
        ),
        decompose: Template::parse("decompose.v1", include_str!("../prompts/decompose.v1.txt")),
        split: Template::parse("split.v1", include_str!("../prompts/split.v1.txt")),
        repair: Template::parse("repair.v1", include_str!("../prompts/repair.v1.txt")),
        answer: Template::parse("answer.v1", include_str!("../prompts/answer.v1.txt")),
        judge: Template::parse("judge.v1", include_str!("../prompts/judge.v1.txt")),
    })
}
