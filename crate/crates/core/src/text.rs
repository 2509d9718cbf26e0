//! Text normalization shared by the pool builder, the matchers and the QA metrics.

use std::sync::OnceLock;

use regex::Regex;

/// Trim and collapse every run of whitespace into a single space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key used to detect duplicate statements: case-folded, whitespace-collapsed.
pub fn dedup_key(text: &str) -> String {
    collapse_whitespace(&text.to_lowercase())
}

/// Lowercase alphanumeric runs. Used by the mock embedder.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn article_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// Open-domain QA answer normalization: lowercase, strip punctuation,
/// drop the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .map(|c| {
            if c.is_ascii_punctuation() || is_unicode_punct(c) {
                ' '
            } else {
                c
            }
        })
        .collect();
    let no_articles = article_re().replace_all(&no_punct, " ");
    collapse_whitespace(&no_articles)
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
    )
}

/// Tokens of [`normalize_answer`].
pub fn answer_tokens(text: &str) -> Vec<String> {
    normalize_answer(text)
        .split(' ')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}
