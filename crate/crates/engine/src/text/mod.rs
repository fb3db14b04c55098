//! Text analysis primitives shared by the whole pipeline: normalization to
//! lemma tokens, keyword phrase matching, version fingerprinting, link
//! extraction, and line counting.
//!
//! Normalization is the contract everything else leans on. Keyword phrases
//! are compiled through the same function documents go through, so a phrase
//! matches exactly when its lemma tokens appear contiguously in the
//! document's lemma tokens, regardless of case, punctuation, or inflection.

mod lemma;

pub use lemma::lemmatize;

use std::collections::{BTreeMap, HashMap};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::taxonomy::{CompiledPhrase, FlagId, FlagLexicon};

/// Ordered lowercase lemma tokens of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

static URL_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r#"(?i)\b(?:https?://|www\.)[^\s<>()\[\]{}"']+"#).expect("url pattern compiles")
});

/// True for lines that exist only to open or close a fenced code block.
fn is_fence_marker(line: &str) -> bool {
    let trimmed = line.trim_start();
    trimmed.starts_with("```") || trimmed.starts_with("~~~")
}

/// Lowercases, drops fence markers and URLs, splits on anything that is not
/// alphanumeric, and lemmatizes each word. Token streams concatenate: the
/// tokens of `a + "\n" + b` are the tokens of `a` followed by the tokens of
/// `b`.
pub fn normalize(text: &str) -> TokenStream {
    let mut kept = String::with_capacity(text.len());
    for line in text.lines() {
        if !is_fence_marker(line) {
            kept.push_str(line);
        }
        kept.push('\n');
    }
    let without_urls = URL_RE.replace_all(&kept, " ");
    let lowered = without_urls.to_lowercase();
    let tokens = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(lemmatize)
        .collect();
    TokenStream { tokens }
}

/// One keyword phrase found in a document, as a token span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseMatch {
    pub flag: FlagId,
    /// The phrase as written in the lexicon file.
    pub phrase: String,
    pub start: usize,
    pub end: usize,
}

/// All flags detected in a document plus the matches that justify them.
/// `detected` is sorted in taxonomy order without duplicates; `matches` is
/// ordered by start position, then by lexicon order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FlagReport {
    pub detected: Vec<FlagId>,
    pub matches: Vec<PhraseMatch>,
}

impl FlagReport {
    pub fn contains(&self, flag: FlagId) -> bool {
        self.detected.contains(&flag)
    }
}

/// Scans a document for every lexicon phrase.
pub fn detect_flags(lexicon: &FlagLexicon, text: &str) -> FlagReport {
    detect_in_tokens(lexicon, &normalize(text).tokens)
}

/// Phrase scan over an already-normalized token stream.
pub fn detect_in_tokens(lexicon: &FlagLexicon, tokens: &[String]) -> FlagReport {
    let mut by_first: HashMap<&str, Vec<&CompiledPhrase>> = HashMap::new();
    for phrase in lexicon.phrases() {
        by_first
            .entry(phrase.tokens[0].as_str())
            .or_default()
            .push(phrase);
    }

    let mut matches = Vec::new();
    for start in 0..tokens.len() {
        let Some(candidates) = by_first.get(tokens[start].as_str()) else {
            continue;
        };
        for phrase in candidates {
            let end = start + phrase.tokens.len();
            if end <= tokens.len() && tokens[start..end] == phrase.tokens[..] {
                matches.push(PhraseMatch {
                    flag: phrase.flag,
                    phrase: phrase.raw.clone(),
                    start,
                    end,
                });
            }
        }
    }

    let mut detected: Vec<FlagId> = matches.iter().map(|m| m.flag).collect();
    detected.sort_by_key(|f| f.index());
    detected.dedup();
    FlagReport { detected, matches }
}

/// Collapses every whitespace run to a single space.
pub fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a dotted version label like "1.4" or "2". Returns (major, minor).
pub fn parse_version_label(label: &str) -> Option<(u32, u32)> {
    let mut parts = label.splitn(2, '.');
    let major = parts.next()?.parse().ok()?;
    let minor = match parts.next() {
        Some(m) => m.parse().ok()?,
        None => 0,
    };
    Some((major, minor))
}

/// Version fingerprints: for each version label, phrases that all occur in
/// that version's text and in no other. Matching is case-insensitive on
/// whitespace-collapsed text, so reflowed documents still fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovenantFingerprints {
    /// Sorted by version, highest first.
    entries: Vec<FingerprintEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FingerprintEntry {
    label: String,
    version: (u32, u32),
    /// Lowercased, whitespace-collapsed.
    needles: Vec<String>,
    raw: Vec<String>,
}

const DEFAULT_FINGERPRINTS: &str = include_str!("../../data/fingerprints.json");

impl CovenantFingerprints {
    /// The fingerprints shipped with the engine (versions 1.4, 2.0, 2.1).
    pub fn shipped() -> CovenantFingerprints {
        CovenantFingerprints::from_json(DEFAULT_FINGERPRINTS).expect("shipped fingerprints are valid")
    }

    pub fn from_json(json: &str) -> Result<CovenantFingerprints, FingerprintError> {
        let file: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
        let mut entries = Vec::with_capacity(file.len());
        let mut seen: HashMap<String, String> = HashMap::new();
        for (label, raw) in file {
            let version = parse_version_label(&label)
                .ok_or_else(|| FingerprintError::BadLabel(label.clone()))?;
            if raw.is_empty() {
                return Err(FingerprintError::NoPhrases(label));
            }
            let mut needles = Vec::with_capacity(raw.len());
            for phrase in &raw {
                let needle = collapse_ws(phrase).to_lowercase();
                if needle.is_empty() {
                    return Err(FingerprintError::NoPhrases(label));
                }
                if let Some(other) = seen.get(&needle) {
                    return Err(FingerprintError::SharedPhrase {
                        phrase: phrase.clone(),
                        first: other.clone(),
                        second: label.clone(),
                    });
                }
                seen.insert(needle.clone(), label.clone());
                needles.push(needle);
            }
            entries.push(FingerprintEntry {
                label,
                version,
                needles,
                raw,
            });
        }
        entries.sort_by(|a, b| b.version.cmp(&a.version));
        Ok(CovenantFingerprints { entries })
    }

    pub fn to_json(&self) -> String {
        let file: BTreeMap<&str, &Vec<String>> = self
            .entries
            .iter()
            .map(|e| (e.label.as_str(), &e.raw))
            .collect();
        serde_json::to_string_pretty(&file).expect("fingerprints serialize")
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }

    /// Returns the highest version whose phrases all occur in the text.
    pub fn detect_version(&self, text: &str) -> Option<&str> {
        let hay = collapse_ws(text).to_lowercase();
        self.entries
            .iter()
            .find(|e| e.needles.iter().all(|n| hay.contains(n.as_str())))
            .map(|e| e.label.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FingerprintError {
    #[error("fingerprints are not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("version label {0:?} is not a dotted number")]
    BadLabel(String),
    #[error("version {0:?} has no usable phrases")]
    NoPhrases(String),
    #[error("phrase {phrase:?} appears under both {first:?} and {second:?}")]
    SharedPhrase {
        phrase: String,
        first: String,
        second: String,
    },
}

/// Extracts http(s) links in order of first appearance, without duplicates.
/// Trailing sentence punctuation is not part of a link.
pub fn extract_links(text: &str) -> Vec<String> {
    let mut seen = Vec::new();
    for m in URL_RE.find_iter(text) {
        let link = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?']);
        if link.is_empty() {
            continue;
        }
        if !seen.iter().any(|s| s == link) {
            seen.push(link.to_string());
        }
    }
    seen
}

/// True when the text names the Contributor Covenant or links to its site.
pub fn detect_covenant_reference(text: &str) -> bool {
    if collapse_ws(text).to_lowercase().contains("contributor covenant") {
        return true;
    }
    extract_links(text).iter().any(|link| {
        url::Url::parse(link)
            .ok()
            .and_then(|u| u.host_str().map(|h| h.to_lowercase()))
            .map(|host| {
                host == "contributor-covenant.org" || host.ends_with(".contributor-covenant.org")
            })
            .unwrap_or(false)
    })
}

/// Counts lines that carry at least one alphanumeric character. Blank lines
/// and pure markup lines (rules, fences, bullet dashes) do not count.
pub fn effective_line_count(text: &str) -> usize {
    text.lines()
        .filter(|line| line.chars().any(|c| c.is_alphanumeric()))
        .count()
}
