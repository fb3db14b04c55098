//! Grading a code-of-conduct document: how much of it there is, which
//! published version it matches, which flags it covers, and what is missing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::taxonomy::{FlagId, FlagLexicon};
use crate::text::{self, CovenantFingerprints};

/// Verdict over one conduct document. `Missing` is produced by the callers
/// that looked for a document and found none; `analyze` itself always has
/// text in hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CocStatus {
    Missing,
    /// Too little content to analyze and no pointer elsewhere.
    TooShort,
    /// Too little content, but the document links somewhere else.
    LinkOnly,
    /// Matches a published version older than the configured floor.
    Outdated,
    /// Enough content, current enough, but some flags are not covered.
    Incomplete,
    /// Covers all ten flags.
    Complete,
}

impl CocStatus {
    /// True when the document had enough content for flag detection to mean
    /// something. Only valid analyses enter the flag cache.
    pub fn is_valid(self) -> bool {
        matches!(
            self,
            CocStatus::Outdated | CocStatus::Incomplete | CocStatus::Complete
        )
    }
}

/// Everything the orchestrator needs to know about one conduct document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocAnalysis {
    pub status: CocStatus,
    /// Published version the text matches, if any.
    pub version: Option<String>,
    /// Flags covered by the text, taxonomy order.
    pub detected: Vec<FlagId>,
    /// Flags not covered, taxonomy order. Complements `detected`.
    pub missing: Vec<FlagId>,
    pub effective_lines: usize,
    pub links: Vec<String>,
    pub references_covenant: bool,
    /// sha256 of the raw text; the cache keys change detection on it.
    pub digest: String,
}

/// Thresholds the analysis runs under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisThresholds {
    /// Documents with fewer effective lines than this are not analyzable.
    pub min_lines: usize,
    /// Versions strictly below this are outdated.
    pub outdated_below: String,
}

impl Default for AnalysisThresholds {
    fn default() -> Self {
        AnalysisThresholds {
            min_lines: 5,
            outdated_below: "1.4".to_string(),
        }
    }
}

/// True when `version` parses and sorts strictly below `floor`.
pub fn is_outdated(version: &str, floor: &str) -> bool {
    match (text::parse_version_label(version), text::parse_version_label(floor)) {
        (Some(v), Some(f)) => v < f,
        _ => false,
    }
}

pub fn content_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Grades one conduct document. Length gates everything: a document under
/// the line threshold is `TooShort` or `LinkOnly` and never `Outdated` or
/// `Incomplete`, no matter what else it contains. Version age is checked
/// before completeness, mirroring the order repairs are proposed in.
pub fn analyze(
    lexicon: &FlagLexicon,
    fingerprints: &CovenantFingerprints,
    thresholds: &AnalysisThresholds,
    text: &str,
) -> CocAnalysis {
    let effective_lines = text::effective_line_count(text);
    let links = text::extract_links(text);
    let references_covenant = text::detect_covenant_reference(text);
    let version = fingerprints.detect_version(text).map(str::to_string);
    let report = text::detect_flags(lexicon, text);
    let detected = report.detected.clone();
    let missing: Vec<FlagId> = FlagId::ALL
        .iter()
        .copied()
        .filter(|id| !detected.contains(id))
        .collect();

    let status = if effective_lines < thresholds.min_lines {
        if links.is_empty() {
            CocStatus::TooShort
        } else {
            CocStatus::LinkOnly
        }
    } else if version
        .as_deref()
        .map(|v| is_outdated(v, &thresholds.outdated_below))
        .unwrap_or(false)
    {
        CocStatus::Outdated
    } else if !missing.is_empty() {
        CocStatus::Incomplete
    } else {
        CocStatus::Complete
    };

    CocAnalysis {
        status,
        version,
        detected,
        missing,
        effective_lines,
        links,
        references_covenant,
        digest: content_digest(text),
    }
}

/// The conduct text the engine proposes when a repository has none.
pub const PROPOSED_COC_TEXT: &str = include_str!("../data/covenant/contributor_covenant_2_1.md");

/// Official texts for tests and fixtures.
pub mod reference_texts {
    pub const V1_4: &str = include_str!("../data/covenant/contributor_covenant_1_4.md");
    pub const V2_0: &str = include_str!("../data/covenant/contributor_covenant_2_0.md");
    pub const V2_1: &str = include_str!("../data/covenant/contributor_covenant_2_1.md");
}
