//! Repository inspection: finding the conduct document among a repository's
//! files and scoring how fresh it is relative to the project's history.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One file a forge reports for a repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub size: u64,
    pub last_modified_at: DateTime<Utc>,
}

/// A repository as seen through a forge, reduced to what the engine needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    /// "owner/name".
    pub name: String,
    pub url: String,
    pub created_at: DateTime<Utc>,
    pub last_commit_at: DateTime<Utc>,
    pub primary_language: Option<String>,
    pub stars: u64,
    pub files: Vec<FileEntry>,
}

/// Directories checked for a conduct document, in priority order.
const COC_DIRS: [&str; 3] = ["", "docs/", ".github/"];

/// Filename stems checked within each directory, in priority order.
const COC_STEMS: [&str; 2] = ["code_of_conduct", "code-of-conduct"];

/// Extensions checked for each stem, in priority order.
const COC_EXTS: [&str; 5] = [".md", ".txt", ".adoc", ".rst", ""];

/// Priority of a path as a conduct-document candidate; lower is better,
/// `None` means the path is not a candidate at all. Case-insensitive.
pub fn coc_path_rank(path: &str) -> Option<usize> {
    let lowered = path.to_lowercase();
    let mut rank = 0;
    for dir in COC_DIRS {
        for stem in COC_STEMS {
            for ext in COC_EXTS {
                if lowered == format!("{dir}{stem}{ext}") {
                    return Some(rank);
                }
                rank += 1;
            }
        }
    }
    None
}

/// Finds the conduct document. The search is by priority, not by listing
/// order: root beats docs/ beats .github/, underscores beat dashes, and
/// Markdown beats other extensions, so the same snapshot always yields the
/// same file no matter how the forge ordered it. Paths tying in rank (case
/// variants of one name) fall back to lexicographic order.
pub fn locate_coc(repo: &RepoSnapshot) -> Option<&FileEntry> {
    repo.files
        .iter()
        .filter_map(|f| coc_path_rank(&f.path).map(|rank| (rank, f)))
        .min_by(|(ra, fa), (rb, fb)| ra.cmp(rb).then_with(|| fa.path.cmp(&fb.path)))
        .map(|(_, f)| f)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TimelineError {
    #[error("last commit {last_commit} predates repository creation {created}")]
    CommitBeforeCreation {
        created: DateTime<Utc>,
        last_commit: DateTime<Utc>,
    },
    #[error("conduct document modified at {modified}, outside [{created}, {last_commit}]")]
    ModifiedOutsideLifespan {
        created: DateTime<Utc>,
        last_commit: DateTime<Utc>,
        modified: DateTime<Utc>,
    },
}

/// Seconds in one Julian year; the unit all durations are reported in.
pub const SECONDS_PER_YEAR: f64 = 31_557_600.0;

/// Elapsed time in Julian years. Negative when `to` precedes `from`.
pub fn years_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_seconds() as f64 / SECONDS_PER_YEAR
}

/// How stale the conduct document is, in [0, 1]: 0 means it changed at the
/// last commit, 1 means it has not been touched since the repository was
/// created. A zero-lifespan repository scores 0.
pub fn freshness(
    created_at: DateTime<Utc>,
    coc_modified_at: DateTime<Utc>,
    last_commit_at: DateTime<Utc>,
) -> Result<f64, TimelineError> {
    if last_commit_at < created_at {
        return Err(TimelineError::CommitBeforeCreation {
            created: created_at,
            last_commit: last_commit_at,
        });
    }
    if coc_modified_at < created_at || coc_modified_at > last_commit_at {
        return Err(TimelineError::ModifiedOutsideLifespan {
            created: created_at,
            last_commit: last_commit_at,
            modified: coc_modified_at,
        });
    }
    let lifespan = years_between(created_at, last_commit_at);
    if lifespan == 0.0 {
        return Ok(0.0);
    }
    Ok(years_between(coc_modified_at, last_commit_at) / lifespan)
}
