//! The forge abstraction: everything the engine does against a code host
//! goes through [`Forge`], so the orchestrator cannot tell a real forge from
//! the simulated one used in tests and fixtures.
//!
//! Mutations take an idempotency key (derived from the event id and the
//! action kind). An adapter that sees a key it already executed returns the
//! original artifact with `created: false` instead of acting twice. That
//! plus the append-only event ledger makes webhook redelivery harmless.

pub mod fake;
pub mod http;

use serde::{Deserialize, Serialize};

use crate::repo::RepoSnapshot;

/// A pull request the engine wants to open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestSpec {
    pub title: String,
    pub body: String,
    /// Branch the engine creates or reuses for its proposal.
    pub source_branch: String,
    /// Files the proposal writes, path and full content.
    pub files: Vec<(String, String)>,
}

/// An issue the engine wants to open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSpec {
    pub title: String,
    pub body: String,
    pub labels: Vec<String>,
}

/// How a contribution gets marked as inappropriate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "label")]
pub enum MarkAction {
    /// Collapse the contribution so it no longer shows by default.
    Minimize,
    /// Attach a review label instead of hiding anything.
    Label(String),
}

/// Result of a mutation. `created` is false when the idempotency key had
/// already been executed and the existing artifact was returned instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationOutcome {
    pub id: String,
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestSummary {
    pub id: String,
    pub title: String,
    pub source_branch: String,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSummary {
    pub id: String,
    pub title: String,
    pub open: bool,
}

/// A contribution as read back from the forge, with its moderation state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionView {
    pub id: String,
    pub author: String,
    pub body: String,
    pub minimized: bool,
    pub labels: Vec<String>,
    /// Bodies of replies posted under it, oldest first.
    pub replies: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("repository {0} not found")]
    RepoNotFound(String),
    #[error("{kind} {id} not found in {repo}")]
    TargetNotFound {
        repo: String,
        kind: &'static str,
        id: String,
    },
    #[error("file {path} in {repo} is not readable text")]
    NotText { repo: String, path: String },
    #[error("rate limited; retry after {0}s")]
    RateLimited(u64),
    #[error("forge protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
}

/// Operations the engine needs from a code host. All mutations are
/// idempotent under `key`; reads are plain.
pub trait Forge {
    fn get_repo(&self, name: &str) -> Result<RepoSnapshot, ForgeError>;

    /// Full text of one file at the default branch head. `Ok(None)` when
    /// the path does not exist.
    fn get_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError>;

    /// The `count` most-starred repositories whose primary language matches
    /// (case-insensitive). Ordered by stars descending, then name.
    fn top_repositories(&self, language: &str, count: usize) -> Result<Vec<RepoSnapshot>, ForgeError>;

    fn create_pull_request(
        &self,
        repo: &str,
        spec: &PullRequestSpec,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError>;

    fn create_issue(&self, repo: &str, spec: &IssueSpec, key: &str)
        -> Result<MutationOutcome, ForgeError>;

    /// Posts a reply under an existing contribution.
    fn post_comment(
        &self,
        repo: &str,
        target: &str,
        body: &str,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError>;

    /// Marks a contribution as inappropriate, by minimizing it or labeling it.
    fn mark_contribution(
        &self,
        repo: &str,
        target: &str,
        action: &MarkAction,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError>;

    /// The open pull request whose source branch matches, if any.
    fn find_open_pull_request(
        &self,
        repo: &str,
        source_branch: &str,
    ) -> Result<Option<PullRequestSummary>, ForgeError>;

    /// The open issue with exactly this title, if any.
    fn find_open_issue(&self, repo: &str, title: &str) -> Result<Option<IssueSummary>, ForgeError>;

    /// Reads back one contribution with its moderation state.
    fn get_contribution(&self, repo: &str, id: &str) -> Result<Option<ContributionView>, ForgeError>;
}
