//! An in-memory forge. World state loads from a JSON fixture, every
//! mutation is immediately visible to subsequent reads, and the whole state
//! can be snapshotted for assertions. Used by tests, the fixture-backed CLI
//! modes, and the miner's committed corpus.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    ContributionView, Forge, ForgeError, IssueSpec, IssueSummary, MarkAction, MutationOutcome,
    PullRequestSpec, PullRequestSummary,
};
use crate::repo::{FileEntry, RepoSnapshot};

/// Serialized world state; the fixture file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct World {
    pub repos: Vec<WorldRepo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldRepo {
    /// "owner/name".
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub created_at: DateTime<Utc>,
    pub last_commit_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_language: Option<String>,
    #[serde(default)]
    pub stars: u64,
    #[serde(default)]
    pub files: Vec<WorldFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pull_requests: Vec<WorldPullRequest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<WorldIssue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contributions: Vec<WorldContribution>,
}

impl WorldRepo {
    pub fn url(&self) -> String {
        self.url
            .clone()
            .unwrap_or_else(|| format!("https://forge.example/{}", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldFile {
    pub path: String,
    pub content: String,
    pub last_modified_at: DateTime<Utc>,
    /// True for files that are not text; reading them fails like a binary
    /// blob would.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldPullRequest {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source_branch: String,
    pub open: bool,
    #[serde(default)]
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldIssue {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub labels: Vec<String>,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldContribution {
    pub id: String,
    pub author: String,
    pub body: String,
    #[serde(default)]
    pub minimized: bool,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub replies: Vec<String>,
}

/// The in-memory forge.
pub struct SimulatedForge {
    state: Mutex<World>,
    executed: Mutex<HashMap<String, MutationOutcome>>,
    next_id: AtomicU64,
}

impl SimulatedForge {
    pub fn new(world: World) -> SimulatedForge {
        SimulatedForge {
            state: Mutex::new(world),
            executed: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1000),
        }
    }

    pub fn from_json(json: &str) -> Result<SimulatedForge, ForgeError> {
        let world: World =
            serde_json::from_str(json).map_err(|e| ForgeError::Protocol(e.to_string()))?;
        Ok(SimulatedForge::new(world))
    }

    pub fn from_json_file(path: &Path) -> Result<SimulatedForge, ForgeError> {
        let json = std::fs::read_to_string(path).map_err(|e| {
            ForgeError::Transport(format!("cannot read {}: {e}", path.display()))
        })?;
        SimulatedForge::from_json(&json)
    }

    /// Deep copy of the current world, for assertions and persistence.
    pub fn snapshot(&self) -> World {
        self.state.lock().unwrap().clone()
    }

    /// Edit the world in place, e.g. to simulate a push between events.
    pub fn apply<F: FnOnce(&mut World)>(&self, f: F) {
        f(&mut self.state.lock().unwrap());
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}-{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn replay(&self, key: &str) -> Option<MutationOutcome> {
        self.executed.lock().unwrap().get(key).map(|o| MutationOutcome {
            id: o.id.clone(),
            created: false,
        })
    }

    fn record(&self, key: &str, id: &str, created: bool) -> MutationOutcome {
        let outcome = MutationOutcome {
            id: id.to_string(),
            created,
        };
        self.executed
            .lock()
            .unwrap()
            .insert(key.to_string(), outcome.clone());
        outcome
    }

    fn with_repo<T>(
        &self,
        name: &str,
        f: impl FnOnce(&mut WorldRepo) -> Result<T, ForgeError>,
    ) -> Result<T, ForgeError> {
        let mut world = self.state.lock().unwrap();
        let repo = world
            .repos
            .iter_mut()
            .find(|r| r.name == name)
            .ok_or_else(|| ForgeError::RepoNotFound(name.to_string()))?;
        f(repo)
    }
}

fn snapshot_of(repo: &WorldRepo) -> RepoSnapshot {
    RepoSnapshot {
        name: repo.name.clone(),
        url: repo.url(),
        created_at: repo.created_at,
        last_commit_at: repo.last_commit_at,
        primary_language: repo.primary_language.clone(),
        stars: repo.stars,
        files: repo
            .files
            .iter()
            .map(|f| FileEntry {
                path: f.path.clone(),
                size: f.content.len() as u64,
                last_modified_at: f.last_modified_at,
            })
            .collect(),
    }
}

impl Forge for SimulatedForge {
    fn get_repo(&self, name: &str) -> Result<RepoSnapshot, ForgeError> {
        let world = self.state.lock().unwrap();
        world
            .repos
            .iter()
            .find(|r| r.name == name)
            .map(snapshot_of)
            .ok_or_else(|| ForgeError::RepoNotFound(name.to_string()))
    }

    fn get_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError> {
        self.with_repo(repo, |r| {
            match r.files.iter().find(|f| f.path == path) {
                Some(f) if f.binary => Err(ForgeError::NotText {
                    repo: repo.to_string(),
                    path: path.to_string(),
                }),
                Some(f) => Ok(Some(f.content.clone())),
                None => Ok(None),
            }
        })
    }

    fn top_repositories(&self, language: &str, count: usize) -> Result<Vec<RepoSnapshot>, ForgeError> {
        let world = self.state.lock().unwrap();
        let mut matching: Vec<&WorldRepo> = world
            .repos
            .iter()
            .filter(|r| {
                r.primary_language
                    .as_deref()
                    .map(|l| l.eq_ignore_ascii_case(language))
                    .unwrap_or(false)
            })
            .collect();
        matching.sort_by(|a, b| b.stars.cmp(&a.stars).then_with(|| a.name.cmp(&b.name)));
        Ok(matching.into_iter().take(count).map(snapshot_of).collect())
    }

    fn create_pull_request(
        &self,
        repo: &str,
        spec: &PullRequestSpec,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        if let Some(prior) = self.replay(key) {
            return Ok(prior);
        }
        let id = self.fresh_id("pr");
        self.with_repo(repo, |r| {
            if r.pull_requests
                .iter()
                .any(|pr| pr.open && pr.source_branch == spec.source_branch)
            {
                return Err(ForgeError::Protocol(format!(
                    "an open pull request for branch {} already exists",
                    spec.source_branch
                )));
            }
            r.pull_requests.push(WorldPullRequest {
                id: id.clone(),
                title: spec.title.clone(),
                body: spec.body.clone(),
                source_branch: spec.source_branch.clone(),
                open: true,
                files: spec.files.clone(),
            });
            Ok(())
        })?;
        Ok(self.record(key, &id, true))
    }

    fn create_issue(&self, repo: &str, spec: &IssueSpec, key: &str) -> Result<MutationOutcome, ForgeError> {
        if let Some(prior) = self.replay(key) {
            return Ok(prior);
        }
        let id = self.fresh_id("issue");
        self.with_repo(repo, |r| {
            r.issues.push(WorldIssue {
                id: id.clone(),
                title: spec.title.clone(),
                body: spec.body.clone(),
                labels: spec.labels.clone(),
                open: true,
            });
            Ok(())
        })?;
        Ok(self.record(key, &id, true))
    }

    fn post_comment(
        &self,
        repo: &str,
        target: &str,
        body: &str,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        if let Some(prior) = self.replay(key) {
            return Ok(prior);
        }
        let id = self.fresh_id("reply");
        self.with_repo(repo, |r| {
            let c = r
                .contributions
                .iter_mut()
                .find(|c| c.id == target)
                .ok_or_else(|| ForgeError::TargetNotFound {
                    repo: repo.to_string(),
                    kind: "contribution",
                    id: target.to_string(),
                })?;
            c.replies.push(body.to_string());
            Ok(())
        })?;
        Ok(self.record(key, &id, true))
    }

    fn mark_contribution(
        &self,
        repo: &str,
        target: &str,
        action: &MarkAction,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        if let Some(prior) = self.replay(key) {
            return Ok(prior);
        }
        let changed = self.with_repo(repo, |r| {
            let c = r
                .contributions
                .iter_mut()
                .find(|c| c.id == target)
                .ok_or_else(|| ForgeError::TargetNotFound {
                    repo: repo.to_string(),
                    kind: "contribution",
                    id: target.to_string(),
                })?;
            Ok(match action {
                MarkAction::Minimize => {
                    let changed = !c.minimized;
                    c.minimized = true;
                    changed
                }
                MarkAction::Label(label) => {
                    if c.labels.iter().any(|l| l == label) {
                        false
                    } else {
                        c.labels.push(label.clone());
                        true
                    }
                }
            })
        })?;
        Ok(self.record(key, target, changed))
    }

    fn find_open_pull_request(
        &self,
        repo: &str,
        source_branch: &str,
    ) -> Result<Option<PullRequestSummary>, ForgeError> {
        self.with_repo(repo, |r| {
            Ok(r.pull_requests
                .iter()
                .find(|pr| pr.open && pr.source_branch == source_branch)
                .map(|pr| PullRequestSummary {
                    id: pr.id.clone(),
                    title: pr.title.clone(),
                    source_branch: pr.source_branch.clone(),
                    open: pr.open,
                }))
        })
    }

    fn find_open_issue(&self, repo: &str, title: &str) -> Result<Option<IssueSummary>, ForgeError> {
        self.with_repo(repo, |r| {
            Ok(r.issues
                .iter()
                .find(|i| i.open && i.title == title)
                .map(|i| IssueSummary {
                    id: i.id.clone(),
                    title: i.title.clone(),
                    open: i.open,
                }))
        })
    }

    fn get_contribution(&self, repo: &str, id: &str) -> Result<Option<ContributionView>, ForgeError> {
        self.with_repo(repo, |r| {
            Ok(r.contributions.iter().find(|c| c.id == id).map(|c| ContributionView {
                id: c.id.clone(),
                author: c.author.clone(),
                body: c.body.clone(),
                minimized: c.minimized,
                labels: c.labels.clone(),
                replies: c.replies.clone(),
            }))
        })
    }
}
