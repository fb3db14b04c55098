//! Forge adapter speaking a GitHub-style REST protocol over HTTP.
//!
//! Mutation bodies get a hidden HTML-comment trailer carrying the
//! idempotency key; replay detection scans for that trailer before creating
//! anything, since the protocol itself has no idempotency keys. Requests are
//! paced by a minimum interval, `Retry-After` on 429/503 is honored, and
//! transient failures retry a bounded number of times.
//!
//! The only credential source is the `FORGE_TOKEN` environment variable.
//! Tokens never live in config files.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use super::{
    ContributionView, Forge, ForgeError, IssueSpec, IssueSummary, MarkAction, MutationOutcome,
    PullRequestSpec, PullRequestSummary,
};
use crate::repo::{coc_path_rank, FileEntry, RepoSnapshot};

/// Name of the environment variable holding the API token.
pub const TOKEN_ENV_VAR: &str = "FORGE_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpForgeSettings {
    pub base_url: String,
    /// Read from [`TOKEN_ENV_VAR`]; never from configuration files.
    pub token: Option<String>,
    /// Minimum pause between any two requests.
    pub min_interval_ms: u64,
    /// Extra attempts after a rate limit or server error.
    pub max_retries: u32,
    pub timeout_s: u64,
}

impl Default for HttpForgeSettings {
    fn default() -> Self {
        HttpForgeSettings {
            base_url: "https://api.github.com".to_string(),
            token: std::env::var(TOKEN_ENV_VAR).ok(),
            min_interval_ms: 500,
            max_retries: 3,
            timeout_s: 30,
        }
    }
}

pub struct HttpForge {
    settings: HttpForgeSettings,
    http: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
}

enum Method {
    Get,
    Post,
    Put,
    Patch,
}

/// Longest single Retry-After pause the adapter will honor.
const MAX_RETRY_AFTER: Duration = Duration::from_secs(60);

fn marker(key: &str) -> String {
    format!("\n\n<!-- conduct-bot-key: {key} -->")
}

impl HttpForge {
    pub fn new(settings: HttpForgeSettings) -> Result<HttpForge, ForgeError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_s.max(1)))
            .user_agent("conduct-engine")
            .build()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        Ok(HttpForge {
            settings,
            http,
            last_request: Mutex::new(None),
        })
    }

    fn pace(&self) {
        let min_interval = Duration::from_millis(self.settings.min_interval_ms);
        let mut last = self.last_request.lock().unwrap();
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < min_interval {
                std::thread::sleep(min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    /// One request with pacing, auth, retry on 429/503 (honoring
    /// Retry-After) and on 5xx/transport errors. Returns the final status
    /// and body; 404 is returned, not retried.
    fn request(&self, method: Method, path: &str, body: Option<&Value>) -> Result<(u16, Value), ForgeError> {
        let url = format!("{}{path}", self.settings.base_url.trim_end_matches('/'));
        let attempts = 1 + self.settings.max_retries;
        let mut last_error = None;
        for attempt in 0..attempts {
            self.pace();
            let mut req = match method {
                Method::Get => self.http.get(&url),
                Method::Post => self.http.post(&url),
                Method::Put => self.http.put(&url),
                Method::Patch => self.http.patch(&url),
            };
            if let Some(token) = &self.settings.token {
                req = req.bearer_auth(token);
            }
            if let Some(body) = body {
                req = req.json(body);
            }
            match req.send() {
                Ok(response) => {
                    let status = response.status().as_u16();
                    if status == 429 || status == 503 {
                        let wait = response
                            .headers()
                            .get("retry-after")
                            .and_then(|v| v.to_str().ok())
                            .and_then(|v| v.parse::<u64>().ok())
                            .map(Duration::from_secs)
                            .unwrap_or_else(|| Duration::from_millis(250 * (attempt as u64 + 1)));
                        last_error = Some(ForgeError::RateLimited(wait.as_secs()));
                        std::thread::sleep(wait.min(MAX_RETRY_AFTER));
                        continue;
                    }
                    if status >= 500 {
                        last_error = Some(ForgeError::Protocol(format!("status {status} from {path}")));
                        std::thread::sleep(Duration::from_millis(200 * (attempt as u64 + 1)));
                        continue;
                    }
                    let value = if status == 204 {
                        Value::Null
                    } else {
                        response.json().unwrap_or(Value::Null)
                    };
                    return Ok((status, value));
                }
                Err(e) => {
                    last_error = Some(ForgeError::Transport(e.to_string()));
                    std::thread::sleep(Duration::from_millis(200 * (attempt as u64 + 1)));
                }
            }
        }
        Err(last_error.unwrap_or_else(|| ForgeError::Transport("no attempts made".to_string())))
    }

    fn get(&self, path: &str) -> Result<(u16, Value), ForgeError> {
        self.request(Method::Get, path, None)
    }

    /// GET that must succeed; 404 becomes the given error.
    fn get_ok(&self, path: &str, on_404: impl FnOnce() -> ForgeError) -> Result<Value, ForgeError> {
        let (status, value) = self.get(path)?;
        match status {
            200 => Ok(value),
            404 => Err(on_404()),
            s => Err(ForgeError::Protocol(format!("status {s} from {path}"))),
        }
    }

    /// Follows `per_page`-limited list endpoints by page number until a
    /// short page arrives.
    fn get_paged(&self, path_with_query: &str) -> Result<Vec<Value>, ForgeError> {
        let mut items = Vec::new();
        for page in 1..=10 {
            let sep = if path_with_query.contains('?') { '&' } else { '?' };
            let (status, value) =
                self.get(&format!("{path_with_query}{sep}per_page=100&page={page}"))?;
            if status == 404 {
                return Err(ForgeError::Protocol(format!("status 404 from {path_with_query}")));
            }
            let Some(batch) = value.as_array() else {
                return Err(ForgeError::Protocol(format!("expected a list from {path_with_query}")));
            };
            let len = batch.len();
            items.extend(batch.iter().cloned());
            if len < 100 {
                break;
            }
        }
        Ok(items)
    }

    fn repo_object(&self, name: &str) -> Result<Value, ForgeError> {
        self.get_ok(&format!("/repos/{name}"), || {
            ForgeError::RepoNotFound(name.to_string())
        })
    }

    fn default_branch(&self, name: &str) -> Result<String, ForgeError> {
        Ok(self.repo_object(name)?["default_branch"]
            .as_str()
            .unwrap_or("main")
            .to_string())
    }

    /// Creates `branch` off the default branch head unless it exists.
    fn ensure_branch(&self, repo: &str, branch: &str) -> Result<(), ForgeError> {
        let (status, _) = self.get(&format!("/repos/{repo}/git/ref/heads/{branch}"))?;
        if status == 200 {
            return Ok(());
        }
        let default = self.default_branch(repo)?;
        let head = self.get_ok(&format!("/repos/{repo}/git/ref/heads/{default}"), || {
            ForgeError::Protocol(format!("default branch {default} has no head"))
        })?;
        let sha = head["object"]["sha"].as_str().unwrap_or("").to_string();
        let (status, body) = self.request(
            Method::Post,
            &format!("/repos/{repo}/git/refs"),
            Some(&json!({ "ref": format!("refs/heads/{branch}"), "sha": sha })),
        )?;
        if status == 201 || status == 200 {
            Ok(())
        } else {
            Err(ForgeError::Protocol(format!("creating branch: status {status}, {body}")))
        }
    }

    /// Writes one file on a branch, creating or updating it.
    fn put_file(
        &self,
        repo: &str,
        branch: &str,
        path: &str,
        content: &str,
        message: &str,
    ) -> Result<(), ForgeError> {
        let (status, existing) =
            self.get(&format!("/repos/{repo}/contents/{path}?ref={branch}"))?;
        let mut body = json!({
            "message": message,
            "content": base64::engine::general_purpose::STANDARD.encode(content),
            "branch": branch,
        });
        if status == 200 {
            if let Some(sha) = existing["sha"].as_str() {
                body["sha"] = json!(sha);
            }
        }
        let (status, reply) = self.request(
            Method::Put,
            &format!("/repos/{repo}/contents/{path}"),
            Some(&body),
        )?;
        if status == 200 || status == 201 {
            Ok(())
        } else {
            Err(ForgeError::Protocol(format!("writing {path}: status {status}, {reply}")))
        }
    }

    fn file_mtime(&self, repo: &str, path: &str, fallback: DateTime<Utc>) -> DateTime<Utc> {
        let result = self.get(&format!("/repos/{repo}/commits?path={path}&per_page=1"));
        if let Ok((200, value)) = result {
            if let Some(date) = value
                .get(0)
                .and_then(|c| c["commit"]["committer"]["date"].as_str())
                .and_then(|d| d.parse::<DateTime<Utc>>().ok())
            {
                return date;
            }
        }
        fallback
    }

    fn parse_time(value: &Value, field: &str) -> Result<DateTime<Utc>, ForgeError> {
        value[field]
            .as_str()
            .and_then(|s| s.parse::<DateTime<Utc>>().ok())
            .ok_or_else(|| ForgeError::Protocol(format!("repo object lacks a {field} timestamp")))
    }

    fn snapshot_from(&self, obj: &Value) -> Result<RepoSnapshot, ForgeError> {
        let name = obj["full_name"]
            .as_str()
            .ok_or_else(|| ForgeError::Protocol("repo object lacks full_name".to_string()))?
            .to_string();
        let created_at = Self::parse_time(obj, "created_at")?;
        let last_commit_at = Self::parse_time(obj, "pushed_at")?;

        let (status, tree) = self.get(&format!("/repos/{name}/git/trees/HEAD?recursive=1"))?;
        let mut files = Vec::new();
        if status == 200 {
            if let Some(entries) = tree["tree"].as_array() {
                for entry in entries {
                    if entry["type"].as_str() != Some("blob") {
                        continue;
                    }
                    let Some(path) = entry["path"].as_str() else { continue };
                    // Exact modification times are one commit-list request
                    // per file; only conduct-document candidates are worth
                    // that. Everything else reports the last push.
                    let mtime = if coc_path_rank(path).is_some() {
                        self.file_mtime(&name, path, last_commit_at)
                    } else {
                        last_commit_at
                    };
                    files.push(FileEntry {
                        path: path.to_string(),
                        size: entry["size"].as_u64().unwrap_or(0),
                        last_modified_at: mtime,
                    });
                }
            }
        }

        Ok(RepoSnapshot {
            name,
            url: obj["html_url"].as_str().unwrap_or_default().to_string(),
            created_at,
            last_commit_at,
            primary_language: obj["language"].as_str().map(str::to_string),
            stars: obj["stargazers_count"].as_u64().unwrap_or(0),
            files,
        })
    }

    fn issue_list(&self, repo: &str, state: &str) -> Result<Vec<Value>, ForgeError> {
        self.get_paged(&format!("/repos/{repo}/issues?state={state}"))
    }
}

impl Forge for HttpForge {
    fn get_repo(&self, name: &str) -> Result<RepoSnapshot, ForgeError> {
        let obj = self.repo_object(name)?;
        self.snapshot_from(&obj)
    }

    fn get_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError> {
        let (status, value) = self.get(&format!("/repos/{repo}/contents/{path}"))?;
        match status {
            404 => Ok(None),
            200 => {
                let encoded = value["content"].as_str().unwrap_or_default().replace(['\n', ' '], "");
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(encoded)
                    .map_err(|e| ForgeError::Protocol(format!("bad base64 for {path}: {e}")))?;
                match String::from_utf8(bytes) {
                    Ok(text) => Ok(Some(text)),
                    Err(_) => Err(ForgeError::NotText {
                        repo: repo.to_string(),
                        path: path.to_string(),
                    }),
                }
            }
            s => Err(ForgeError::Protocol(format!("status {s} reading {path}"))),
        }
    }

    fn top_repositories(&self, language: &str, count: usize) -> Result<Vec<RepoSnapshot>, ForgeError> {
        let (status, value) = self.get(&format!(
            "/search/repositories?q=language:{language}&sort=stars&order=desc&per_page={count}"
        ))?;
        if status != 200 {
            return Err(ForgeError::Protocol(format!("search returned status {status}")));
        }
        let Some(items) = value["items"].as_array() else {
            return Err(ForgeError::Protocol("search reply lacks items".to_string()));
        };
        items
            .iter()
            .take(count)
            .map(|obj| self.snapshot_from(obj))
            .collect()
    }

    fn create_pull_request(
        &self,
        repo: &str,
        spec: &PullRequestSpec,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        let mark = marker(key);
        for pr in self.get_paged(&format!("/repos/{repo}/pulls?state=all"))? {
            if pr["body"].as_str().unwrap_or_default().contains(&mark) {
                return Ok(MutationOutcome {
                    id: pr["number"].to_string(),
                    created: false,
                });
            }
        }

        self.ensure_branch(repo, &spec.source_branch)?;
        for (path, content) in &spec.files {
            self.put_file(repo, &spec.source_branch, path, content, &spec.title)?;
        }
        let base = self.default_branch(repo)?;
        let (status, value) = self.request(
            Method::Post,
            &format!("/repos/{repo}/pulls"),
            Some(&json!({
                "title": spec.title,
                "body": format!("{}{mark}", spec.body),
                "head": spec.source_branch,
                "base": base,
            })),
        )?;
        if status != 201 {
            return Err(ForgeError::Protocol(format!("creating pull request: status {status}, {value}")));
        }
        Ok(MutationOutcome {
            id: value["number"].to_string(),
            created: true,
        })
    }

    fn create_issue(&self, repo: &str, spec: &IssueSpec, key: &str) -> Result<MutationOutcome, ForgeError> {
        let mark = marker(key);
        for issue in self.issue_list(repo, "all")? {
            if issue["body"].as_str().unwrap_or_default().contains(&mark) {
                return Ok(MutationOutcome {
                    id: issue["number"].to_string(),
                    created: false,
                });
            }
        }
        let (status, value) = self.request(
            Method::Post,
            &format!("/repos/{repo}/issues"),
            Some(&json!({
                "title": spec.title,
                "body": format!("{}{mark}", spec.body),
                "labels": spec.labels,
            })),
        )?;
        if status != 201 {
            return Err(ForgeError::Protocol(format!("creating issue: status {status}, {value}")));
        }
        Ok(MutationOutcome {
            id: value["number"].to_string(),
            created: true,
        })
    }

    fn post_comment(
        &self,
        repo: &str,
        target: &str,
        body: &str,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        let mark = marker(key);
        let (status, existing) = self.get(&format!("/repos/{repo}/issues/{target}/comments"))?;
        if status == 404 {
            return Err(ForgeError::TargetNotFound {
                repo: repo.to_string(),
                kind: "contribution",
                id: target.to_string(),
            });
        }
        for comment in existing.as_array().into_iter().flatten() {
            if comment["body"].as_str().unwrap_or_default().contains(&mark) {
                return Ok(MutationOutcome {
                    id: comment["id"].to_string(),
                    created: false,
                });
            }
        }
        let (status, value) = self.request(
            Method::Post,
            &format!("/repos/{repo}/issues/{target}/comments"),
            Some(&json!({ "body": format!("{body}{mark}") })),
        )?;
        match status {
            201 => Ok(MutationOutcome {
                id: value["id"].to_string(),
                created: true,
            }),
            404 => Err(ForgeError::TargetNotFound {
                repo: repo.to_string(),
                kind: "contribution",
                id: target.to_string(),
            }),
            s => Err(ForgeError::Protocol(format!("posting comment: status {s}, {value}"))),
        }
    }

    fn mark_contribution(
        &self,
        repo: &str,
        target: &str,
        action: &MarkAction,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        let _ = key; // marking is naturally idempotent; state is the ledger
        let view = self.get_contribution(repo, target)?.ok_or_else(|| {
            ForgeError::TargetNotFound {
                repo: repo.to_string(),
                kind: "contribution",
                id: target.to_string(),
            }
        })?;
        match action {
            MarkAction::Minimize => {
                if view.minimized {
                    return Ok(MutationOutcome {
                        id: target.to_string(),
                        created: false,
                    });
                }
                let (status, value) = self.request(
                    Method::Patch,
                    &format!("/repos/{repo}/comments/{target}"),
                    Some(&json!({ "minimized": true })),
                )?;
                if status != 200 {
                    return Err(ForgeError::Protocol(format!("minimizing: status {status}, {value}")));
                }
            }
            MarkAction::Label(label) => {
                if view.labels.iter().any(|l| l == label) {
                    return Ok(MutationOutcome {
                        id: target.to_string(),
                        created: false,
                    });
                }
                let (status, value) = self.request(
                    Method::Post,
                    &format!("/repos/{repo}/issues/{target}/labels"),
                    Some(&json!({ "labels": [label] })),
                )?;
                if status != 200 && status != 201 {
                    return Err(ForgeError::Protocol(format!("labeling: status {status}, {value}")));
                }
            }
        }
        Ok(MutationOutcome {
            id: target.to_string(),
            created: true,
        })
    }

    fn find_open_pull_request(
        &self,
        repo: &str,
        source_branch: &str,
    ) -> Result<Option<PullRequestSummary>, ForgeError> {
        for pr in self.get_paged(&format!("/repos/{repo}/pulls?state=open"))? {
            if pr["head"]["ref"].as_str() == Some(source_branch) {
                return Ok(Some(PullRequestSummary {
                    id: pr["number"].to_string(),
                    title: pr["title"].as_str().unwrap_or_default().to_string(),
                    source_branch: source_branch.to_string(),
                    open: true,
                }));
            }
        }
        Ok(None)
    }

    fn find_open_issue(&self, repo: &str, title: &str) -> Result<Option<IssueSummary>, ForgeError> {
        for issue in self.issue_list(repo, "open")? {
            if issue["title"].as_str() == Some(title) {
                return Ok(Some(IssueSummary {
                    id: issue["number"].to_string(),
                    title: title.to_string(),
                    open: true,
                }));
            }
        }
        Ok(None)
    }

    fn get_contribution(&self, repo: &str, id: &str) -> Result<Option<ContributionView>, ForgeError> {
        let (status, value) = self.get(&format!("/repos/{repo}/comments/{id}"))?;
        match status {
            404 => Ok(None),
            200 => {
                let (reply_status, replies) =
                    self.get(&format!("/repos/{repo}/issues/{id}/comments"))?;
                let replies = if reply_status == 200 {
                    replies
                        .as_array()
                        .into_iter()
                        .flatten()
                        .filter_map(|c| c["body"].as_str().map(str::to_string))
                        .collect()
                } else {
                    Vec::new()
                };
                Ok(Some(ContributionView {
                    id: id.to_string(),
                    author: value["user"]["login"].as_str().unwrap_or_default().to_string(),
                    body: value["body"].as_str().unwrap_or_default().to_string(),
                    minimized: value["minimized"].as_bool().unwrap_or(false),
                    labels: value["labels"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .filter_map(|l| l["name"].as_str().map(str::to_string))
                        .collect(),
                    replies,
                }))
            }
            s => Err(ForgeError::Protocol(format!("status {s} reading contribution {id}"))),
        }
    }
}
