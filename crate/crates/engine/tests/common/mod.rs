//! Helpers shared by the integration suites: an HTTP server speaking the
//! GitHub-style protocol over a simulated world, a completion-endpoint stub
//! with scripted replies, and engine builders over throwaway stores.
//!
//! Each integration test binary compiles its own copy of this module and
//! uses a different subset of it, so dead-code warnings are off.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use base64::Engine as _;
use serde_json::{json, Value};

use conduct_engine::config::{EngineConfig, StoresConfig};
use conduct_engine::contribution::{Contribution, ContributionKind};
use conduct_engine::forge::fake::{SimulatedForge, World, WorldContribution, WorldFile, WorldRepo};
use conduct_engine::notify::MemorySink;
use conduct_engine::orchestrator::Engine;

// ---------------------------------------------------------------- worlds --

/// One repository with a README, an optional conduct document, and a single
/// contribution `c-1` by alice. Mirrors the shape the engine's unit tests
/// use so scenario expectations line up.
pub fn world_repo(name: &str, coc: Option<&str>) -> WorldRepo {
    let mut files = vec![WorldFile {
        path: "README.md".to_string(),
        content: "# hello".to_string(),
        last_modified_at: "2024-01-01T00:00:00Z".parse().unwrap(),
        binary: false,
    }];
    if let Some(content) = coc {
        files.push(WorldFile {
            path: "CODE_OF_CONDUCT.md".to_string(),
            content: content.to_string(),
            last_modified_at: "2024-02-01T00:00:00Z".parse().unwrap(),
            binary: false,
        });
    }
    WorldRepo {
        name: name.to_string(),
        url: None,
        created_at: "2020-01-01T00:00:00Z".parse().unwrap(),
        last_commit_at: "2024-06-01T00:00:00Z".parse().unwrap(),
        primary_language: Some("rust".to_string()),
        stars: 100,
        files,
        pull_requests: Vec::new(),
        issues: Vec::new(),
        contributions: vec![WorldContribution {
            id: "c-1".to_string(),
            author: "alice".to_string(),
            body: "hello".to_string(),
            minimized: false,
            labels: Vec::new(),
            replies: Vec::new(),
        }],
    }
}

pub fn base_config(dir: &Path) -> EngineConfig {
    EngineConfig {
        stores: StoresConfig {
            contributions: dir.join("contributions.ndjson"),
            coc: dir.join("coc.ndjson"),
        },
        ..EngineConfig::default()
    }
}

pub fn engine_on(
    world: World,
    config: EngineConfig,
) -> (Engine<SimulatedForge>, Arc<MemorySink>) {
    let sink = Arc::new(MemorySink::new());
    let engine = Engine::with_sink(SimulatedForge::new(world), config, sink.clone()).unwrap();
    (engine, sink)
}

pub fn contribution_event(id: &str, repo: &str, body: &str) -> Contribution {
    Contribution {
        event_id: id.to_string(),
        repo: repo.to_string(),
        kind: ContributionKind::Comment,
        author: "alice".to_string(),
        body: body.to_string(),
        created_at: "2024-06-02T10:00:00Z".parse().unwrap(),
    }
}

// ----------------------------------------------------------- forge stub --

/// In-process HTTP server speaking the GitHub-style REST protocol over a
/// [`World`]. Mutations update the world; fault injection covers rate
/// limits and server errors.
pub struct GithubStub {
    server: Arc<tiny_http::Server>,
    state: Arc<Mutex<StubState>>,
    thread: Option<JoinHandle<()>>,
}

pub struct StubState {
    pub world: World,
    /// repo -> branch -> files written on that branch.
    branches: HashMap<String, HashMap<String, Vec<(String, String)>>>,
    next_number: u64,
    /// Answer the next n requests with 429 + Retry-After: 0.
    pub rate_limit_next: u32,
    /// Answer the next n requests with 500.
    pub fail_next: u32,
    pub last_auth: Option<String>,
    pub requests: u64,
}

impl GithubStub {
    pub fn start(world: World) -> GithubStub {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let state = Arc::new(Mutex::new(StubState {
            world,
            branches: HashMap::new(),
            next_number: 100,
            rate_limit_next: 0,
            fail_next: 0,
            last_auth: None,
            requests: 0,
        }));
        let loop_server = server.clone();
        let loop_state = state.clone();
        let thread = std::thread::spawn(move || {
            for mut request in loop_server.incoming_requests() {
                let (status, body, retry_after) = handle(&loop_state, &mut request);
                let mut response = tiny_http::Response::from_string(body.to_string())
                    .with_status_code(status)
                    .with_header(
                        tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                            .expect("static header"),
                    );
                if let Some(seconds) = retry_after {
                    response = response.with_header(
                        tiny_http::Header::from_bytes(&b"Retry-After"[..], seconds.to_string().as_bytes())
                            .expect("static header"),
                    );
                }
                let _ = request.respond(response);
            }
        });
        GithubStub {
            server,
            state,
            thread: Some(thread),
        }
    }

    pub fn base_url(&self) -> String {
        let addr = self.server.server_addr().to_ip().expect("tcp listener");
        format!("http://{addr}")
    }

    pub fn with_state<T>(&self, f: impl FnOnce(&mut StubState) -> T) -> T {
        f(&mut self.state.lock().unwrap())
    }

    pub fn world(&self) -> World {
        self.with_state(|s| s.world.clone())
    }

    pub fn rate_limit_next(&self, n: u32) {
        self.with_state(|s| s.rate_limit_next = n);
    }

    pub fn fail_next(&self, n: u32) {
        self.with_state(|s| s.fail_next = n);
    }

    pub fn last_auth(&self) -> Option<String> {
        self.with_state(|s| s.last_auth.clone())
    }

    pub fn requests(&self) -> u64 {
        self.with_state(|s| s.requests)
    }
}

impl Drop for GithubStub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

fn handle(
    state: &Mutex<StubState>,
    request: &mut tiny_http::Request,
) -> (u16, Value, Option<u64>) {
    let mut st = state.lock().unwrap();
    st.requests += 1;
    st.last_auth = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.to_string());
    if st.rate_limit_next > 0 {
        st.rate_limit_next -= 1;
        return (429, json!({ "message": "rate limited" }), Some(0));
    }
    if st.fail_next > 0 {
        st.fail_next -= 1;
        return (500, json!({ "message": "server error" }), None);
    }

    let method = request.method().as_str().to_uppercase();
    let url = request.url().to_string();
    let (path, query) = split_query(&url);
    let mut raw_body = String::new();
    let _ = request.as_reader().read_to_string(&mut raw_body);
    let body: Value = serde_json::from_str(&raw_body).unwrap_or(Value::Null);
    let decoded: Vec<String> = path
        .trim_start_matches('/')
        .split('/')
        .map(percent_decode)
        .collect();
    let seg: Vec<&str> = decoded.iter().map(|s| s.as_str()).collect();
    let (status, value) = route(&mut st, &method, &seg, &query, &body);
    (status, value, None)
}

fn split_query(url: &str) -> (String, HashMap<String, String>) {
    let mut query = HashMap::new();
    let (path, qs) = match url.split_once('?') {
        Some((p, q)) => (p, q),
        None => (url, ""),
    };
    for pair in qs.split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        query.insert(percent_decode(k), percent_decode(v));
    }
    (path.to_string(), query)
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(byte) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(byte);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn repo_json(repo: &WorldRepo) -> Value {
    json!({
        "full_name": repo.name,
        "html_url": repo.url(),
        "created_at": repo.created_at,
        "pushed_at": repo.last_commit_at,
        "language": repo.primary_language,
        "stargazers_count": repo.stars,
        "default_branch": "main",
    })
}

fn number_of(id: &str, fallback: u64) -> u64 {
    id.parse().unwrap_or(90_000 + fallback)
}

fn paged(items: Vec<Value>, query: &HashMap<String, String>) -> Value {
    let per_page: usize = query.get("per_page").and_then(|v| v.parse().ok()).unwrap_or(30);
    let page: usize = query.get("page").and_then(|v| v.parse().ok()).unwrap_or(1).max(1);
    let start = (page - 1) * per_page;
    let slice: Vec<Value> = items.into_iter().skip(start).take(per_page).collect();
    Value::Array(slice)
}

fn route(
    st: &mut StubState,
    method: &str,
    seg: &[&str],
    query: &HashMap<String, String>,
    body: &Value,
) -> (u16, Value) {
    let not_found = || (404, json!({ "message": "not found" }));

    match (method, seg) {
        ("GET", ["search", "repositories"]) => {
            let q = query.get("q").cloned().unwrap_or_default();
            let language = q
                .split_whitespace()
                .find_map(|term| term.strip_prefix("language:"))
                .unwrap_or("")
                .to_string();
            let mut matching: Vec<&WorldRepo> = st
                .world
                .repos
                .iter()
                .filter(|r| {
                    r.primary_language
                        .as_deref()
                        .map(|l| l.eq_ignore_ascii_case(&language))
                        .unwrap_or(false)
                })
                .collect();
            matching.sort_by(|a, b| b.stars.cmp(&a.stars).then_with(|| a.name.cmp(&b.name)));
            let items: Vec<Value> = matching.into_iter().map(repo_json).collect();
            (200, json!({ "items": items }))
        }

        ("GET", ["repos", owner, name]) => {
            let full = format!("{owner}/{name}");
            match st.world.repos.iter().find(|r| r.name == full) {
                Some(repo) => (200, repo_json(repo)),
                None => not_found(),
            }
        }

        ("GET", ["repos", owner, name, "git", "trees", "HEAD"]) => {
            let full = format!("{owner}/{name}");
            match st.world.repos.iter().find(|r| r.name == full) {
                Some(repo) => {
                    let entries: Vec<Value> = repo
                        .files
                        .iter()
                        .map(|f| {
                            json!({
                                "type": "blob",
                                "path": f.path,
                                "size": f.content.len(),
                            })
                        })
                        .collect();
                    (200, json!({ "tree": entries }))
                }
                None => not_found(),
            }
        }

        ("GET", ["repos", owner, name, "commits"]) => {
            let full = format!("{owner}/{name}");
            let path = query.get("path").cloned().unwrap_or_default();
            match st.world.repos.iter().find(|r| r.name == full) {
                Some(repo) => match repo.files.iter().find(|f| f.path == path) {
                    Some(f) => (
                        200,
                        json!([{ "commit": { "committer": { "date": f.last_modified_at } } }]),
                    ),
                    None => (200, json!([])),
                },
                None => not_found(),
            }
        }

        ("GET", ["repos", owner, name, "git", "ref", "heads", branch @ ..]) => {
            let full = format!("{owner}/{name}");
            let branch = branch.join("/");
            let exists = branch == "main"
                || st
                    .branches
                    .get(&full)
                    .map(|b| b.contains_key(&branch))
                    .unwrap_or(false);
            if exists {
                (200, json!({ "object": { "sha": "stub-sha" } }))
            } else {
                not_found()
            }
        }

        ("POST", ["repos", owner, name, "git", "refs"]) => {
            let full = format!("{owner}/{name}");
            let branch = body["ref"]
                .as_str()
                .unwrap_or_default()
                .trim_start_matches("refs/heads/")
                .to_string();
            st.branches.entry(full).or_default().entry(branch).or_default();
            (201, json!({ "ref": body["ref"] }))
        }

        ("GET", ["repos", owner, name, "contents", path @ ..]) => {
            let full = format!("{owner}/{name}");
            let path = path.join("/");
            if let Some(reference) = query.get("ref") {
                if let Some(files) = st.branches.get(&full).and_then(|b| b.get(reference)) {
                    if let Some((_, content)) = files.iter().find(|(p, _)| *p == path) {
                        let encoded = base64::engine::general_purpose::STANDARD.encode(content);
                        return (200, json!({ "content": encoded, "sha": "stub-sha" }));
                    }
                }
            }
            match st.world.repos.iter().find(|r| r.name == full) {
                Some(repo) => match repo.files.iter().find(|f| f.path == path) {
                    Some(f) => {
                        let mut bytes = Vec::new();
                        if f.binary {
                            // two bytes no UTF-8 sequence may contain
                            bytes.extend_from_slice(&[0xC0, 0xC1]);
                        }
                        bytes.extend_from_slice(f.content.as_bytes());
                        let encoded = base64::engine::general_purpose::STANDARD.encode(&bytes);
                        (200, json!({ "content": encoded, "sha": "stub-sha" }))
                    }
                    None => not_found(),
                },
                None => not_found(),
            }
        }

        ("PUT", ["repos", owner, name, "contents", path @ ..]) => {
            let full = format!("{owner}/{name}");
            let path = path.join("/");
            let branch = body["branch"].as_str().unwrap_or("main").to_string();
            let decoded = base64::engine::general_purpose::STANDARD
                .decode(body["content"].as_str().unwrap_or_default())
                .unwrap_or_default();
            let content = String::from_utf8_lossy(&decoded).into_owned();
            let files = st.branches.entry(full).or_default().entry(branch).or_default();
            match files.iter_mut().find(|(p, _)| *p == path) {
                Some(slot) => slot.1 = content,
                None => files.push((path, content)),
            }
            (201, json!({ "content": { "sha": "stub-sha" } }))
        }

        ("GET", ["repos", owner, name, "pulls"]) => {
            let full = format!("{owner}/{name}");
            let state_filter = query.get("state").map(String::as_str).unwrap_or("open");
            match st.world.repos.iter().find(|r| r.name == full) {
                Some(repo) => {
                    let items: Vec<Value> = repo
                        .pull_requests
                        .iter()
                        .enumerate()
                        .filter(|(_, pr)| state_filter == "all" || pr.open)
                        .map(|(i, pr)| {
                            json!({
                                "number": number_of(&pr.id, i as u64),
                                "title": pr.title,
                                "body": pr.body,
                                "head": { "ref": pr.source_branch },
                            })
                        })
                        .collect();
                    (200, paged(items, query))
                }
                None => not_found(),
            }
        }

        ("POST", ["repos", owner, name, "pulls"]) => {
            let full = format!("{owner}/{name}");
            let head = body["head"].as_str().unwrap_or_default().to_string();
            let number = st.next_number;
            st.next_number += 1;
            let files = st
                .branches
                .get(&full)
                .and_then(|b| b.get(&head))
                .cloned()
                .unwrap_or_default();
            let Some(repo) = st.world.repos.iter_mut().find(|r| r.name == full) else {
                return not_found();
            };
            if repo.pull_requests.iter().any(|pr| pr.open && pr.source_branch == head) {
                return (422, json!({ "message": "pull request for branch already exists" }));
            }
            repo.pull_requests.push(conduct_engine::forge::fake::WorldPullRequest {
                id: number.to_string(),
                title: body["title"].as_str().unwrap_or_default().to_string(),
                body: body["body"].as_str().unwrap_or_default().to_string(),
                source_branch: head,
                open: true,
                files,
            });
            (201, json!({ "number": number }))
        }

        ("GET", ["repos", owner, name, "issues"]) => {
            let full = format!("{owner}/{name}");
            let state_filter = query.get("state").map(String::as_str).unwrap_or("open");
            match st.world.repos.iter().find(|r| r.name == full) {
                Some(repo) => {
                    let items: Vec<Value> = repo
                        .issues
                        .iter()
                        .enumerate()
                        .filter(|(_, i)| state_filter == "all" || i.open)
                        .map(|(i, issue)| {
                            let labels: Vec<Value> =
                                issue.labels.iter().map(|l| json!({ "name": l })).collect();
                            json!({
                                "number": number_of(&issue.id, i as u64),
                                "title": issue.title,
                                "body": issue.body,
                                "labels": labels,
                            })
                        })
                        .collect();
                    (200, paged(items, query))
                }
                None => not_found(),
            }
        }

        ("POST", ["repos", owner, name, "issues"]) => {
            let full = format!("{owner}/{name}");
            let number = st.next_number;
            st.next_number += 1;
            let Some(repo) = st.world.repos.iter_mut().find(|r| r.name == full) else {
                return not_found();
            };
            let labels = body["labels"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|l| l.as_str().map(str::to_string))
                .collect();
            repo.issues.push(conduct_engine::forge::fake::WorldIssue {
                id: number.to_string(),
                title: body["title"].as_str().unwrap_or_default().to_string(),
                body: body["body"].as_str().unwrap_or_default().to_string(),
                labels,
                open: true,
            });
            (201, json!({ "number": number }))
        }

        ("GET", ["repos", owner, name, "issues", id, "comments"]) => {
            let full = format!("{owner}/{name}");
            match st
                .world
                .repos
                .iter()
                .find(|r| r.name == full)
                .and_then(|r| r.contributions.iter().find(|c| c.id == *id))
            {
                Some(c) => {
                    let items: Vec<Value> = c
                        .replies
                        .iter()
                        .enumerate()
                        .map(|(i, body)| json!({ "id": i + 1, "body": body }))
                        .collect();
                    (200, Value::Array(items))
                }
                None => not_found(),
            }
        }

        ("POST", ["repos", owner, name, "issues", id, "comments"]) => {
            let full = format!("{owner}/{name}");
            let number = st.next_number;
            st.next_number += 1;
            match st
                .world
                .repos
                .iter_mut()
                .find(|r| r.name == full)
                .and_then(|r| r.contributions.iter_mut().find(|c| c.id == *id))
            {
                Some(c) => {
                    c.replies.push(body["body"].as_str().unwrap_or_default().to_string());
                    (201, json!({ "id": number }))
                }
                None => not_found(),
            }
        }

        ("POST", ["repos", owner, name, "issues", id, "labels"]) => {
            let full = format!("{owner}/{name}");
            match st
                .world
                .repos
                .iter_mut()
                .find(|r| r.name == full)
                .and_then(|r| r.contributions.iter_mut().find(|c| c.id == *id))
            {
                Some(c) => {
                    for label in body["labels"].as_array().into_iter().flatten() {
                        if let Some(label) = label.as_str() {
                            if !c.labels.iter().any(|l| l == label) {
                                c.labels.push(label.to_string());
                            }
                        }
                    }
                    (200, json!({}))
                }
                None => not_found(),
            }
        }

        ("GET", ["repos", owner, name, "comments", id]) => {
            let full = format!("{owner}/{name}");
            match st
                .world
                .repos
                .iter()
                .find(|r| r.name == full)
                .and_then(|r| r.contributions.iter().find(|c| c.id == *id))
            {
                Some(c) => {
                    let labels: Vec<Value> = c.labels.iter().map(|l| json!({ "name": l })).collect();
                    (
                        200,
                        json!({
                            "user": { "login": c.author },
                            "body": c.body,
                            "minimized": c.minimized,
                            "labels": labels,
                        }),
                    )
                }
                None => not_found(),
            }
        }

        ("PATCH", ["repos", owner, name, "comments", id]) => {
            let full = format!("{owner}/{name}");
            match st
                .world
                .repos
                .iter_mut()
                .find(|r| r.name == full)
                .and_then(|r| r.contributions.iter_mut().find(|c| c.id == *id))
            {
                Some(c) => {
                    if body["minimized"].as_bool() == Some(true) {
                        c.minimized = true;
                    }
                    (200, json!({}))
                }
                None => not_found(),
            }
        }

        _ => not_found(),
    }
}

// ------------------------------------------------------------- llm stub --

#[derive(Debug, Clone)]
pub enum LlmReply {
    /// 200 with this completion text in the `response` field.
    Text(String),
    /// A bare HTTP status with no completion.
    Status(u16),
}

/// Completion endpoint stub. Scripted replies are consumed in order; once
/// the script runs dry every request gets the fallback.
pub struct LlmStub {
    server: Arc<tiny_http::Server>,
    state: Arc<Mutex<LlmState>>,
    thread: Option<JoinHandle<()>>,
}

struct LlmState {
    script: Vec<LlmReply>,
    fallback: LlmReply,
    prompts: Vec<String>,
}

impl LlmStub {
    pub fn start(fallback: LlmReply) -> LlmStub {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let state = Arc::new(Mutex::new(LlmState {
            script: Vec::new(),
            fallback,
            prompts: Vec::new(),
        }));
        let loop_server = server.clone();
        let loop_state = state.clone();
        let thread = std::thread::spawn(move || {
            for mut request in loop_server.incoming_requests() {
                let mut raw = String::new();
                let _ = request.as_reader().read_to_string(&mut raw);
                let reply = {
                    let mut st = loop_state.lock().unwrap();
                    let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
                    if let Some(prompt) = body["prompt"].as_str() {
                        st.prompts.push(prompt.to_string());
                    }
                    if st.script.is_empty() {
                        st.fallback.clone()
                    } else {
                        st.script.remove(0)
                    }
                };
                let (status, body) = match reply {
                    LlmReply::Text(text) => (200, json!({ "response": text })),
                    LlmReply::Status(code) => (code, json!({ "message": "scripted failure" })),
                };
                let response = tiny_http::Response::from_string(body.to_string())
                    .with_status_code(status)
                    .with_header(
                        tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                            .expect("static header"),
                    );
                let _ = request.respond(response);
            }
        });
        LlmStub {
            server,
            state,
            thread: Some(thread),
        }
    }

    pub fn base_url(&self) -> String {
        let addr = self.server.server_addr().to_ip().expect("tcp listener");
        format!("http://{addr}")
    }

    pub fn script(&self, replies: Vec<LlmReply>) {
        self.state.lock().unwrap().script = replies;
    }

    pub fn set_fallback(&self, reply: LlmReply) {
        self.state.lock().unwrap().fallback = reply;
    }

    pub fn prompts(&self) -> Vec<String> {
        self.state.lock().unwrap().prompts.clone()
    }
}

impl Drop for LlmStub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}
