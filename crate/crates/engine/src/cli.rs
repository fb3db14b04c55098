//! Command-line interface. One binary, six subcommands:
//!
//! - `analyze-coc` grades a local conduct document; no credentials, no
//!   network.
//! - `handle-event` runs one contribution event through the engine and
//!   prints the action plan.
//! - `serve` consumes events continuously: newline-delimited JSON on
//!   standard input by default, or HTTP POST with `--http`.
//! - `mine` surveys the top repositories of given languages and reports
//!   conduct-document statistics.
//! - `eval` scores a classifier backend against a labeled dataset; no
//!   credentials, no network in lexicon mode.
//! - `export` dumps a persisted store as CSV.
//!
//! Every subcommand takes `--config`; without it the `ENGINE_CONFIG`
//! environment variable is consulted, then built-in defaults. Exit codes:
//! 0 success, 1 operational failure, 2 usage or configuration error.
//!
//! Commands that talk to a forge accept `--fixture <world.json>` to run
//! against an in-memory simulated forge instead of the HTTP adapter; the
//! HTTP adapter reads its token from `FORGE_TOKEN` only.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::coc;
use crate::config::EngineConfig;
use crate::contribution::llm::LlmClient;
use crate::contribution::{classify_lexicon, Contribution};
use crate::evaluation::{self, LabeledComment};
use crate::forge::fake::SimulatedForge;
use crate::forge::http::{HttpForge, HttpForgeSettings};
use crate::forge::{
    ContributionView, Forge, ForgeError, IssueSpec, IssueSummary, MarkAction, MutationOutcome,
    PullRequestSpec, PullRequestSummary,
};
use crate::miner::{self, ReportFormat};
use crate::orchestrator::Engine;
use crate::persistence::{coc_to_csv, contributions_to_csv};
use crate::repo::RepoSnapshot;
use crate::taxonomy::FlagId;

#[derive(Parser)]
#[command(
    name = "conduct",
    version,
    about = "Conduct-document automation for software forges",
    arg_required_else_help = true
)]
struct Cli {
    /// Configuration file (JSON). Falls back to $ENGINE_CONFIG, then
    /// defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grade one conduct document and print the analysis as JSON.
    AnalyzeCoc {
        /// The document to analyze.
        #[arg(long, value_name = "PATH")]
        file: PathBuf,
    },
    /// Process one contribution event and print the resulting action plan.
    HandleEvent {
        /// Event JSON: {event_id, repo, kind, author, body, created_at}.
        #[arg(long, value_name = "PATH")]
        file: PathBuf,
        /// Run against a simulated forge loaded from this world file.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
        /// Write the mutated world back out (fixture mode only).
        #[arg(long, value_name = "PATH", requires = "fixture")]
        world_out: Option<PathBuf>,
    },
    /// Consume events until input ends: one JSON document per stdin line,
    /// or HTTP POST /events when --http is given.
    Serve {
        /// Run against a simulated forge loaded from this world file.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
        /// Listen on this address (e.g. 127.0.0.1:8077) instead of stdin.
        #[arg(long, value_name = "ADDR")]
        http: Option<String>,
        /// Stop after this many events.
        #[arg(long, value_name = "N")]
        max_events: Option<u64>,
    },
    /// Survey the top repositories per language and report
    /// conduct-document statistics.
    Mine {
        /// Comma-separated language list, e.g. c,go,rust.
        #[arg(long, value_delimiter = ',', required = true)]
        languages: Vec<String>,
        /// Repositories per language.
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
        /// Write the report here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Run against a simulated forge loaded from this world file.
        #[arg(long, value_name = "PATH")]
        fixture: Option<PathBuf>,
    },
    /// Evaluate a classifier backend on a labeled comment dataset.
    Eval {
        /// Newline-delimited JSON dataset.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendArg::Lexicon)]
        backend: BackendArg,
        /// Write the report here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Dump a persisted store as CSV for audits.
    Export {
        #[arg(long, value_enum, default_value_t = StoreArg::Contributions)]
        store: StoreArg,
        /// Write the CSV here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Lexicon,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StoreArg {
    Contributions,
    Coc,
}

/// A failed subcommand, already sorted into its exit code.
enum Failure {
    /// Bad invocation or configuration; exit 2.
    Usage(String),
    /// The work itself failed; exit 1.
    Operational(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Failure {
        Failure::Usage(e.to_string())
    }

    fn operational(e: impl std::fmt::Display) -> Failure {
        Failure::Operational(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the same path; only
            // actual mistakes exit nonzero.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match EngineConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = match cli.command {
        Command::AnalyzeCoc { file } => analyze_coc(&config, &file),
        Command::HandleEvent {
            file,
            fixture,
            world_out,
        } => handle_event(&config, &file, fixture.as_deref(), world_out.as_deref()),
        Command::Serve {
            fixture,
            http,
            max_events,
        } => serve(&config, fixture.as_deref(), http.as_deref(), max_events),
        Command::Mine {
            languages,
            count,
            format,
            out,
            fixture,
        } => mine(&config, &languages, count, format, out.as_deref(), fixture.as_deref()),
        Command::Eval {
            dataset,
            backend,
            out,
        } => eval(&config, &dataset, backend, out.as_deref()),
        Command::Export { store, out } => export(&config, store, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Operational(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

/// Either forge behind one type, so the engine stays generic and the CLI
/// picks at runtime.
enum AnyForge {
    Simulated(SimulatedForge),
    Http(HttpForge),
}

impl AnyForge {
    fn from_flags(config: &EngineConfig, fixture: Option<&Path>) -> Result<AnyForge, Failure> {
        match fixture {
            Some(path) => Ok(AnyForge::Simulated(
                SimulatedForge::from_json_file(path).map_err(Failure::usage)?,
            )),
            None => Ok(AnyForge::Http(
                HttpForge::new(HttpForgeSettings {
                    base_url: config.forge.base_url.clone(),
                    min_interval_ms: config.forge.pacing_ms,
                    max_retries: config.forge.max_retries,
                    timeout_s: config.forge.timeout_s,
                    ..HttpForgeSettings::default()
                })
                .map_err(Failure::usage)?,
            )),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $method:ident ( $($arg:expr),* )) => {
        match $self {
            AnyForge::Simulated(f) => f.$method($($arg),*),
            AnyForge::Http(f) => f.$method($($arg),*),
        }
    };
}

impl Forge for AnyForge {
    fn get_repo(&self, name: &str) -> Result<RepoSnapshot, ForgeError> {
        delegate!(self, get_repo(name))
    }

    fn get_file(&self, repo: &str, path: &str) -> Result<Option<String>, ForgeError> {
        delegate!(self, get_file(repo, path))
    }

    fn top_repositories(&self, language: &str, count: usize) -> Result<Vec<RepoSnapshot>, ForgeError> {
        delegate!(self, top_repositories(language, count))
    }

    fn create_pull_request(
        &self,
        repo: &str,
        spec: &PullRequestSpec,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        delegate!(self, create_pull_request(repo, spec, key))
    }

    fn create_issue(&self, repo: &str, spec: &IssueSpec, key: &str) -> Result<MutationOutcome, ForgeError> {
        delegate!(self, create_issue(repo, spec, key))
    }

    fn post_comment(
        &self,
        repo: &str,
        target: &str,
        body: &str,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        delegate!(self, post_comment(repo, target, body, key))
    }

    fn mark_contribution(
        &self,
        repo: &str,
        target: &str,
        mark: &MarkAction,
        key: &str,
    ) -> Result<MutationOutcome, ForgeError> {
        delegate!(self, mark_contribution(repo, target, mark, key))
    }

    fn find_open_pull_request(
        &self,
        repo: &str,
        source_branch: &str,
    ) -> Result<Option<PullRequestSummary>, ForgeError> {
        delegate!(self, find_open_pull_request(repo, source_branch))
    }

    fn find_open_issue(&self, repo: &str, title: &str) -> Result<Option<IssueSummary>, ForgeError> {
        delegate!(self, find_open_issue(repo, title))
    }

    fn get_contribution(&self, repo: &str, id: &str) -> Result<Option<ContributionView>, ForgeError> {
        delegate!(self, get_contribution(repo, id))
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::operational(format!("cannot read {}: {e}", path.display())))
}

/// Writes to `out`, or standard output when no path was given.
fn emit(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Failure::operational(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(Failure::operational)
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn analyze_coc(config: &EngineConfig, file: &Path) -> CmdResult {
    let lexicon = config.load_lexicon().map_err(Failure::usage)?;
    let fingerprints = config.load_fingerprints().map_err(Failure::usage)?;
    let text = read_file(file)?;
    let analysis = coc::analyze(&lexicon, &fingerprints, &config.analysis_thresholds(), &text);
    emit(None, &pretty(&analysis))?;
    Ok(0)
}

fn parse_event(json: &str) -> Result<Contribution, Failure> {
    serde_json::from_str(json).map_err(|e| Failure::usage(format!("bad event document: {e}")))
}

fn build_engine(
    config: &EngineConfig,
    fixture: Option<&Path>,
) -> Result<Engine<AnyForge>, Failure> {
    let forge = AnyForge::from_flags(config, fixture)?;
    Engine::new(forge, config.clone()).map_err(Failure::usage)
}

fn handle_event(
    config: &EngineConfig,
    file: &Path,
    fixture: Option<&Path>,
    world_out: Option<&Path>,
) -> CmdResult {
    let event = parse_event(&read_file(file)?)?;
    let engine = build_engine(config, fixture)?;
    let handled = engine.handle_event(&event).map_err(Failure::operational)?;

    for record in &handled.execution {
        eprintln!(
            "{} {}{}",
            record.action,
            record.outcome,
            record
                .detail
                .as_deref()
                .map(|d| format!(": {d}"))
                .unwrap_or_default()
        );
    }
    emit(None, &pretty(&handled.plan))?;

    if let Some(path) = world_out {
        if let AnyForge::Simulated(sim) = engine.forge() {
            let world = pretty(&sim.snapshot());
            std::fs::write(path, world).map_err(|e| {
                Failure::operational(format!("cannot write {}: {e}", path.display()))
            })?;
        }
    }
    Ok(if handled.failures() == 0 { 0 } else { 1 })
}

fn serve(
    config: &EngineConfig,
    fixture: Option<&Path>,
    http: Option<&str>,
    max_events: Option<u64>,
) -> CmdResult {
    let engine = build_engine(config, fixture)?;
    match http {
        None => serve_stdin(&engine, max_events),
        Some(addr) => serve_http(&engine, addr, max_events),
    }
}

/// One result line per event line. Broken input lines and failed plans are
/// reported on standard error and the stream keeps going; the exit code
/// remembers whether everything succeeded.
fn serve_stdin(engine: &Engine<AnyForge>, max_events: Option<u64>) -> CmdResult {
    let stdin = std::io::stdin();
    let mut clean = true;
    let mut handled_count = 0u64;
    for line in stdin.lock().lines() {
        let line = line.map_err(Failure::operational)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_event(&line) {
            Err(Failure::Usage(msg)) | Err(Failure::Operational(msg)) => {
                eprintln!("skipping event: {msg}");
                clean = false;
            }
            Ok(event) => match engine.handle_event(&event) {
                Ok(handled) => {
                    if handled.failures() > 0 {
                        clean = false;
                    }
                    let line = serde_json::to_string(&handled).expect("handled event serializes");
                    println!("{line}");
                    std::io::stdout().flush().map_err(Failure::operational)?;
                }
                Err(e) => {
                    eprintln!("event {} failed: {e}", event.event_id);
                    clean = false;
                }
            },
        }
        handled_count += 1;
        if Some(handled_count) == max_events {
            break;
        }
    }
    Ok(if clean { 0 } else { 1 })
}

/// Minimal webhook listener: POST /events takes one event document and
/// answers with the handled plan; GET /healthz answers ok.
fn serve_http(engine: &Engine<AnyForge>, addr: &str, max_events: Option<u64>) -> CmdResult {
    let server = tiny_http::Server::http(addr)
        .map_err(|e| Failure::usage(format!("cannot listen on {addr}: {e}")))?;
    eprintln!("listening on http://{addr}; POST /events");
    let mut handled_count = 0u64;
    loop {
        let mut request = match server.recv() {
            Ok(r) => r,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let method = request.method().clone();
        let url = request.url().to_string();
        let respond = |request: tiny_http::Request, status: u32, body: String| {
            let response = tiny_http::Response::from_string(body).with_status_code(status as u16)
                .with_header(
                    tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                        .expect("static header"),
                );
            if let Err(e) = request.respond(response) {
                eprintln!("respond failed: {e}");
            }
        };
        match (method.as_str(), url.as_str()) {
            ("GET", "/healthz") => respond(request, 200, "\"ok\"\n".to_string()),
            ("POST", "/events") => {
                let mut body = String::new();
                if let Err(e) = request.as_reader().read_to_string(&mut body) {
                    respond(request, 400, format!("{{\"error\":\"unreadable body: {e}\"}}\n"));
                    continue;
                }
                match parse_event(&body) {
                    Err(Failure::Usage(msg)) | Err(Failure::Operational(msg)) => {
                        let error = serde_json::json!({ "error": msg });
                        respond(request, 400, format!("{error}\n"));
                    }
                    Ok(event) => match engine.handle_event(&event) {
                        Ok(handled) => {
                            let body =
                                serde_json::to_string(&handled).expect("handled event serializes");
                            respond(request, 200, format!("{body}\n"));
                        }
                        Err(e) => {
                            let error = serde_json::json!({ "error": e.to_string() });
                            respond(request, 500, format!("{error}\n"));
                        }
                    },
                }
                handled_count += 1;
                if Some(handled_count) == max_events {
                    return Ok(0);
                }
            }
            _ => respond(request, 404, "{\"error\":\"not found\"}\n".to_string()),
        }
    }
}

fn mine(
    config: &EngineConfig,
    languages: &[String],
    count: usize,
    format: FormatArg,
    out: Option<&Path>,
    fixture: Option<&Path>,
) -> CmdResult {
    if count == 0 {
        return Err(Failure::Usage("--count must be at least 1".to_string()));
    }
    let lexicon = config.load_lexicon().map_err(Failure::usage)?;
    let fingerprints = config.load_fingerprints().map_err(Failure::usage)?;
    let forge = AnyForge::from_flags(config, fixture)?;
    let stats = miner::mine(
        &forge,
        languages,
        count,
        &lexicon,
        &fingerprints,
        &config.analysis_thresholds(),
    );
    for e in &stats.errors {
        eprintln!(
            "skipped {} {}: {}",
            e.language,
            e.repo.as_deref().unwrap_or("(listing)"),
            e.error
        );
    }
    let report = miner::render_report(
        &stats,
        match format {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
        },
    );
    emit(out, &report)?;
    Ok(0)
}

fn eval(config: &EngineConfig, dataset: &Path, backend: BackendArg, out: Option<&Path>) -> CmdResult {
    let dataset = evaluation::load_dataset(dataset).map_err(Failure::operational)?;
    for warning in &dataset.warnings {
        eprintln!("dataset: {warning}");
    }
    let report = match backend {
        BackendArg::Lexicon => {
            let lexicon = config.load_lexicon().map_err(Failure::usage)?;
            evaluation::evaluate(&dataset.comments, |c: &LabeledComment| {
                Ok(classify_lexicon(&lexicon, &c.text))
            })
        }
        BackendArg::Llm => {
            let settings = config.llm.clone().ok_or_else(|| {
                Failure::Usage("--backend llm needs an llm section in the config".to_string())
            })?;
            let client = LlmClient::new(settings).map_err(Failure::usage)?;
            evaluation::evaluate(&dataset.comments, |c: &LabeledComment| {
                client
                    .classify(&c.text, &FlagId::ALL)
                    .map_err(|e| e.to_string())
            })
        }
    }
    .map_err(Failure::operational)?;
    emit(out, &pretty(&report))?;
    Ok(0)
}

fn export(config: &EngineConfig, store: StoreArg, out: Option<&Path>) -> CmdResult {
    let csv = match store {
        StoreArg::Contributions => {
            let store = crate::persistence::RecordStore::open(&config.stores.contributions)
                .map_err(Failure::operational)?;
            contributions_to_csv(&store.records())
        }
        StoreArg::Coc => {
            let store = crate::persistence::RecordStore::open(&config.stores.coc)
                .map_err(Failure::operational)?;
            coc_to_csv(&store.records())
        }
    }
    .map_err(Failure::operational)?;
    emit(out, &csv)?;
    Ok(0)
}
