//! The decision engine. One contribution event comes in; the engine works
//! out what state the project's code of conduct is in, classifies the
//! contribution when there are flags to classify against, turns both into
//! an ordered action plan, executes it against the forge, persists an audit
//! record, and notifies the owners.
//!
//! Every decision walks a fixed step graph and the path taken is recorded
//! as a trace of step labels:
//!
//! ```text
//! 1   event received
//! 2a  flag cache hit          2b  cache miss, document fetched
//! 3a  cached flags reused     3b  document analyzed   3c  propose/update
//! 4a  complete                4b  incomplete          4c  needs help
//! 5   contribution classified
//! 6a  positive, thank         6b  negative, mark
//! 7   owners notified
//! ```
//!
//! Remediation (3c, 4c) and classification are mutually exclusive in one
//! pass: while the document is missing, outdated, or unusable, the
//! contribution is recorded with its classification deferred.

mod templates;

pub use templates::{
    enhancement_issue_spec, help_issue_spec, proposal_branch, propose_pr_spec, update_pr_spec,
    ENHANCEMENT_ISSUE_TITLE, HELP_ISSUE_TITLE, ISSUE_LABEL, PROPOSED_COC_PATH,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::coc::{self, CocAnalysis, CocStatus};
use crate::config::{EngineConfig, MarkMode};
use crate::contribution::llm::{LlmClient, LlmError};
use crate::contribution::{
    classify_lexicon, generate_thanks, Backend, Classification, Contribution, ContributionVerdict,
};
use crate::forge::{Forge, ForgeError, MarkAction};
use crate::notify::{Notification, NotificationSink};
use crate::persistence::{
    ActionOutcome, ActionRecord, CocRecord, ContributionRecord, RecordStore, StoreError,
};
use crate::repo;
use crate::taxonomy::{FlagId, FlagLexicon, Polarity};
use crate::text::CovenantFingerprints;

/// Why a conduct document needs the maintainers' hands rather than a patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HelpReason {
    TooShort {
        path: String,
        effective_lines: usize,
        min_lines: usize,
    },
    LinkOnly {
        path: String,
        links: Vec<String>,
    },
    Unreadable {
        path: String,
    },
}

/// One step of an action plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Open a pull request adding a conduct document where none exists.
    ProposeCocPullRequest { version: String },
    /// Open a pull request replacing an outdated document in place.
    UpdateCocPullRequest {
        version: String,
        /// Version the existing document matched, when one was recognized.
        from: Option<String>,
        path: String,
    },
    /// File an issue asking for the missing guidelines to be added.
    EnhancementIssue { missing: Vec<FlagId> },
    /// File an issue asking for a usable document.
    HelpIssue { reason: HelpReason },
    /// Reply to the contribution with gratitude.
    ThankComment { text: String },
    /// Mark the contribution as inappropriate.
    MarkInappropriate { reason: String, flags: Vec<FlagId> },
    /// Tell the owners what happened.
    Notify { summary: String },
    /// Classification ran and nothing needs doing.
    NoOp,
}

impl Action {
    /// Variant name, used in audit records.
    pub fn kind(&self) -> &'static str {
        match self {
            Action::ProposeCocPullRequest { .. } => "ProposeCocPullRequest",
            Action::UpdateCocPullRequest { .. } => "UpdateCocPullRequest",
            Action::EnhancementIssue { .. } => "EnhancementIssue",
            Action::HelpIssue { .. } => "HelpIssue",
            Action::ThankComment { .. } => "ThankComment",
            Action::MarkInappropriate { .. } => "MarkInappropriate",
            Action::Notify { .. } => "Notify",
            Action::NoOp => "NoOp",
        }
    }

    /// Stable fragment for idempotency keys.
    fn slug(&self) -> &'static str {
        match self {
            Action::ProposeCocPullRequest { .. } => "propose-coc-pr",
            Action::UpdateCocPullRequest { .. } => "update-coc-pr",
            Action::EnhancementIssue { .. } => "enhancement-issue",
            Action::HelpIssue { .. } => "help-issue",
            Action::ThankComment { .. } => "thank-comment",
            Action::MarkInappropriate { .. } => "mark-inappropriate",
            Action::Notify { .. } => "notify",
            Action::NoOp => "no-op",
        }
    }

    /// The three moderation outcomes of classification.
    pub fn is_moderation(&self) -> bool {
        matches!(
            self,
            Action::ThankComment { .. } | Action::MarkInappropriate { .. } | Action::NoOp
        )
    }
}

/// What the engine decided to do about one event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub event_id: String,
    pub repo: String,
    /// Ordered: remediation first, then the moderation outcome, Notify last.
    pub actions: Vec<Action>,
    /// Step labels walked, in order.
    pub decision_trace: Vec<String>,
    /// Present iff classification ran this pass.
    pub verdict: Option<ContributionVerdict>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("trace step {0:?} is not a known label")]
    UnknownStep(String),
    #[error("trace cannot move from {from:?} to {to:?}")]
    BadTransition { from: String, to: String },
    #[error("trace must start at step 1")]
    BadStart,
    #[error("plan has {0} moderation actions, expected exactly one for a classified event")]
    ModerationCount(usize),
    #[error("moderation action disagrees with the verdict classification")]
    ModerationMismatch,
    #[error("unclassified plan must not carry moderation actions")]
    UnexpectedModeration,
    #[error("actions other than NoOp exist but no Notify is planned")]
    MissingNotify,
    #[error("Notify must be the last action and appear at most once")]
    MisplacedNotify,
    #[error("EnhancementIssue with no missing flags")]
    EmptyEnhancement,
    #[error("MarkInappropriate must carry at least one negative flag")]
    BadMark,
}

/// Which steps may follow which. Terminal steps map to an empty list.
const TRACE_EDGES: &[(&str, &[&str])] = &[
    ("1", &["2a", "2b"]),
    ("2a", &["3a"]),
    ("2b", &["3b", "3c"]),
    ("3a", &["5"]),
    ("3b", &["3c", "4a", "4b", "4c"]),
    ("3c", &["7"]),
    ("4a", &["5"]),
    ("4b", &["5"]),
    ("4c", &["7"]),
    ("5", &["6a", "6b", "7"]),
    ("6a", &["7"]),
    ("6b", &["7"]),
    ("7", &[]),
];

impl ActionPlan {
    /// Checks the structural invariants every plan must satisfy.
    pub fn validate(&self) -> Result<(), PlanError> {
        // trace follows the step graph
        if self.decision_trace.first().map(String::as_str) != Some("1") {
            return Err(PlanError::BadStart);
        }
        for pair in self.decision_trace.windows(2) {
            let (from, to) = (pair[0].as_str(), pair[1].as_str());
            let followers = TRACE_EDGES
                .iter()
                .find(|(step, _)| *step == from)
                .map(|(_, next)| *next)
                .ok_or_else(|| PlanError::UnknownStep(from.to_string()))?;
            if !followers.contains(&to) {
                return Err(PlanError::BadTransition {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
        }
        if let Some(last) = self.decision_trace.last() {
            if !TRACE_EDGES.iter().any(|(step, _)| step == last) {
                return Err(PlanError::UnknownStep(last.clone()));
            }
        }

        // exactly one moderation action iff a verdict exists, and it agrees
        let moderation: Vec<&Action> =
            self.actions.iter().filter(|a| a.is_moderation()).collect();
        match &self.verdict {
            Some(v) => {
                if moderation.len() != 1 {
                    return Err(PlanError::ModerationCount(moderation.len()));
                }
                let agrees = matches!(
                    (v.classification, moderation[0]),
                    (Classification::Positive, Action::ThankComment { .. })
                        | (Classification::Negative, Action::MarkInappropriate { .. })
                        | (Classification::Neutral, Action::NoOp)
                );
                if !agrees {
                    return Err(PlanError::ModerationMismatch);
                }
            }
            None => {
                if !moderation.is_empty() {
                    return Err(PlanError::UnexpectedModeration);
                }
            }
        }

        // any real action requires a Notify, which comes last and only once
        let notify_positions: Vec<usize> = self
            .actions
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a, Action::Notify { .. }))
            .map(|(i, _)| i)
            .collect();
        let has_real = self
            .actions
            .iter()
            .any(|a| !matches!(a, Action::NoOp | Action::Notify { .. }));
        if has_real && notify_positions.is_empty() {
            return Err(PlanError::MissingNotify);
        }
        if notify_positions.len() > 1
            || notify_positions
                .first()
                .is_some_and(|&i| i + 1 != self.actions.len())
        {
            return Err(PlanError::MisplacedNotify);
        }

        // payload invariants
        for action in &self.actions {
            match action {
                Action::EnhancementIssue { missing } if missing.is_empty() => {
                    return Err(PlanError::EmptyEnhancement);
                }
                Action::MarkInappropriate { flags, .. }
                    if flags.is_empty()
                        || flags.iter().any(|f| f.polarity() != Polarity::Negative) =>
                {
                    return Err(PlanError::BadMark);
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Per-repository memory of the last valid analysis, so unchanged documents
/// are not re-analyzed on every event. An entry exists only for documents
/// that produced a usable flag set (complete or incomplete); anything else
/// evicts.
#[derive(Default)]
pub struct ProjectFlagCache {
    entries: Mutex<HashMap<String, CacheEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub flags: Vec<FlagId>,
    pub content_digest: String,
    pub version: Option<String>,
    pub analyzed_at: DateTime<Utc>,
}

impl ProjectFlagCache {
    pub fn new() -> ProjectFlagCache {
        ProjectFlagCache::default()
    }

    pub fn get(&self, repo: &str) -> Option<CacheEntry> {
        self.entries.lock().unwrap().get(repo).cloned()
    }

    pub fn insert(&self, repo: &str, entry: CacheEntry) {
        self.entries.lock().unwrap().insert(repo.to_string(), entry);
    }

    pub fn remove(&self, repo: &str) {
        self.entries.lock().unwrap().remove(repo);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fresh analysis performed while resolving: what was analyzed and why
/// the cache did not answer.
#[derive(Debug, Clone)]
pub struct FreshAnalysis {
    pub path: String,
    pub analysis: CocAnalysis,
    /// "cold_cache" when nothing was cached for the repo, "changed" when
    /// the cached digest no longer matched.
    pub trigger: &'static str,
}

/// Outcome of working out the conduct-document state for one repository.
#[derive(Debug, Clone)]
pub struct CocResolution {
    /// Flag set contributions can be judged against; `None` defers
    /// classification.
    pub flags: Option<Vec<FlagId>>,
    /// Remediation actions the state calls for.
    pub actions: Vec<Action>,
    /// Steps walked after "1".
    pub trace: Vec<String>,
    /// Present when a fresh analysis ran this pass.
    pub analysis: Option<FreshAnalysis>,
    /// Suppressions and fallbacks worth telling the owners about.
    pub notes: Vec<String>,
}

/// Everything handle_event reports back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandledEvent {
    pub plan: ActionPlan,
    pub execution: Vec<ActionRecord>,
    pub notified: bool,
    /// True when the event id had already been handled and the stored
    /// outcome was returned instead of acting again.
    pub replayed: bool,
}

impl HandledEvent {
    /// Actions that permanently failed to execute.
    pub fn failures(&self) -> usize {
        self.execution
            .iter()
            .filter(|a| a.outcome == ActionOutcome::Failed)
            .count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error("llm client: {0}")]
    Llm(#[from] LlmError),
    #[error("internal plan invariant broken: {0}")]
    Plan(#[from] PlanError),
}

/// The engine: one forge, one config, two stores, one notification sink.
pub struct Engine<F: Forge> {
    forge: F,
    config: EngineConfig,
    lexicon: FlagLexicon,
    fingerprints: CovenantFingerprints,
    llm: Option<LlmClient>,
    contributions: RecordStore<ContributionRecord>,
    coc_records: RecordStore<CocRecord>,
    cache: ProjectFlagCache,
    sink: Arc<dyn NotificationSink>,
    repo_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl<F: Forge> Engine<F> {
    pub fn new(forge: F, config: EngineConfig) -> Result<Engine<F>, EngineError> {
        config.validate()?;
        let sink: Arc<dyn NotificationSink> = Arc::from(config.notification_sink());
        Engine::with_sink(forge, config, sink)
    }

    /// Like [`Engine::new`] but with a caller-supplied sink, so tests can
    /// observe notifications.
    pub fn with_sink(
        forge: F,
        config: EngineConfig,
        sink: Arc<dyn NotificationSink>,
    ) -> Result<Engine<F>, EngineError> {
        config.validate()?;
        let lexicon = config.load_lexicon()?;
        let fingerprints = config.load_fingerprints()?;
        let llm = match &config.llm {
            Some(settings) => Some(LlmClient::new(settings.clone())?),
            None => None,
        };
        let contributions = RecordStore::open(&config.stores.contributions)?;
        let coc_records = RecordStore::open(&config.stores.coc)?;
        Ok(Engine {
            forge,
            config,
            lexicon,
            fingerprints,
            llm,
            contributions,
            coc_records,
            cache: ProjectFlagCache::new(),
            sink,
            repo_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn forge(&self) -> &F {
        &self.forge
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn lexicon(&self) -> &FlagLexicon {
        &self.lexicon
    }

    pub fn cache(&self) -> &ProjectFlagCache {
        &self.cache
    }

    pub fn contribution_store(&self) -> &RecordStore<ContributionRecord> {
        &self.contributions
    }

    pub fn coc_store(&self) -> &RecordStore<CocRecord> {
        &self.coc_records
    }

    fn repo_lock(&self, repo: &str) -> Arc<Mutex<()>> {
        self.repo_locks
            .lock()
            .unwrap()
            .entry(repo.to_string())
            .or_default()
            .clone()
    }

    /// Works out the conduct-document state for one repository: cache
    /// lookup, fetch, analysis, and the remediation actions the state calls
    /// for. Updates the flag cache on every fresh analysis.
    pub fn resolve_coc_state(&self, repo: &str) -> Result<CocResolution, ForgeError> {
        let snapshot = self.forge.get_repo(repo)?;

        let Some(entry) = repo::locate_coc(&snapshot) else {
            self.cache.remove(repo);
            let (actions, notes) = self.propose_actions(repo, None)?;
            return Ok(CocResolution {
                flags: None,
                actions,
                trace: vec!["2b".into(), "3c".into()],
                analysis: None,
                notes,
            });
        };
        let path = entry.path.clone();

        let content = match self.forge.get_file(repo, &path) {
            Ok(Some(content)) => content,
            Ok(None) => {
                // listed a moment ago, gone now; same as having none
                self.cache.remove(repo);
                let (actions, notes) = self.propose_actions(repo, None)?;
                return Ok(CocResolution {
                    flags: None,
                    actions,
                    trace: vec!["2b".into(), "3c".into()],
                    analysis: None,
                    notes,
                });
            }
            Err(ForgeError::NotText { .. }) => {
                self.cache.remove(repo);
                let reason = HelpReason::Unreadable { path: path.clone() };
                let (actions, notes) = self.help_actions(repo, reason)?;
                return Ok(CocResolution {
                    flags: None,
                    actions,
                    trace: vec!["2b".into(), "3b".into(), "4c".into()],
                    analysis: None,
                    notes,
                });
            }
            Err(e) => return Err(e),
        };

        let digest = coc::content_digest(&content);
        let cached = self.cache.get(repo);
        if let Some(cached) = &cached {
            if cached.content_digest == digest {
                return Ok(CocResolution {
                    flags: Some(cached.flags.clone()),
                    actions: Vec::new(),
                    trace: vec!["2a".into(), "3a".into()],
                    analysis: None,
                    notes: Vec::new(),
                });
            }
        }
        let trigger = if cached.is_some() {
            "changed"
        } else {
            "cold_cache"
        };

        let analysis = coc::analyze(
            &self.lexicon,
            &self.fingerprints,
            &self.config.analysis_thresholds(),
            &content,
        );
        let mut trace = vec!["2b".to_string(), "3b".to_string()];
        let resolution = match analysis.status {
            CocStatus::Outdated => {
                self.cache.remove(repo);
                trace.push("3c".into());
                let (actions, notes) =
                    self.propose_actions(repo, Some((&path, analysis.version.as_deref())))?;
                CocResolution {
                    flags: None,
                    actions,
                    trace,
                    analysis: Some(FreshAnalysis {
                        path,
                        analysis,
                        trigger,
                    }),
                    notes,
                }
            }
            CocStatus::TooShort => {
                self.cache.remove(repo);
                trace.push("4c".into());
                let reason = HelpReason::TooShort {
                    path: path.clone(),
                    effective_lines: analysis.effective_lines,
                    min_lines: self.config.min_lines,
                };
                let (actions, notes) = self.help_actions(repo, reason)?;
                CocResolution {
                    flags: None,
                    actions,
                    trace,
                    analysis: Some(FreshAnalysis {
                        path,
                        analysis,
                        trigger,
                    }),
                    notes,
                }
            }
            CocStatus::LinkOnly => {
                self.cache.remove(repo);
                trace.push("4c".into());
                let reason = HelpReason::LinkOnly {
                    path: path.clone(),
                    links: analysis.links.clone(),
                };
                let (actions, notes) = self.help_actions(repo, reason)?;
                CocResolution {
                    flags: None,
                    actions,
                    trace,
                    analysis: Some(FreshAnalysis {
                        path,
                        analysis,
                        trigger,
                    }),
                    notes,
                }
            }
            CocStatus::Incomplete => {
                self.cache.insert(
                    repo,
                    CacheEntry {
                        flags: analysis.detected.clone(),
                        content_digest: digest,
                        version: analysis.version.clone(),
                        analyzed_at: Utc::now(),
                    },
                );
                trace.push("4b".into());
                let mut actions = Vec::new();
                let mut notes = Vec::new();
                let spec = enhancement_issue_spec(&analysis.missing);
                match self.forge.find_open_issue(repo, &spec.title)? {
                    Some(open) => notes.push(format!(
                        "enhancement issue already open as {}; not filing another",
                        open.id
                    )),
                    None => actions.push(Action::EnhancementIssue {
                        missing: analysis.missing.clone(),
                    }),
                }
                CocResolution {
                    flags: Some(analysis.detected.clone()),
                    actions,
                    trace,
                    analysis: Some(FreshAnalysis {
                        path,
                        analysis,
                        trigger,
                    }),
                    notes,
                }
            }
            CocStatus::Complete => {
                self.cache.insert(
                    repo,
                    CacheEntry {
                        flags: analysis.detected.clone(),
                        content_digest: digest,
                        version: analysis.version.clone(),
                        analyzed_at: Utc::now(),
                    },
                );
                trace.push("4a".into());
                CocResolution {
                    flags: Some(analysis.detected.clone()),
                    actions: Vec::new(),
                    trace,
                    analysis: Some(FreshAnalysis {
                        path,
                        analysis,
                        trigger,
                    }),
                    notes: Vec::new(),
                }
            }
            CocStatus::Missing => unreachable!("analyze always grades actual content"),
        };
        Ok(resolution)
    }

    /// Propose or update, unless a proposal is already open. `existing` is
    /// the path and recognized version of an outdated document to replace.
    fn propose_actions(
        &self,
        repo: &str,
        existing: Option<(&str, Option<&str>)>,
    ) -> Result<(Vec<Action>, Vec<String>), ForgeError> {
        let version = self.config.propose_version.clone();
        let branch = proposal_branch(&version);
        if let Some(open) = self.forge.find_open_pull_request(repo, &branch)? {
            return Ok((
                Vec::new(),
                vec![format!(
                    "conduct proposal already open as {} ({:?}); not filing another",
                    open.id, open.title
                )],
            ));
        }
        let action = match existing {
            None => Action::ProposeCocPullRequest { version },
            Some((path, from)) => Action::UpdateCocPullRequest {
                version,
                from: from.map(str::to_string),
                path: path.to_string(),
            },
        };
        Ok((vec![action], Vec::new()))
    }

    /// File a help issue, unless one is already open.
    fn help_actions(
        &self,
        repo: &str,
        reason: HelpReason,
    ) -> Result<(Vec<Action>, Vec<String>), ForgeError> {
        match self.forge.find_open_issue(repo, HELP_ISSUE_TITLE)? {
            Some(open) => Ok((
                Vec::new(),
                vec![format!(
                    "help issue already open as {}; not filing another",
                    open.id
                )],
            )),
            None => Ok((vec![Action::HelpIssue { reason }], Vec::new())),
        }
    }

    /// Classifies one contribution against the flags the project governs.
    /// The LLM backend falls back to the lexicon when the endpoint never
    /// answers; the fallback is noted for the owner notification.
    fn classify(
        &self,
        event: &Contribution,
        allowed: &[FlagId],
        notes: &mut Vec<String>,
    ) -> ContributionVerdict {
        let mut verdict = match (self.config.classifier, &self.llm) {
            (Backend::Llm, Some(client)) => match client.classify(&event.body, allowed) {
                Ok(verdict) => verdict,
                Err(e) => {
                    notes.push(format!("llm backend unavailable ({e}); lexicon fallback"));
                    classify_lexicon(&self.lexicon, &event.body)
                }
            },
            _ => classify_lexicon(&self.lexicon, &event.body),
        };

        // confine the verdict to the governed flags
        let before = verdict.flags.len();
        verdict.flags.retain(|f| allowed.contains(f));
        if verdict.flags.len() < before {
            push_reason(
                &mut verdict.reasons,
                "[flags outside the project's code of conduct were dropped]",
            );
        }
        if verdict.flags.is_empty() && verdict.classification != Classification::Neutral {
            verdict.classification = Classification::Neutral;
            push_reason(
                &mut verdict.reasons,
                "[downgraded to neutral: no governed flag matched]",
            );
        }
        verdict
    }

    /// The reply posted for a positive contribution: the model's words when
    /// an endpoint is configured and answers, the deterministic template
    /// otherwise.
    fn thanks_text(&self, event: &Contribution, verdict: &ContributionVerdict) -> String {
        if let Some(client) = &self.llm {
            if let Ok(reply) = client.generate_thanks(&event.author, &event.body) {
                return reply;
            }
        }
        generate_thanks(&self.lexicon, &event.author, &verdict.flags)
    }

    /// Handles one contribution event end to end. Replaying an event id
    /// that was already handled returns the stored outcome and performs no
    /// further work: the store is the idempotency ledger.
    pub fn handle_event(&self, event: &Contribution) -> Result<HandledEvent, EngineError> {
        let lock = self.repo_lock(&event.repo);
        let _guard = lock.lock().unwrap();

        if let Some(prior) = self.contributions.find_by_key(&event.event_id) {
            return Ok(HandledEvent {
                plan: plan_from_record(&prior),
                execution: prior.actions,
                notified: prior.notified,
                replayed: true,
            });
        }

        let resolution = self.resolve_coc_state(&event.repo)?;
        let mut trace = vec!["1".to_string()];
        trace.extend(resolution.trace.iter().cloned());
        let mut actions = resolution.actions.clone();
        let mut notes = resolution.notes.clone();
        let mut verdict = None;

        if let Some(flags) = &resolution.flags {
            trace.push("5".into());
            let allowed: Vec<FlagId> = if self.config.enforce_all_flags {
                FlagId::ALL.to_vec()
            } else {
                flags.clone()
            };
            let v = self.classify(event, &allowed, &mut notes);
            match v.classification {
                Classification::Positive => {
                    trace.push("6a".into());
                    actions.push(Action::ThankComment {
                        text: self.thanks_text(event, &v),
                    });
                }
                Classification::Negative => {
                    trace.push("6b".into());
                    actions.push(Action::MarkInappropriate {
                        reason: v.reasons.clone(),
                        flags: v.flags.clone(),
                    });
                }
                Classification::Neutral => {
                    actions.push(Action::NoOp);
                }
            }
            if v.escalated {
                notes.push("classifier escalation: the model produced no usable verdict".into());
            }
            verdict = Some(v);
        } else {
            notes.push("classification deferred until a usable code of conduct exists".into());
        }

        let has_real = actions
            .iter()
            .any(|a| !matches!(a, Action::NoOp | Action::Notify { .. }));
        let wants_notify =
            has_real || verdict.as_ref().is_some_and(|v| v.escalated) || !resolution.notes.is_empty();
        if wants_notify {
            trace.push("7".into());
            let summary = notify_summary(&actions, &verdict, &notes);
            actions.push(Action::Notify { summary });
        }

        let plan = ActionPlan {
            event_id: event.event_id.clone(),
            repo: event.repo.clone(),
            actions,
            decision_trace: trace,
            verdict,
        };
        plan.validate()?;

        let (execution, notified) = self.execute_plan(&plan);

        if let Some(fresh) = &resolution.analysis {
            self.coc_records.append(&CocRecord {
                repo: event.repo.clone(),
                recorded_at: Utc::now(),
                trigger: fresh.trigger.to_string(),
                path: Some(fresh.path.clone()),
                analysis: Some(fresh.analysis.clone()),
            })?;
        }
        self.contributions.append(&ContributionRecord {
            event_id: event.event_id.clone(),
            repo: event.repo.clone(),
            author: event.author.clone(),
            kind: event.kind,
            body_digest: coc::content_digest(&event.body),
            received_at: event.created_at,
            recorded_at: Utc::now(),
            verdict: plan.verdict.clone(),
            planned: plan.actions.clone(),
            actions: execution.clone(),
            notified,
            decision_trace: plan.decision_trace.clone(),
        })?;

        Ok(HandledEvent {
            plan,
            execution,
            notified,
            replayed: false,
        })
    }

    /// Executes every action in order. Failures are recorded, never raised:
    /// the plan itself is the unit the caller retries. Mutations carry
    /// `event_id:action` idempotency keys, so re-execution cannot duplicate
    /// forge artifacts. The moderation actions target the contribution the
    /// event id names. Returns the per-action records and whether the
    /// owners were notified.
    pub fn execute_plan(&self, plan: &ActionPlan) -> (Vec<ActionRecord>, bool) {
        let mut records: Vec<ActionRecord> = Vec::new();
        let mut notified = false;
        for action in &plan.actions {
            let key = format!("{}:{}", plan.event_id, action.slug());
            let result: Result<(Option<String>, ActionOutcome, Option<String>), String> =
                match action {
                    Action::ProposeCocPullRequest { version } => {
                        let text = self.config.proposed_text().expect("validated version");
                        let spec = propose_pr_spec(version, text);
                        self.forge
                            .create_pull_request(&plan.repo, &spec, &key)
                            .map(outcome_triple)
                            .map_err(|e| e.to_string())
                    }
                    Action::UpdateCocPullRequest {
                        version,
                        from,
                        path,
                    } => {
                        let text = self.config.proposed_text().expect("validated version");
                        let spec = update_pr_spec(version, from.as_deref(), path, text);
                        self.forge
                            .create_pull_request(&plan.repo, &spec, &key)
                            .map(outcome_triple)
                            .map_err(|e| e.to_string())
                    }
                    Action::EnhancementIssue { missing } => self
                        .forge
                        .create_issue(&plan.repo, &enhancement_issue_spec(missing), &key)
                        .map(outcome_triple)
                        .map_err(|e| e.to_string()),
                    Action::HelpIssue { reason } => self
                        .forge
                        .create_issue(&plan.repo, &help_issue_spec(reason), &key)
                        .map(outcome_triple)
                        .map_err(|e| e.to_string()),
                    Action::ThankComment { text } => self
                        .forge
                        .post_comment(&plan.repo, &plan.event_id, text, &key)
                        .map(outcome_triple)
                        .map_err(|e| e.to_string()),
                    Action::MarkInappropriate { .. } => {
                        let mark = match self.config.mark.mode {
                            MarkMode::Minimize => MarkAction::Minimize,
                            MarkMode::Label => MarkAction::Label(self.config.mark.label.clone()),
                        };
                        self.forge
                            .mark_contribution(&plan.repo, &plan.event_id, &mark, &key)
                            .map(outcome_triple)
                            .map_err(|e| e.to_string())
                    }
                    Action::NoOp => Ok((None, ActionOutcome::Executed, None)),
                    Action::Notify { summary } => {
                        let notification = Notification {
                            repo: plan.repo.clone(),
                            event_id: Some(plan.event_id.clone()),
                            summary: summary.clone(),
                            body: notification_body(plan, &records),
                            sent_at: Utc::now(),
                        };
                        match self.sink.send(&notification) {
                            Ok(()) => {
                                notified = true;
                                Ok((None, ActionOutcome::Executed, None))
                            }
                            Err(e) => Err(e.to_string()),
                        }
                    }
                };
            records.push(match result {
                Ok((target, outcome, detail)) => ActionRecord {
                    action: action.kind().to_string(),
                    target,
                    outcome,
                    detail,
                },
                Err(detail) => ActionRecord {
                    action: action.kind().to_string(),
                    target: None,
                    outcome: ActionOutcome::Failed,
                    detail: Some(detail),
                },
            });
        }
        (records, notified)
    }
}

fn outcome_triple(
    outcome: crate::forge::MutationOutcome,
) -> (Option<String>, ActionOutcome, Option<String>) {
    let status = if outcome.created {
        ActionOutcome::Executed
    } else {
        ActionOutcome::Deduplicated
    };
    (Some(outcome.id), status, None)
}

fn push_reason(reasons: &mut String, note: &str) {
    if !reasons.is_empty() {
        reasons.push(' ');
    }
    reasons.push_str(note);
}

fn plan_from_record(record: &ContributionRecord) -> ActionPlan {
    ActionPlan {
        event_id: record.event_id.clone(),
        repo: record.repo.clone(),
        actions: record.planned.clone(),
        decision_trace: record.decision_trace.clone(),
        verdict: record.verdict.clone(),
    }
}

/// One line for the owners: what was done, how the contribution was judged,
/// and anything suppressed or fallen back on.
fn notify_summary(
    actions: &[Action],
    verdict: &Option<ContributionVerdict>,
    notes: &[String],
) -> String {
    let mut parts: Vec<String> = Vec::new();
    for action in actions {
        match action {
            Action::ProposeCocPullRequest { version } => {
                parts.push(format!("proposing Contributor Covenant {version}"));
            }
            Action::UpdateCocPullRequest { version, .. } => {
                parts.push(format!(
                    "updating the code of conduct to Contributor Covenant {version}"
                ));
            }
            Action::EnhancementIssue { missing } => {
                parts.push(format!(
                    "filing an enhancement issue for {}",
                    join_flags(missing)
                ));
            }
            Action::HelpIssue { .. } => {
                parts.push("filing a help issue about the code of conduct".to_string());
            }
            Action::ThankComment { .. } => parts.push("thanking the contributor".to_string()),
            Action::MarkInappropriate { flags, .. } => {
                parts.push(format!(
                    "marking the contribution as inappropriate ({})",
                    join_flags(flags)
                ));
            }
            Action::Notify { .. } | Action::NoOp => {}
        }
    }
    match verdict {
        Some(v) => parts.push(format!(
            "contribution classified {} by the {} backend",
            v.classification, v.backend
        )),
        None => {}
    }
    parts.extend(notes.iter().cloned());
    parts.join("; ")
}

fn notification_body(plan: &ActionPlan, executed: &[ActionRecord]) -> String {
    let mut body = format!(
        "repo: {}\nevent: {}\ntrace: {}\n",
        plan.repo,
        plan.event_id,
        plan.decision_trace.join(",")
    );
    match &plan.verdict {
        Some(v) => {
            body.push_str(&format!(
                "verdict: {} [{}] via {}{}\nreasons: {}\n",
                v.classification,
                join_flags(&v.flags),
                v.backend,
                if v.escalated { " (escalated)" } else { "" },
                v.reasons
            ));
        }
        None => body.push_str("verdict: deferred\n"),
    }
    if !executed.is_empty() {
        body.push_str("actions:\n");
        for record in executed {
            body.push_str(&format!(
                "- {}: {}{}{}\n",
                record.action,
                record.outcome,
                record
                    .target
                    .as_deref()
                    .map(|t| format!(" ({t})"))
                    .unwrap_or_default(),
                record
                    .detail
                    .as_deref()
                    .map(|d| format!(" {d}"))
                    .unwrap_or_default(),
            ));
        }
    }
    body
}

fn join_flags(flags: &[FlagId]) -> String {
    flags
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coc::reference_texts;
    use crate::config::StoresConfig;
    use crate::contribution::ContributionKind;
    use crate::forge::fake::{SimulatedForge, World, WorldContribution, WorldFile, WorldRepo};
    use crate::notify::MemorySink;

    fn world_repo(name: &str, coc: Option<&str>) -> WorldRepo {
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

    fn test_engine(
        coc: Option<&str>,
        dir: &std::path::Path,
    ) -> (Engine<SimulatedForge>, Arc<MemorySink>) {
        let forge = SimulatedForge::new(World {
            repos: vec![world_repo("acme/widget", coc)],
        });
        let config = EngineConfig {
            stores: StoresConfig {
                contributions: dir.join("contributions.ndjson"),
                coc: dir.join("coc.ndjson"),
            },
            ..EngineConfig::default()
        };
        let sink = Arc::new(MemorySink::new());
        let engine = Engine::with_sink(forge, config, sink.clone()).unwrap();
        (engine, sink)
    }

    fn event(id: &str, body: &str) -> Contribution {
        Contribution {
            event_id: id.to_string(),
            repo: "acme/widget".to_string(),
            kind: ContributionKind::Comment,
            author: "alice".to_string(),
            body: body.to_string(),
            created_at: "2024-06-02T10:00:00Z".parse().unwrap(),
        }
    }

    fn kinds(plan: &ActionPlan) -> Vec<&'static str> {
        plan.actions.iter().map(Action::kind).collect()
    }

    #[test]
    fn missing_coc_proposes_and_notifies() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, sink) = test_engine(None, dir.path());
        let handled = engine.handle_event(&event("c-1", "some neutral words")).unwrap();

        assert_eq!(kinds(&handled.plan), vec!["ProposeCocPullRequest", "Notify"]);
        assert_eq!(handled.plan.decision_trace, vec!["1", "2b", "3c", "7"]);
        assert!(handled.plan.verdict.is_none());
        assert_eq!(handled.failures(), 0);
        assert!(handled.notified);

        let world = engine.forge().snapshot();
        let repo = &world.repos[0];
        assert_eq!(repo.pull_requests.len(), 1);
        let pr = &repo.pull_requests[0];
        assert!(pr.title.contains("Contributor Covenant 2.1"), "{}", pr.title);
        assert_eq!(pr.files[0].0, "CODE_OF_CONDUCT.md");
        assert_eq!(pr.files[0].1, reference_texts::V2_1);
        assert_eq!(sink.sent().len(), 1);
        assert_eq!(engine.contribution_store().len(), 1);
        assert!(engine.coc_store().is_empty(), "no analysis ran");
    }

    #[test]
    fn replay_returns_stored_plan_without_new_mutations() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, sink) = test_engine(None, dir.path());
        let first = engine.handle_event(&event("c-1", "hello")).unwrap();
        let world_after_first = engine.forge().snapshot();

        let second = engine.handle_event(&event("c-1", "hello")).unwrap();
        assert!(second.replayed);
        assert_eq!(second.plan, first.plan);
        assert_eq!(engine.forge().snapshot(), world_after_first);
        assert_eq!(engine.contribution_store().len(), 1);
        assert_eq!(sink.sent().len(), 1, "no second notification");
    }

    #[test]
    fn open_proposal_suppresses_a_second_one() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, _sink) = test_engine(None, dir.path());
        engine.handle_event(&event("c-1", "first")).unwrap();

        let handled = engine.handle_event(&event("ev-2", "second")).unwrap();
        assert_eq!(kinds(&handled.plan), vec!["Notify"]);
        assert_eq!(handled.plan.decision_trace, vec!["1", "2b", "3c", "7"]);
        let world = engine.forge().snapshot();
        assert_eq!(world.repos[0].pull_requests.len(), 1);
    }

    #[test]
    fn complete_coc_with_positive_comment_thanks_the_author() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, _sink) = test_engine(Some(reference_texts::V2_1), dir.path());
        let handled = engine
            .handle_event(&event("c-1", "Thanks for showing such empathy and kindness here!"))
            .unwrap();

        assert_eq!(kinds(&handled.plan), vec!["ThankComment", "Notify"]);
        assert_eq!(
            handled.plan.decision_trace,
            vec!["1", "2b", "3b", "4a", "5", "6a", "7"]
        );
        let verdict = handled.plan.verdict.as_ref().unwrap();
        assert_eq!(verdict.classification, Classification::Positive);

        let world = engine.forge().snapshot();
        let replies = &world.repos[0].contributions[0].replies;
        assert_eq!(replies.len(), 1);
        assert!(replies[0].contains("@alice"), "{}", replies[0]);
        assert_eq!(engine.coc_store().len(), 1, "analysis recorded");
        assert_eq!(engine.coc_store().records()[0].trigger, "cold_cache");
    }

    #[test]
    fn edited_coc_is_reanalyzed_with_a_changed_trigger() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, _sink) = test_engine(Some(reference_texts::V2_1), dir.path());
        engine.handle_event(&event("c-1", "neutral words")).unwrap();

        engine.forge().apply(|world| {
            let file = world.repos[0]
                .files
                .iter_mut()
                .find(|f| f.path == "CODE_OF_CONDUCT.md")
                .unwrap();
            file.content.push_str("\nOne more closing line.\n");
        });

        let handled = engine.handle_event(&event("ev-2", "still neutral")).unwrap();
        assert_eq!(
            handled.plan.decision_trace,
            vec!["1", "2b", "3b", "4a", "5"]
        );
        let records = engine.coc_store().records();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].trigger, "cold_cache");
        assert_eq!(records[1].trigger, "changed");
    }

    #[test]
    fn cache_hit_skips_reanalysis_and_issue_refiling() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, _sink) = test_engine(Some(reference_texts::V2_1), dir.path());
        engine.handle_event(&event("c-1", "neutral words")).unwrap();
        assert_eq!(engine.cache().len(), 1);

        let handled = engine.handle_event(&event("ev-2", "more neutral words")).unwrap();
        assert_eq!(handled.plan.decision_trace, vec!["1", "2a", "3a", "5"]);
        assert_eq!(kinds(&handled.plan), vec!["NoOp"]);
        assert!(!handled.notified);
        assert_eq!(engine.coc_store().len(), 1, "no second analysis record");
    }

    #[test]
    fn negative_comment_is_marked() {
        let dir = tempfile::tempdir().unwrap();
        let (engine, sink) = test_engine(Some(reference_texts::V2_1), dir.path());
        let handled = engine
            .handle_event(&event("c-1", "stop trolling, this is just trolling"))
            .unwrap();

        assert_eq!(kinds(&handled.plan), vec!["MarkInappropriate", "Notify"]);
        assert_eq!(
            handled.plan.decision_trace,
            vec!["1", "2b", "3b", "4a", "5", "6b", "7"]
        );
        let world = engine.forge().snapshot();
        assert!(world.repos[0].contributions[0].minimized);
        assert_eq!(sink.sent().len(), 1);
    }

    #[test]
    fn plan_validation_catches_broken_invariants() {
        let base = ActionPlan {
            event_id: "e".to_string(),
            repo: "r".to_string(),
            actions: vec![Action::NoOp],
            decision_trace: ["1", "2b", "3b", "4a", "5"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            verdict: Some(ContributionVerdict::neutral("n", Backend::Lexicon, false)),
        };
        base.validate().unwrap();

        let mut two_moderations = base.clone();
        two_moderations.actions.push(Action::NoOp);
        assert_eq!(
            two_moderations.validate(),
            Err(PlanError::ModerationCount(2))
        );

        let mut bad_trace = base.clone();
        bad_trace.decision_trace = vec!["1".into(), "3b".into()];
        assert!(matches!(
            bad_trace.validate(),
            Err(PlanError::BadTransition { .. })
        ));

        let mut missing_notify = base.clone();
        missing_notify.actions = vec![
            Action::HelpIssue {
                reason: HelpReason::Unreadable {
                    path: "x".to_string(),
                },
            },
            Action::NoOp,
        ];
        assert_eq!(missing_notify.validate(), Err(PlanError::MissingNotify));

        let mut bad_mark = base.clone();
        bad_mark.verdict = Some(ContributionVerdict {
            classification: Classification::Negative,
            flags: vec![FlagId::F7],
            reasons: "r".to_string(),
            backend: Backend::Lexicon,
            escalated: false,
        });
        bad_mark.actions = vec![
            Action::MarkInappropriate {
                reason: "r".to_string(),
                flags: vec![FlagId::F1],
            },
            Action::Notify {
                summary: "s".to_string(),
            },
        ];
        bad_mark.decision_trace = ["1", "2b", "3b", "4a", "5", "6b", "7"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(bad_mark.validate(), Err(PlanError::BadMark));
    }
}
