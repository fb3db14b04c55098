//! Client for the completion endpoint the LLM backend talks to.
//!
//! Wire contract: POST `{base_url}/api/generate` with
//! `{"model": ..., "prompt": ..., "stream": false}`; the reply is a JSON
//! object whose completion text sits in `response` (or `text`, or
//! `completion`). Replies are parsed defensively; after the configured
//! retries the verdict degrades to neutral with the escalation marker set,
//! never to a moderation call the engine cannot justify.

use serde::{Deserialize, Serialize};

use super::prompt::build_prompt;
use super::{parse_verdict, Backend, ContributionVerdict};
use crate::taxonomy::FlagId;

/// Longest reply accepted from the model for a thank-you comment; anything
/// beyond is cut at a character boundary.
pub const THANKS_REPLY_CAP: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSettings {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_timeout_s() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    2
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("could not reach llm endpoint: {0}")]
    Transport(String),
    #[error("llm endpoint answered status {0}")]
    Status(u16),
    #[error("llm reply is not JSON: {0}")]
    BadReply(String),
    #[error("llm reply carries no completion text")]
    MissingText,
}

pub struct LlmClient {
    settings: LlmSettings,
    http: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
}

impl LlmClient {
    pub fn new(settings: LlmSettings) -> Result<LlmClient, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(settings.timeout_s.max(1)))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(LlmClient { settings, http })
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    /// One completion round-trip.
    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let url = format!("{}/api/generate", self.settings.base_url.trim_end_matches('/'));
        let request = GenerateRequest {
            model: &self.settings.model,
            prompt,
            stream: false,
        };
        let response = self
            .http
            .post(url)
            .json(&request)
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::Status(status.as_u16()));
        }
        let value: serde_json::Value = response
            .json()
            .map_err(|e| LlmError::BadReply(e.to_string()))?;
        for field in ["response", "text", "completion"] {
            if let Some(text) = value.get(field).and_then(|v| v.as_str()) {
                return Ok(text.to_string());
            }
        }
        Err(LlmError::MissingText)
    }

    /// Classifies one comment body against the given flag set. Each attempt
    /// is a fresh completion; a reply that parses ends the loop.
    ///
    /// Two failure shapes, deliberately kept apart:
    /// - the endpoint never produced anything (connect/timeout on every
    ///   attempt) → `Err`, the caller falls back to the lexicon backend;
    /// - the endpoint answered but nothing usable came out after the retries
    ///   → neutral verdict with the escalation marker set. Unusable model
    ///   output must never moderate.
    pub fn classify(&self, body: &str, flags: &[FlagId]) -> Result<ContributionVerdict, LlmError> {
        let prompt = build_prompt(body, flags);
        let attempts = 1 + self.settings.max_retries;
        let mut last_error = String::new();
        let mut reached = false;
        for _ in 0..attempts {
            match self.complete(&prompt) {
                Ok(reply) => {
                    reached = true;
                    match parse_verdict(&reply) {
                        Ok(parsed) => {
                            let mut reasons = parsed.reasons;
                            if !parsed.repairs.is_empty() {
                                if !reasons.is_empty() {
                                    reasons.push(' ');
                                }
                                reasons
                                    .push_str(&format!("[repaired: {}]", parsed.repairs.join("; ")));
                            }
                            return Ok(ContributionVerdict {
                                classification: parsed.classification,
                                flags: parsed.flags,
                                reasons,
                                backend: Backend::Llm,
                                escalated: false,
                            });
                        }
                        Err(e) => last_error = e.to_string(),
                    }
                }
                Err(LlmError::Transport(e)) if !reached => {
                    // keep trying; if it never comes up we report unavailable
                    last_error = e;
                }
                Err(e) => {
                    reached = true;
                    last_error = e.to_string();
                }
            }
        }
        if !reached {
            return Err(LlmError::Transport(last_error));
        }
        Ok(ContributionVerdict::neutral(
            format!("no usable verdict after {attempts} attempts; last error: {last_error}"),
            Backend::Llm,
            true,
        ))
    }

    /// Asks the model for a short thank-you reply. The wording of this
    /// prompt is ours, not quoted from anywhere; replies are capped at
    /// [`THANKS_REPLY_CAP`] characters. Errors leave the caller free to fall
    /// back to the deterministic template.
    pub fn generate_thanks(&self, author: &str, body: &str) -> Result<String, LlmError> {
        let prompt = format!(
            "You are a community assistant for a software project. A contributor named \
             @{author} wrote the following comment, which the project classified as a \
             positive contribution:\n\n{body:?}\n\nWrite a short, warm thank-you reply \
             to @{author} (at most two sentences). Answer with the reply text only."
        );
        let reply = self.complete(&prompt)?;
        let reply = reply.trim();
        if reply.is_empty() {
            return Err(LlmError::MissingText);
        }
        Ok(match reply.char_indices().nth(THANKS_REPLY_CAP) {
            Some((cut, _)) => reply[..cut].to_string(),
            None => reply.to_string(),
        })
    }
}
