//! Engine configuration: one JSON document binding every knob.
//!
//! The file is plain UTF-8 JSON, no comments. Every key has a default, so
//! an empty object (or no file at all) is a valid configuration; loading
//! defaults touches nothing but the filesystem path it was asked to read.
//! Unknown keys are rejected rather than ignored, so typos fail loudly.
//!
//! Forge credentials are deliberately absent: the only way to supply a
//! token is the `FORGE_TOKEN` environment variable. A config file ends up
//! in version control sooner or later; a token in it would too.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coc::{reference_texts, AnalysisThresholds};
use crate::contribution::llm::LlmSettings;
use crate::contribution::Backend;
use crate::notify::{FileSink, NotificationSink, StdoutSink, WebhookSink};
use crate::taxonomy::FlagLexicon;
use crate::text::{self, CovenantFingerprints};

fn read_data_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Environment variable naming the config file when `--config` is not given.
pub const CONFIG_ENV_VAR: &str = "ENGINE_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path} is not valid JSON: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Conduct documents with fewer effective lines than this get help, not
    /// analysis.
    pub min_lines: usize,
    /// Covenant version the engine proposes and updates to.
    pub propose_version: String,
    /// Covenant versions strictly below this count as outdated.
    pub outdated_below: String,
    /// When true, contributions are judged against all ten flags regardless
    /// of what the project's document covers.
    pub enforce_all_flags: bool,
    /// Which classifier judges contributions.
    pub classifier: Backend,
    pub mark: MarkConfig,
    /// Override for the shipped flag lexicon.
    pub lexicon_path: Option<PathBuf>,
    /// Override for the shipped version fingerprints.
    pub fingerprints_path: Option<PathBuf>,
    pub stores: StoresConfig,
    /// Required when `classifier` is "llm".
    pub llm: Option<LlmSettings>,
    pub notify: NotifyConfig,
    pub forge: ForgeConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            min_lines: 5,
            propose_version: "2.1".to_string(),
            outdated_below: "1.4".to_string(),
            enforce_all_flags: false,
            classifier: Backend::Lexicon,
            mark: MarkConfig::default(),
            lexicon_path: None,
            fingerprints_path: None,
            stores: StoresConfig::default(),
            llm: None,
            notify: NotifyConfig::default(),
            forge: ForgeConfig::default(),
        }
    }
}

/// How inappropriate contributions get marked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkConfig {
    pub mode: MarkMode,
    /// Label applied in `label` mode.
    pub label: String,
}

impl Default for MarkConfig {
    fn default() -> Self {
        MarkConfig {
            mode: MarkMode::Minimize,
            label: "conduct-review".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkMode {
    /// Hide the contribution where the forge supports it.
    Minimize,
    /// Attach a review label instead.
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoresConfig {
    pub contributions: PathBuf,
    pub coc: PathBuf,
}

impl Default for StoresConfig {
    fn default() -> Self {
        StoresConfig {
            contributions: PathBuf::from("data/contributions.ndjson"),
            coc: PathBuf::from("data/coc.ndjson"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NotifyConfig {
    pub sink: SinkKind,
    /// Target file for the `file` sink.
    pub path: Option<PathBuf>,
    /// Target URL for the `webhook` sink.
    pub url: Option<String>,
}

impl Default for NotifyConfig {
    fn default() -> Self {
        NotifyConfig {
            sink: SinkKind::Stdout,
            path: None,
            url: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkKind {
    Stdout,
    File,
    Webhook,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgeConfig {
    /// Base URL of the GitHub-style REST API.
    pub base_url: String,
    /// Minimum gap between requests.
    pub pacing_ms: u64,
    pub max_retries: u32,
    pub timeout_s: u64,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            base_url: "https://api.github.com".to_string(),
            pacing_ms: 500,
            max_retries: 3,
            timeout_s: 30,
        }
    }
}

impl EngineConfig {
    /// Loads the config: explicit path if given, else the `ENGINE_CONFIG`
    /// environment variable, else pure defaults.
    pub fn load(explicit: Option<&Path>) -> Result<EngineConfig, ConfigError> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from));
        let config = match path {
            Some(path) => {
                let data = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str::<EngineConfig>(&data)
                    .map_err(|source| ConfigError::Parse { path, source })?
            }
            None => EngineConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_lines == 0 {
            return Err(ConfigError::Invalid("min_lines must be at least 1".into()));
        }
        if self.proposed_text().is_none() {
            return Err(ConfigError::Invalid(format!(
                "propose_version {:?} has no shipped document (known: 1.4, 2.0, 2.1)",
                self.propose_version
            )));
        }
        if text::parse_version_label(&self.outdated_below).is_none() {
            return Err(ConfigError::Invalid(format!(
                "outdated_below {:?} is not a version label",
                self.outdated_below
            )));
        }
        if self.classifier == Backend::Llm && self.llm.is_none() {
            return Err(ConfigError::Invalid(
                "classifier \"llm\" needs an llm section with base_url and model".into(),
            ));
        }
        match self.notify.sink {
            SinkKind::File if self.notify.path.is_none() => {
                return Err(ConfigError::Invalid(
                    "notify.sink \"file\" needs notify.path".into(),
                ));
            }
            SinkKind::Webhook if self.notify.url.is_none() => {
                return Err(ConfigError::Invalid(
                    "notify.sink \"webhook\" needs notify.url".into(),
                ));
            }
            _ => {}
        }
        if self.mark.mode == MarkMode::Label && self.mark.label.trim().is_empty() {
            return Err(ConfigError::Invalid(
                "mark.label must be non-empty in label mode".into(),
            ));
        }
        if url::Url::parse(&self.forge.base_url).is_err() {
            return Err(ConfigError::Invalid(format!(
                "forge.base_url {:?} is not a URL",
                self.forge.base_url
            )));
        }
        Ok(())
    }

    /// The document text published for `propose_version`.
    pub fn proposed_text(&self) -> Option<&'static str> {
        match self.propose_version.as_str() {
            "1.4" => Some(reference_texts::V1_4),
            "2.0" => Some(reference_texts::V2_0),
            "2.1" => Some(reference_texts::V2_1),
            _ => None,
        }
    }

    /// The flag lexicon this configuration selects: the shipped one, or
    /// the override file when `lexicon_path` is set.
    pub fn load_lexicon(&self) -> Result<FlagLexicon, ConfigError> {
        match &self.lexicon_path {
            None => Ok(FlagLexicon::shipped()),
            Some(path) => {
                FlagLexicon::from_json(&read_data_file(path)?).map_err(|e| {
                    ConfigError::Invalid(format!("lexicon_path {}: {e}", path.display()))
                })
            }
        }
    }

    /// The version fingerprints this configuration selects, shipped or
    /// overridden like the lexicon.
    pub fn load_fingerprints(&self) -> Result<CovenantFingerprints, ConfigError> {
        match &self.fingerprints_path {
            None => Ok(CovenantFingerprints::shipped()),
            Some(path) => {
                CovenantFingerprints::from_json(&read_data_file(path)?).map_err(|e| {
                    ConfigError::Invalid(format!("fingerprints_path {}: {e}", path.display()))
                })
            }
        }
    }

    pub fn analysis_thresholds(&self) -> AnalysisThresholds {
        AnalysisThresholds {
            min_lines: self.min_lines,
            outdated_below: self.outdated_below.clone(),
        }
    }

    /// Builds the configured notification sink. Assumes `validate` passed.
    pub fn notification_sink(&self) -> Box<dyn NotificationSink> {
        match self.notify.sink {
            SinkKind::Stdout => Box::new(StdoutSink),
            SinkKind::File => Box::new(FileSink::new(
                self.notify.path.clone().expect("validated: file sink path"),
            )),
            SinkKind::Webhook => Box::new(WebhookSink::new(
                self.notify.url.clone().expect("validated: webhook sink url"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = EngineConfig::default();
        config.validate().unwrap();
        assert_eq!(config.min_lines, 5);
        assert_eq!(config.propose_version, "2.1");
        assert_eq!(config.mark.label, "conduct-review");
        assert!(config.proposed_text().is_some());
    }

    #[test]
    fn empty_object_is_a_full_config() {
        let config: EngineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config, EngineConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<EngineConfig>(r#"{"min_line": 5}"#).unwrap_err();
        assert!(err.to_string().contains("min_line"));
    }

    #[test]
    fn llm_backend_requires_llm_section() {
        let config: EngineConfig = serde_json::from_str(r#"{"classifier": "llm"}"#).unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("llm"));

        let config: EngineConfig = serde_json::from_str(
            r#"{"classifier": "llm", "llm": {"base_url": "http://127.0.0.1:11434", "model": "m"}}"#,
        )
        .unwrap();
        config.validate().unwrap();
        assert_eq!(config.llm.as_ref().unwrap().timeout_s, 30);
    }

    #[test]
    fn sink_targets_are_required() {
        let config: EngineConfig = serde_json::from_str(r#"{"notify": {"sink": "file"}}"#).unwrap();
        assert!(config.validate().is_err());
        let config: EngineConfig =
            serde_json::from_str(r#"{"notify": {"sink": "webhook", "url": "http://x/hook"}}"#)
                .unwrap();
        config.validate().unwrap();
    }

    #[test]
    fn unknown_propose_version_is_rejected() {
        let config: EngineConfig =
            serde_json::from_str(r#"{"propose_version": "3.0"}"#).unwrap();
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = EngineConfig::default();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: EngineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }
}
