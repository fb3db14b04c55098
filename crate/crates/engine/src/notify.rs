//! Project-owner notifications.
//!
//! Every decision that warrants the owner's attention ends in one
//! [`Notification`] pushed through the configured sink. Sinks are fire and
//! forget from the orchestrator's point of view; a failing sink is reported
//! but never blocks or rolls back the actions already taken.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub repo: String,
    /// Event that triggered the decision, when one did.
    pub event_id: Option<String>,
    /// One line: what the engine did and why.
    pub summary: String,
    /// Full detail: trace, verdict, artifacts touched.
    pub body: String,
    pub sent_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum NotifyError {
    #[error("notification io: {0}")]
    Io(#[from] std::io::Error),
    #[error("webhook: {0}")]
    Webhook(String),
}

pub trait NotificationSink: Send + Sync {
    fn send(&self, notification: &Notification) -> Result<(), NotifyError>;
}

/// Prints one line per notification to stdout. The default sink.
pub struct StdoutSink;

impl NotificationSink for StdoutSink {
    fn send(&self, n: &Notification) -> Result<(), NotifyError> {
        println!(
            "notify {} {} {}",
            n.repo,
            n.event_id.as_deref().unwrap_or("-"),
            n.summary
        );
        Ok(())
    }
}

/// Appends each notification to a file as one JSON line.
pub struct FileSink {
    path: PathBuf,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>) -> FileSink {
        FileSink { path: path.into() }
    }
}

impl NotificationSink for FileSink {
    fn send(&self, n: &Notification) -> Result<(), NotifyError> {
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        let line = serde_json::to_string(n).expect("notification serializes");
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        Ok(())
    }
}

/// POSTs each notification as JSON to a fixed URL.
pub struct WebhookSink {
    url: String,
    http: reqwest::blocking::Client,
}

impl WebhookSink {
    pub fn new(url: impl Into<String>) -> WebhookSink {
        WebhookSink {
            url: url.into(),
            http: reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(10))
                .build()
                .expect("client builds"),
        }
    }
}

impl NotificationSink for WebhookSink {
    fn send(&self, n: &Notification) -> Result<(), NotifyError> {
        let response = self
            .http
            .post(&self.url)
            .json(n)
            .send()
            .map_err(|e| NotifyError::Webhook(e.to_string()))?;
        if !response.status().is_success() {
            return Err(NotifyError::Webhook(format!(
                "{} returned {}",
                self.url,
                response.status()
            )));
        }
        Ok(())
    }
}

/// Collects notifications in memory. For tests and dry runs.
#[derive(Default)]
pub struct MemorySink {
    sent: Mutex<Vec<Notification>>,
}

impl MemorySink {
    pub fn new() -> MemorySink {
        MemorySink::default()
    }

    pub fn sent(&self) -> Vec<Notification> {
        self.sent.lock().unwrap().clone()
    }
}

impl NotificationSink for MemorySink {
    fn send(&self, n: &Notification) -> Result<(), NotifyError> {
        self.sent.lock().unwrap().push(n.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Notification {
        Notification {
            repo: "acme/widget".to_string(),
            event_id: Some("evt-1".to_string()),
            summary: "proposed a conduct document".to_string(),
            body: "details".to_string(),
            sent_at: "2024-05-01T10:00:00Z".parse().unwrap(),
        }
    }

    #[test]
    fn file_sink_appends_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notifications.ndjson");
        let sink = FileSink::new(&path);
        sink.send(&sample()).unwrap();
        sink.send(&sample()).unwrap();

        let data = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = data.lines().collect();
        assert_eq!(lines.len(), 2);
        let parsed: Notification = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(parsed, sample());
    }

    #[test]
    fn memory_sink_collects() {
        let sink = MemorySink::new();
        sink.send(&sample()).unwrap();
        assert_eq!(sink.sent().len(), 1);
        assert_eq!(sink.sent()[0].repo, "acme/widget");
    }
}
