//! Contribution classification: deciding whether a comment, issue, or review
//! is positive, negative, or neutral under the ten guidelines, and which
//! flags justify that call.
//!
//! Two backends produce the same verdict shape. The keyword backend reuses
//! the lexicon scan and needs no network; the LLM backend builds a prompt,
//! calls a completion endpoint, and parses the reply defensively. A reply
//! that cannot be parsed never moderates anyone: the verdict degrades to
//! neutral and is marked escalated so a human gets told.

pub mod llm;
pub mod prompt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::taxonomy::{FlagId, FlagLexicon, Polarity};
use crate::text;

/// What kind of contribution an event carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContributionKind {
    Issue,
    PullRequest,
    Comment,
    Discussion,
}

/// One incoming contribution event, as delivered to `handle-event`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    /// Forge-assigned, unique per delivery; the idempotency key.
    pub event_id: String,
    /// "owner/name".
    pub repo: String,
    pub kind: ContributionKind,
    pub author: String,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Positive,
    Negative,
    Neutral,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Positive => f.write_str("positive"),
            Classification::Negative => f.write_str("negative"),
            Classification::Neutral => f.write_str("neutral"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Lexicon,
    Llm,
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Lexicon => f.write_str("lexicon"),
            Backend::Llm => f.write_str("llm"),
        }
    }
}

/// The verdict either backend produces for one contribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionVerdict {
    pub classification: Classification,
    /// Flags justifying the classification; always the winning polarity,
    /// taxonomy order. Empty exactly when neutral.
    pub flags: Vec<FlagId>,
    pub reasons: String,
    pub backend: Backend,
    /// True when the backend could not stand behind its own answer (for
    /// example the LLM reply never parsed) and a human should look.
    pub escalated: bool,
}

impl ContributionVerdict {
    pub fn neutral(reasons: impl Into<String>, backend: Backend, escalated: bool) -> Self {
        ContributionVerdict {
            classification: Classification::Neutral,
            flags: Vec::new(),
            reasons: reasons.into(),
            backend,
            escalated,
        }
    }
}

/// Classifies with the keyword lexicon alone. Negative flags dominate: a
/// comment matching both polarities is treated as negative, because missing
/// praise costs less than missing abuse.
pub fn classify_lexicon(lexicon: &FlagLexicon, body: &str) -> ContributionVerdict {
    let report = text::detect_flags(lexicon, body);
    let negative: Vec<FlagId> = report
        .detected
        .iter()
        .copied()
        .filter(|f| f.polarity() == Polarity::Negative)
        .collect();
    let positive: Vec<FlagId> = report
        .detected
        .iter()
        .copied()
        .filter(|f| f.polarity() == Polarity::Positive)
        .collect();

    let (classification, flags) = if !negative.is_empty() {
        (Classification::Negative, negative)
    } else if !positive.is_empty() {
        (Classification::Positive, positive)
    } else {
        (Classification::Neutral, Vec::new())
    };

    let reasons = if flags.is_empty() {
        "no lexicon phrase matched".to_string()
    } else {
        let cited: Vec<String> = report
            .matches
            .iter()
            .filter(|m| flags.contains(&m.flag))
            .map(|m| format!("{} matched {:?}", m.flag, m.phrase))
            .collect();
        cited.join("; ")
    };

    ContributionVerdict {
        classification,
        flags,
        reasons,
        backend: Backend::Lexicon,
        escalated: false,
    }
}

/// Renders the reply posted under a positive contribution. Deterministic:
/// the same author and flags always produce the same text, so replays and
/// tests see identical bodies.
pub fn generate_thanks(lexicon: &FlagLexicon, author: &str, flags: &[FlagId]) -> String {
    let mut out = format!(
        "Thank you @{author}! Comments like yours keep this community healthy.\n"
    );
    if !flags.is_empty() {
        out.push_str("\nYour contribution was appreciated for:\n");
        for id in flags {
            out.push_str(&format!("- {}\n", lexicon.flag(*id).name));
        }
    }
    out.push_str("\nKeep it up!");
    out
}

/// A verdict as parsed out of an LLM reply, before it becomes a
/// [`ContributionVerdict`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedVerdict {
    pub classification: Classification,
    pub flags: Vec<FlagId>,
    pub reasons: String,
    /// Human-readable notes about every repair that was applied.
    pub repairs: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VerdictError {
    #[error("reply contains no JSON object")]
    NoJson,
    #[error("reply JSON lacks a usable shape: {0}")]
    BadShape(String),
    #[error("classification {0:?} is not positive, negative, or neutral")]
    BadClassification(String),
}

/// Shape an LLM reply is expected to carry, per the prompt contract.
#[derive(Deserialize)]
struct RawVerdict {
    #[allow(dead_code)]
    comment: Option<String>,
    classification: Option<serde_json::Value>,
    reasons: Option<serde_json::Value>,
    flags: Option<serde_json::Value>,
}

/// Finds the first parseable JSON object in free-form text. Markdown code
/// fences are ignored; braces inside JSON strings do not confuse the scan.
fn first_json_object(reply: &str) -> Option<serde_json::Value> {
    let cleaned: String = reply
        .lines()
        .filter(|line| {
            let t = line.trim_start();
            !(t.starts_with("```") || t.starts_with("~~~"))
        })
        .collect::<Vec<_>>()
        .join("\n");

    let bytes = cleaned.as_bytes();
    let mut search_from = 0;
    while let Some(rel) = cleaned[search_from..].find('{') {
        let start = search_from + rel;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut end = None;
        for (i, &b) in bytes[start..].iter().enumerate() {
            match b {
                _ if escaped => escaped = false,
                b'\\' if in_string => escaped = true,
                b'"' => in_string = !in_string,
                b'{' if !in_string => depth += 1,
                b'}' if !in_string => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(start + i + 1);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(end) => {
                if let Ok(value) = serde_json::from_str(&cleaned[start..end]) {
                    return Some(value);
                }
                search_from = start + 1;
            }
            None => return None, // unbalanced to the end of the reply
        }
    }
    None
}

fn flag_from_description(s: &str) -> Option<FlagId> {
    let wanted = text::collapse_ws(s).to_lowercase();
    if wanted.is_empty() {
        return None;
    }
    FlagId::ALL.iter().copied().find(|id| {
        let guideline = text::collapse_ws(id.guideline()).to_lowercase();
        guideline == wanted || id.to_string().to_lowercase() == wanted
    })
}

/// Parses an LLM reply into a verdict, repairing what can be repaired and
/// refusing what cannot. The stated classification wins over the flag list;
/// flags that contradict it are dropped, and a negative call without a
/// surviving negative flag degrades to neutral rather than inventing
/// evidence. Every repair is recorded.
pub fn parse_verdict(reply: &str) -> Result<ParsedVerdict, VerdictError> {
    let value = first_json_object(reply).ok_or(VerdictError::NoJson)?;
    let raw: RawVerdict = serde_json::from_value(value)
        .map_err(|e| VerdictError::BadShape(e.to_string()))?;

    let classification_text = match raw.classification {
        Some(serde_json::Value::String(s)) => s,
        Some(other) => return Err(VerdictError::BadClassification(other.to_string())),
        None => return Err(VerdictError::BadShape("missing classification".to_string())),
    };
    let classification = match classification_text.trim().to_lowercase().as_str() {
        "positive" => Classification::Positive,
        "negative" => Classification::Negative,
        "neutral" => Classification::Neutral,
        _ => return Err(VerdictError::BadClassification(classification_text)),
    };

    let reasons = match raw.reasons {
        Some(serde_json::Value::String(s)) => s,
        Some(other) => other.to_string(),
        None => String::new(),
    };

    let mut repairs = Vec::new();
    let mut flags: Vec<FlagId> = Vec::new();
    match raw.flags {
        None | Some(serde_json::Value::Null) => {}
        Some(serde_json::Value::Array(items)) => {
            for item in items {
                let serde_json::Value::String(s) = item else {
                    return Err(VerdictError::BadShape("flags must be strings".to_string()));
                };
                match flag_from_description(&s) {
                    Some(id) => {
                        if !flags.contains(&id) {
                            flags.push(id);
                        }
                    }
                    None => repairs.push(format!("dropped unrecognized flag {s:?}")),
                }
            }
        }
        Some(other) => {
            return Err(VerdictError::BadShape(format!(
                "flags must be an array, got {other}"
            )))
        }
    }
    flags.sort_by_key(|f| f.index());

    let mut classification = classification;
    match classification {
        Classification::Neutral => {
            if !flags.is_empty() {
                repairs.push("neutral verdict cited flags; flags cleared".to_string());
                flags.clear();
            }
        }
        Classification::Positive => {
            let before = flags.len();
            flags.retain(|f| f.polarity() == Polarity::Positive);
            if flags.len() != before {
                repairs.push("positive verdict cited negative flags; dropped".to_string());
            }
            if flags.is_empty() {
                repairs.push("positive verdict had no positive flag; degraded to neutral".to_string());
                classification = Classification::Neutral;
            }
        }
        Classification::Negative => {
            let before = flags.len();
            flags.retain(|f| f.polarity() == Polarity::Negative);
            if flags.len() != before {
                repairs.push("negative verdict cited positive flags; dropped".to_string());
            }
            if flags.is_empty() {
                repairs.push("negative verdict had no negative flag; degraded to neutral".to_string());
                classification = Classification::Neutral;
            }
        }
    }

    Ok(ParsedVerdict {
        classification,
        flags,
        reasons,
        repairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_negative_dominates_positive() {
        let lexicon = FlagLexicon::shipped();
        let verdict = classify_lexicon(
            &lexicon,
            "I appreciate the empathy here, but stop trolling the tracker.",
        );
        assert_eq!(verdict.classification, Classification::Negative);
        assert_eq!(verdict.flags, vec![FlagId::F7]);
        assert!(!verdict.escalated);
        assert_eq!(verdict.backend, Backend::Lexicon);
    }

    #[test]
    fn lexicon_positive_and_neutral() {
        let lexicon = FlagLexicon::shipped();
        let verdict = classify_lexicon(&lexicon, "Thanks for the constructive feedback!");
        assert_eq!(verdict.classification, Classification::Positive);
        assert_eq!(verdict.flags, vec![FlagId::F3]);
        assert!(verdict.reasons.contains("constructive feedback"));

        let verdict = classify_lexicon(&lexicon, "Rebased onto main, tests pass.");
        assert_eq!(verdict.classification, Classification::Neutral);
        assert!(verdict.flags.is_empty());
    }

    #[test]
    fn parses_a_well_formed_reply() {
        let reply = r#"{
            "comment": "Thank you for your help, I really appreciate your time and effort.",
            "classification": "positive",
            "reasons": "This comment reflects a positive engagement that fosters a supportive community atmosphere.",
            "flags": ["Demonstrating empathy and kindness toward other people"]
        }"#;
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.classification, Classification::Positive);
        assert_eq!(parsed.flags, vec![FlagId::F1]);
        assert!(parsed.repairs.is_empty());
    }

    #[test]
    fn parses_json_wrapped_in_prose_and_fences() {
        let reply = "Sure! Here is my analysis:\n```json\n{\"classification\": \"negative\", \
                     \"reasons\": \"insults\", \"flags\": [\"Public or private harassment\"]}\n```\nDone.";
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.classification, Classification::Negative);
        assert_eq!(parsed.flags, vec![FlagId::F8]);
    }

    #[test]
    fn braces_inside_strings_do_not_break_extraction() {
        let reply = r#"{"classification": "neutral", "reasons": "code like {x} is fine", "flags": []}"#;
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.classification, Classification::Neutral);
    }

    #[test]
    fn neutral_with_flags_is_repaired() {
        let reply = r#"{"classification": "neutral", "reasons": "r", "flags": ["Public or private harassment"]}"#;
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.classification, Classification::Neutral);
        assert!(parsed.flags.is_empty());
        assert_eq!(parsed.repairs.len(), 1);
    }

    #[test]
    fn negative_without_negative_flags_degrades_to_neutral() {
        let reply = r#"{"classification": "negative", "reasons": "r",
                        "flags": ["Demonstrating empathy and kindness toward other people"]}"#;
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.classification, Classification::Neutral);
        assert!(parsed.flags.is_empty());
        assert_eq!(parsed.repairs.len(), 2);
    }

    #[test]
    fn flag_ids_are_accepted_as_flag_names() {
        let reply = r#"{"classification": "negative", "reasons": "r", "flags": ["F8", "f7"]}"#;
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.flags, vec![FlagId::F7, FlagId::F8]);
    }

    #[test]
    fn unknown_flags_are_dropped_with_a_note() {
        let reply = r#"{"classification": "negative", "reasons": "r",
                        "flags": ["Being grumpy on Mondays", "Public or private harassment"]}"#;
        let parsed = parse_verdict(reply).unwrap();
        assert_eq!(parsed.classification, Classification::Negative);
        assert_eq!(parsed.flags, vec![FlagId::F8]);
        assert_eq!(parsed.repairs.len(), 1);
    }

    #[test]
    fn malformed_replies_are_errors() {
        for reply in [
            "I refuse to answer.",
            "",
            "[1, 2, 3]",
            r#"{"classification": "positive", "reasons": "unterminated"#,
            r#"{"classification": 5, "reasons": "r", "flags": []}"#,
            r#"{"classification": "meh", "reasons": "r", "flags": []}"#,
            r#"{"classification": "negative", "reasons": "r", "flags": "F8"}"#,
        ] {
            assert!(parse_verdict(reply).is_err(), "{reply:?}");
        }
    }
}
