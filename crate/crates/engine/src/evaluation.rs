//! Classifier evaluation: run any backend over a labeled comment dataset
//! and report overall accuracy, per-flag accuracy, and a flag confusion
//! matrix.
//!
//! The dataset is newline-delimited JSON, one [`LabeledComment`] per line.
//! Labels follow verdict rules: neutral means no flags, and the expected
//! flags all carry the polarity of the expected classification.
//!
//! The confusion matrix is single-label over eleven classes (ten flags
//! plus neutral). Multi-flag sets are reduced to their first flag in
//! taxonomy order on both axes; the unreduced sets are kept in the
//! per-item dump so nothing is lost to the reduction. Per-tone accuracy
//! and the item dump go beyond the headline numbers and are part of this
//! artifact's report format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contribution::{Classification, ContributionVerdict};
use crate::taxonomy::{FlagId, Polarity};

/// Writing styles the dataset distinguishes, so accuracy can be broken
/// down by how plainly a comment says what it means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tone {
    Direct,
    Subtle,
    Ironic,
    Sarcastic,
    Emoticon,
}

impl Tone {
    pub const ALL: [Tone; 5] = [
        Tone::Direct,
        Tone::Subtle,
        Tone::Ironic,
        Tone::Sarcastic,
        Tone::Emoticon,
    ];
}

impl fmt::Display for Tone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tone::Direct => "direct",
            Tone::Subtle => "subtle",
            Tone::Ironic => "ironic",
            Tone::Sarcastic => "sarcastic",
            Tone::Emoticon => "emoticon",
        };
        f.write_str(s)
    }
}

/// One labeled dataset entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledComment {
    pub text: String,
    pub expected_classification: Classification,
    #[serde(default)]
    pub expected_flags: Vec<FlagId>,
    pub tone: Tone,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {problem}")]
    Invalid { line: usize, problem: String },
    #[error("dataset is empty")]
    Empty,
}

/// A parsed dataset plus non-fatal observations about it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub comments: Vec<LabeledComment>,
    /// Duplicate texts and similar oddities; the dataset still loads.
    pub warnings: Vec<String>,
}

fn check_labels(c: &LabeledComment) -> Result<(), String> {
    match c.expected_classification {
        Classification::Neutral => {
            if !c.expected_flags.is_empty() {
                return Err("neutral comments must have no expected flags".to_string());
            }
        }
        Classification::Positive | Classification::Negative => {
            if c.expected_flags.is_empty() {
                return Err(format!(
                    "{} comments need at least one expected flag",
                    c.expected_classification
                ));
            }
            let wanted = if c.expected_classification == Classification::Positive {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            if let Some(f) = c.expected_flags.iter().find(|f| f.polarity() != wanted) {
                return Err(format!(
                    "flag {f} has the wrong polarity for a {} label",
                    c.expected_classification
                ));
            }
        }
    }
    Ok(())
}

/// Parses newline-delimited JSON. Blank lines are allowed; any malformed
/// or label-inconsistent line fails the load with its line number.
/// Duplicate texts are legal but reported as warnings.
pub fn parse_dataset(input: &str) -> Result<Dataset, DatasetError> {
    let mut comments = Vec::new();
    let mut warnings = Vec::new();
    let mut seen: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let comment: LabeledComment =
            serde_json::from_str(raw).map_err(|e| DatasetError::Invalid {
                line,
                problem: e.to_string(),
            })?;
        check_labels(&comment).map_err(|problem| DatasetError::Invalid { line, problem })?;
        comments.push(comment);
    }
    for (i, c) in comments.iter().enumerate() {
        if let Some(first) = seen.insert(c.text.as_str(), i + 1) {
            warnings.push(format!(
                "duplicate text: entries {} and {} are identical",
                first,
                i + 1
            ));
        }
    }
    if comments.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(Dataset { comments, warnings })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let input = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&input)
}

/// Accuracy of one flag: of the `n` comments labeled with it, how many
/// predictions included it. `accuracy` is None when the flag never occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagAccuracy {
    pub flag: FlagId,
    pub n: u32,
    pub hits: u32,
    pub accuracy: Option<f64>,
}

/// Exact-classification accuracy within one tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneAccuracy {
    pub tone: Tone,
    pub n: u32,
    pub hits: u32,
    pub accuracy: Option<f64>,
}

/// The single-label confusion matrix: ten flags in taxonomy order plus
/// neutral. `counts[i][j]` is the number of comments whose primary
/// expected label is `labels[i]` and primary predicted label `labels[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u32>>,
}

pub const NEUTRAL_LABEL: &str = "neutral";

impl ConfusionMatrix {
    fn empty() -> ConfusionMatrix {
        let mut labels: Vec<String> = FlagId::ALL.iter().map(|f| f.to_string()).collect();
        labels.push(NEUTRAL_LABEL.to_string());
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Index of a flag set's primary label: its first flag in taxonomy
    /// order, or neutral when the set is empty.
    fn primary(flags: &[FlagId]) -> usize {
        flags
            .iter()
            .map(|f| f.index())
            .min()
            .unwrap_or(FlagId::ALL.len())
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u32> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }
}

/// One evaluated comment, with the unreduced flag sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub text: String,
    pub tone: Tone,
    pub expected_classification: Classification,
    pub expected_flags: Vec<FlagId>,
    pub predicted_classification: Classification,
    pub predicted_flags: Vec<FlagId>,
    /// Set when the backend failed on this item and the prediction was
    /// substituted with neutral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The full evaluation result; serializes to the `eval` report JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: u32,
    /// Share of exact classification matches, in percent.
    pub classification_accuracy: f64,
    pub per_flag_accuracy: Vec<FlagAccuracy>,
    pub per_tone_accuracy: Vec<ToneAccuracy>,
    pub confusion: ConfusionMatrix,
    pub items: Vec<EvalItem>,
    /// Backend failures, one line per failed item.
    pub errors: Vec<String>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn ratio_pct(hits: u32, n: u32) -> Option<f64> {
    (n > 0).then(|| round2(100.0 * f64::from(hits) / f64::from(n)))
}

/// Runs `classify` over every comment. A backend error on an item never
/// aborts the run: the item is scored as a neutral prediction and the
/// error is logged in the report.
pub fn evaluate<C>(dataset: &[LabeledComment], mut classify: C) -> Result<EvalReport, DatasetError>
where
    C: FnMut(&LabeledComment) -> Result<ContributionVerdict, String>,
{
    if dataset.is_empty() {
        return Err(DatasetError::Empty);
    }

    let mut confusion = ConfusionMatrix::empty();
    let mut items = Vec::with_capacity(dataset.len());
    let mut errors = Vec::new();
    let mut classification_hits: u32 = 0;
    let mut flag_n = [0u32; FlagId::ALL.len()];
    let mut flag_hits = [0u32; FlagId::ALL.len()];
    let mut tone_n = [0u32; Tone::ALL.len()];
    let mut tone_hits = [0u32; Tone::ALL.len()];

    for comment in dataset {
        let (predicted_classification, predicted_flags, error) = match classify(comment) {
            Ok(verdict) => (verdict.classification, verdict.flags, None),
            Err(e) => {
                errors.push(format!("{:?}: {e}", comment.text));
                (Classification::Neutral, Vec::new(), Some(e))
            }
        };

        let tone_slot = Tone::ALL.iter().position(|t| *t == comment.tone).unwrap();
        tone_n[tone_slot] += 1;
        if predicted_classification == comment.expected_classification {
            classification_hits += 1;
            tone_hits[tone_slot] += 1;
        }
        for flag in &comment.expected_flags {
            flag_n[flag.index()] += 1;
            if predicted_flags.contains(flag) {
                flag_hits[flag.index()] += 1;
            }
        }
        confusion.counts[ConfusionMatrix::primary(&comment.expected_flags)]
            [ConfusionMatrix::primary(&predicted_flags)] += 1;

        items.push(EvalItem {
            text: comment.text.clone(),
            tone: comment.tone,
            expected_classification: comment.expected_classification,
            expected_flags: comment.expected_flags.clone(),
            predicted_classification,
            predicted_flags,
            error,
        });
    }

    let n = dataset.len() as u32;
    Ok(EvalReport {
        n,
        classification_accuracy: ratio_pct(classification_hits, n).unwrap(),
        per_flag_accuracy: FlagId::ALL
            .iter()
            .map(|f| FlagAccuracy {
                flag: *f,
                n: flag_n[f.index()],
                hits: flag_hits[f.index()],
                accuracy: ratio_pct(flag_hits[f.index()], flag_n[f.index()]),
            })
            .collect(),
        per_tone_accuracy: Tone::ALL
            .iter()
            .enumerate()
            .map(|(i, t)| ToneAccuracy {
                tone: *t,
                n: tone_n[i],
                hits: tone_hits[i],
                accuracy: ratio_pct(tone_hits[i], tone_n[i]),
            })
            .collect(),
        confusion,
        items,
        errors,
    })
}
