//! The ten ethical flags and the keyword lexicon that detects them.
//!
//! Flags F1 through F5 describe behavior a community wants more of, F6
//! through F10 behavior it moderates away. Each flag carries a fixed
//! guideline sentence (the wording communities publish in their conduct
//! documents) plus a configurable set of detection keywords loaded from a
//! lexicon file. The guideline text is part of the engine's contract: the
//! prompt builder quotes it and verdict parsing matches against it, so it
//! lives here as constants rather than in the lexicon file.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::text;

/// Identifier of one ethical flag. Ordering follows the taxonomy: positive
/// flags first, then negative, each in published order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlagId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
    F10,
}

impl FlagId {
    pub const ALL: [FlagId; 10] = [
        FlagId::F1,
        FlagId::F2,
        FlagId::F3,
        FlagId::F4,
        FlagId::F5,
        FlagId::F6,
        FlagId::F7,
        FlagId::F8,
        FlagId::F9,
        FlagId::F10,
    ];

    /// Position in [`FlagId::ALL`], also the canonical sort key.
    pub fn index(self) -> usize {
        match self {
            FlagId::F1 => 0,
            FlagId::F2 => 1,
            FlagId::F3 => 2,
            FlagId::F4 => 3,
            FlagId::F5 => 4,
            FlagId::F6 => 5,
            FlagId::F7 => 6,
            FlagId::F8 => 7,
            FlagId::F9 => 8,
            FlagId::F10 => 9,
        }
    }

    pub fn polarity(self) -> Polarity {
        if self.index() < 5 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    /// The guideline sentence this flag stands for, exactly as conduct
    /// documents publish it. Stable: prompts and verdict parsing both key
    /// on this wording.
    pub fn guideline(self) -> &'static str {
        match self {
            FlagId::F1 => "Demonstrating empathy and kindness toward other people",
            FlagId::F2 => "Being respectful of differing opinions, viewpoints, and experiences",
            FlagId::F3 => "Giving and gracefully accepting constructive feedback",
            FlagId::F4 => {
                "Accepting responsibility and apologizing to those affected by our mistakes, \
                 and learning from the experience"
            }
            FlagId::F5 => {
                "Focusing on what is best not just for us as individuals, but for the overall \
                 community"
            }
            FlagId::F6 => {
                "The use of sexualized language or imagery, and sexual attention or advances \
                 of any kind"
            }
            FlagId::F7 => "Trolling, insulting or derogatory comments, and personal or political attacks",
            FlagId::F8 => "Public or private harassment",
            FlagId::F9 => {
                "Publishing others' private information, such as a physical or email address, \
                 without their explicit permission"
            }
            FlagId::F10 => {
                "Other conduct which could reasonably be considered inappropriate in a \
                 professional setting"
            }
        }
    }
}

impl fmt::Display for FlagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.index() + 1)
    }
}

impl FromStr for FlagId {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FlagId::ALL
            .iter()
            .copied()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| TaxonomyError::UnknownFlag(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::Positive => f.write_str("positive"),
            Polarity::Negative => f.write_str("negative"),
        }
    }
}

/// One flag as loaded from a lexicon file: a display name, its polarity,
/// and the raw keyword phrases that detect it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EthicalFlag {
    pub id: FlagId,
    pub name: String,
    pub polarity: Polarity,
    pub keywords: Vec<String>,
}

/// A keyword phrase compiled to lemma tokens, ready for matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledPhrase {
    pub flag: FlagId,
    /// The phrase as written in the lexicon file.
    pub raw: String,
    /// The phrase after the same normalization documents go through.
    pub tokens: Vec<String>,
}

/// The full keyword lexicon: all ten flags plus their phrases compiled for
/// matching. Construct with [`FlagLexicon::from_json`] or take the shipped
/// default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagLexicon {
    pub version: String,
    flags: Vec<EthicalFlag>,
    phrases: Vec<CompiledPhrase>,
}

/// Serialized shape of a lexicon file.
#[derive(Serialize, Deserialize)]
struct LexiconFile {
    version: String,
    flags: BTreeMap<String, LexiconEntry>,
}

#[derive(Serialize, Deserialize)]
struct LexiconEntry {
    name: String,
    polarity: Polarity,
    keywords: Vec<String>,
}

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.json");

impl FlagLexicon {
    /// The lexicon shipped with the engine.
    pub fn shipped() -> FlagLexicon {
        FlagLexicon::from_json(DEFAULT_LEXICON).expect("shipped lexicon is valid")
    }

    /// Parses and validates a lexicon file. All ten flags must be present
    /// with their canonical polarity, every flag needs at least one keyword,
    /// and no keyword may normalize to the same token sequence under two
    /// different flags.
    pub fn from_json(json: &str) -> Result<FlagLexicon, TaxonomyError> {
        let file: LexiconFile = serde_json::from_str(json)?;

        for key in file.flags.keys() {
            FlagId::from_str(key)?;
        }

        let mut flags = Vec::with_capacity(FlagId::ALL.len());
        let mut phrases = Vec::new();
        let mut seen: HashMap<Vec<String>, (FlagId, String)> = HashMap::new();

        for id in FlagId::ALL {
            let entry = file
                .flags
                .get(&id.to_string())
                .ok_or(TaxonomyError::MissingFlag(id))?;
            if entry.polarity != id.polarity() {
                return Err(TaxonomyError::PolarityMismatch {
                    flag: id,
                    expected: id.polarity(),
                    found: entry.polarity,
                });
            }
            if entry.keywords.is_empty() {
                return Err(TaxonomyError::NoKeywords(id));
            }
            for raw in &entry.keywords {
                let tokens = text::normalize(raw).tokens;
                if tokens.is_empty() {
                    return Err(TaxonomyError::EmptyPhrase {
                        flag: id,
                        raw: raw.clone(),
                    });
                }
                match seen.get(&tokens) {
                    Some((other, _)) if *other != id => {
                        return Err(TaxonomyError::AmbiguousPhrase {
                            raw: raw.clone(),
                            first: *other,
                            second: id,
                        });
                    }
                    Some(_) => {} // same flag listed an equivalent spelling; keep the first
                    None => {
                        seen.insert(tokens.clone(), (id, raw.clone()));
                        phrases.push(CompiledPhrase {
                            flag: id,
                            raw: raw.clone(),
                            tokens,
                        });
                    }
                }
            }
            flags.push(EthicalFlag {
                id,
                name: entry.name.clone(),
                polarity: entry.polarity,
                keywords: entry.keywords.clone(),
            });
        }

        Ok(FlagLexicon {
            version: file.version,
            flags,
            phrases,
        })
    }

    /// Serializes back to the file shape. `from_json(to_json(x)) == x`.
    pub fn to_json(&self) -> String {
        let file = LexiconFile {
            version: self.version.clone(),
            flags: self
                .flags
                .iter()
                .map(|f| {
                    (
                        f.id.to_string(),
                        LexiconEntry {
                            name: f.name.clone(),
                            polarity: f.polarity,
                            keywords: f.keywords.clone(),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("lexicon serializes")
    }

    pub fn flag(&self, id: FlagId) -> &EthicalFlag {
        &self.flags[id.index()]
    }

    pub fn flags(&self) -> &[EthicalFlag] {
        &self.flags
    }

    pub fn phrases(&self) -> &[CompiledPhrase] {
        &self.phrases
    }

    pub fn by_polarity(&self, polarity: Polarity) -> Vec<FlagId> {
        FlagId::ALL
            .iter()
            .copied()
            .filter(|id| id.polarity() == polarity)
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("lexicon is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown flag id {0:?}")]
    UnknownFlag(String),
    #[error("lexicon is missing flag {0}")]
    MissingFlag(FlagId),
    #[error("flag {flag} declared {found} but is canonically {expected}")]
    PolarityMismatch {
        flag: FlagId,
        expected: Polarity,
        found: Polarity,
    },
    #[error("flag {0} has no keywords")]
    NoKeywords(FlagId),
    #[error("keyword {raw:?} of flag {flag} normalizes to nothing")]
    EmptyPhrase { flag: FlagId, raw: String },
    #[error("keyword {raw:?} appears under both {first} and {second}")]
    AmbiguousPhrase {
        raw: String,
        first: FlagId,
        second: FlagId,
    },
}
