//! Rule-based lemmatization over a frozen vocabulary.
//!
//! The goal is not linguistic coverage but determinism: inflected forms of
//! the words the lexicon and the conduct documents actually use must fold to
//! one lemma, and everything else must pass through unchanged. Suffix rules
//! therefore only apply when the candidate stem is in [`VOCAB`]; a word that
//! resolves to no known stem is returned as written. The function is
//! idempotent: every output is either a vocabulary word or an input left
//! alone.

use std::collections::HashSet;

use once_cell::sync::Lazy;

/// Stems the suffix rules may produce. Frozen: extending it changes token
/// streams, so golden tests pin the behavior.
static VOCAB: Lazy<HashSet<&'static str>> = Lazy::new(|| {
    [
        "accept",
        "act",
        "action",
        "address",
        "advance",
        "apologize",
        "apology",
        "attack",
        "attention",
        "be",
        "behave",
        "behavior",
        "benefit",
        "bias",
        "breach",
        "bully",
        "comment",
        "community",
        "compassion",
        "conduct",
        "consequence",
        "contribute",
        "contribution",
        "contributor",
        "criticism",
        "demean",
        "demonstrate",
        "differ",
        "difference",
        "disclosure",
        "dox",
        "empathy",
        "example",
        "experience",
        "fault",
        "feedback",
        "focus",
        "give",
        "good",
        "guideline",
        "harass",
        "imagery",
        "inappropriate",
        "inclusive",
        "individual",
        "information",
        "insult",
        "interact",
        "intimidation",
        "joke",
        "kind",
        "kindness",
        "language",
        "lead",
        "leader",
        "learn",
        "maintain",
        "maintainer",
        "make",
        "member",
        "mistake",
        "opinion",
        "own",
        "participate",
        "perspective",
        "pledge",
        "post",
        "privacy",
        "private",
        "professional",
        "professionally",
        "project",
        "publish",
        "remark",
        "remove",
        "report",
        "represent",
        "respect",
        "respectful",
        "respond",
        "responsibility",
        "review",
        "ridicule",
        "setting",
        "sexual",
        "sexualize",
        "show",
        "space",
        "stalk",
        "standard",
        "threaten",
        "troll",
        "unconsented",
        "unprofessional",
        "unsuitable",
        "unwelcome",
        "use",
        "value",
        "viewpoint",
        "welcome",
    ]
    .into_iter()
    .collect()
});

fn known(stem: &str) -> bool {
    VOCAB.contains(stem)
}

/// Folds doubled final consonants: "doxx" -> "dox", "troll" stays "troll"
/// only via the vocabulary check at the call site.
fn undoubled(stem: &str) -> Option<&str> {
    let bytes = stem.as_bytes();
    if bytes.len() >= 2 && bytes[bytes.len() - 1] == bytes[bytes.len() - 2] {
        Some(&stem[..stem.len() - 1])
    } else {
        None
    }
}

/// Tries the stem itself, the stem with "e" restored, and the stem with a
/// doubled consonant folded. Used for "-ing" and "-ed".
fn resolve_stem(stem: &str) -> Option<String> {
    if known(stem) {
        return Some(stem.to_string());
    }
    let with_e = format!("{stem}e");
    if known(&with_e) {
        return Some(with_e);
    }
    if let Some(single) = undoubled(stem) {
        if known(single) {
            return Some(single.to_string());
        }
    }
    None
}

/// Maps one lowercase word to its lemma. Returns the word unchanged when no
/// vocabulary-backed rule applies.
pub fn lemmatize(word: &str) -> String {
    if known(word) {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if word.len() > 4 {
            let singular = format!("{stem}y");
            if known(&singular) {
                return singular;
            }
        }
    }
    if let Some(stem) = word.strip_suffix("ment") {
        if word.len() > 6 && known(stem) {
            return stem.to_string();
        }
    }
    if let Some(stem) = word.strip_suffix("ing") {
        if word.len() > 4 {
            if let Some(lemma) = resolve_stem(stem) {
                return lemma;
            }
        }
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if word.len() >= 4 {
            if let Some(lemma) = resolve_stem(stem) {
                return lemma;
            }
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if word.len() > 4 && known(stem) {
            return stem.to_string();
        }
    }
    if let Some(stem) = word.strip_suffix("s") {
        if word.len() > 3 && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") && known(stem) {
            return stem.to_string();
        }
    }
    word.to_string()
}
