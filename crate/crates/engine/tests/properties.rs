//! Generative checks for the invariants the deterministic pipeline leans
//! on: token streams concatenate, detection ignores case, lemmatization is
//! idempotent, and freshness stays inside the unit interval for any sane
//! timeline.

use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;

use conduct_engine::repo;
use conduct_engine::taxonomy::{FlagLexicon, Polarity};
use conduct_engine::text::{detect_flags, lemmatize, normalize};

/// Word pool biased toward the shipped lexicon so generated documents
/// actually trigger matches instead of passing the properties vacuously.
fn word_pool() -> Vec<String> {
    let lexicon = FlagLexicon::shipped();
    let mut words: Vec<String> = lexicon
        .flags()
        .iter()
        .flat_map(|f| f.keywords.iter())
        .flat_map(|k| k.split_whitespace())
        .map(str::to_string)
        .collect();
    for filler in [
        "the", "a", "for", "this", "review", "code", "merge", "please", "stop", "really",
        "Thanks", "PR", "CI", "42", "soon,", "done.",
    ] {
        words.push(filler.to_string());
    }
    words.sort();
    words.dedup();
    words
}

fn document() -> impl Strategy<Value = String> {
    let pool = word_pool();
    proptest::collection::vec(0..pool.len(), 0..60)
        .prop_map(move |picks| {
            picks
                .iter()
                .map(|&i| pool[i].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
}

proptest! {
    /// Appending more text never removes a detected flag.
    #[test]
    fn appending_text_never_removes_flags(a in document(), b in document()) {
        let lexicon = FlagLexicon::shipped();
        let before = detect_flags(&lexicon, &a);
        let combined = detect_flags(&lexicon, &format!("{a}\n{b}"));
        for flag in &before.detected {
            prop_assert!(
                combined.detected.contains(flag),
                "flag {flag} vanished when text was appended"
            );
        }
    }

    /// The token stream of a joined document is the concatenation of the
    /// parts' streams, which is what makes the append property hold.
    #[test]
    fn token_streams_concatenate(a in document(), b in document()) {
        let mut expected = normalize(&a).tokens;
        expected.extend(normalize(&b).tokens);
        prop_assert_eq!(normalize(&format!("{}\n{}", a, b)).tokens, expected);
    }

    #[test]
    fn detection_ignores_ascii_case(doc in document()) {
        let lexicon = FlagLexicon::shipped();
        prop_assert_eq!(
            detect_flags(&lexicon, &doc),
            detect_flags(&lexicon, &doc.to_ascii_uppercase())
        );
    }

    #[test]
    fn detected_flags_are_sorted_and_justified(doc in document()) {
        let lexicon = FlagLexicon::shipped();
        let report = detect_flags(&lexicon, &doc);
        let mut sorted = report.detected.clone();
        sorted.sort_by_key(|f| f.index());
        sorted.dedup();
        prop_assert_eq!(&report.detected, &sorted);
        for flag in &report.detected {
            prop_assert!(report.matches.iter().any(|m| m.flag == *flag));
        }
        for m in &report.matches {
            prop_assert!(report.detected.contains(&m.flag));
            prop_assert_eq!(
                m.flag.polarity() == Polarity::Positive,
                m.flag.index() < 5
            );
        }
    }

    #[test]
    fn lemmatize_is_idempotent(word in "[a-z0-9]{1,15}") {
        let once = lemmatize(&word);
        prop_assert_eq!(lemmatize(&once), once.clone(), "word {:?} -> {:?}", word, once);
    }

    /// Any ordered timeline yields a freshness inside [0, 1].
    #[test]
    fn freshness_stays_in_unit_interval(
        start in 0i64..2_000_000_000,
        to_modified in 0i64..1_000_000_000,
        to_last in 0i64..1_000_000_000,
    ) {
        let created = Utc.timestamp_opt(start, 0).unwrap();
        let modified = created + chrono::Duration::seconds(to_modified);
        let last = modified + chrono::Duration::seconds(to_last);
        let f = repo::freshness(created, modified, last).unwrap();
        prop_assert!((0.0..=1.0).contains(&f), "freshness {f} out of range");
    }
}

/// Broken timelines are rejected rather than clamped.
#[test]
fn disordered_timelines_error() {
    let t = |s: &str| s.parse::<DateTime<Utc>>().unwrap();
    assert!(repo::freshness(
        t("2024-01-01T00:00:00Z"),
        t("2020-01-01T00:00:00Z"),
        t("2024-06-01T00:00:00Z"),
    )
    .is_err());
    assert!(repo::freshness(
        t("2020-01-01T00:00:00Z"),
        t("2024-06-01T00:00:00Z"),
        t("2024-01-01T00:00:00Z"),
    )
    .is_err());
}
