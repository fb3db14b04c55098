//! Prompt construction for the LLM backend.
//!
//! The prompt is a pure function of the comment body and the flag set the
//! project's code of conduct covers: guidelines come from the taxonomy, the
//! worked examples ship with the engine, and nothing varies between runs. A
//! golden test pins the exact bytes for the full flag set, because silent
//! prompt drift silently changes verdicts.

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::taxonomy::{FlagId, Polarity};

/// One worked example embedded in the prompt: a comment in a given tone and
/// the verdict the model is expected to produce for it.
#[derive(Debug, Clone, Deserialize)]
pub struct FewShotExample {
    pub tone: String,
    pub comment: String,
    pub verdict: ExampleVerdict,
}

/// Field order matters: this serializes into the reply shape the prompt
/// instructs the model to produce.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleVerdict {
    pub comment: String,
    pub classification: String,
    pub reasons: String,
    pub flags: Vec<String>,
}

static FEW_SHOT: Lazy<Vec<FewShotExample>> = Lazy::new(|| {
    serde_json::from_str(include_str!("../../data/few_shot_examples.json"))
        .expect("shipped examples are valid")
});

/// The worked examples shipped with the engine, one per tone family.
pub fn few_shot_examples() -> &'static [FewShotExample] {
    &FEW_SHOT
}

/// Sentence defining neutrality; quoted verbatim in the prompt and relied on
/// by tests.
pub const NEUTRAL_RULE: &str =
    "A comment is considered neutral when it does not fall under any of the described flags.";

/// Builds the classification prompt for one comment body. Only the given
/// flags are described to the model: the caller passes the set the project's
/// code of conduct covers (or all ten when full enforcement is configured).
pub fn build_prompt(body: &str, flags: &[FlagId]) -> String {
    let mut out = String::new();
    out.push_str(
        "You are the comment reviewer of a software project. Analyze the following \
         comment under the project's code of conduct and answer with a single JSON \
         object with the fields \"comment\" (the comment itself), \"classification\" \
         (\"positive\", \"negative\", or \"neutral\"), \"reasons\" (a short explanation \
         of the decision), and \"flags\" (the list of guideline descriptions the \
         comment falls under, empty when neutral).\n\n",
    );
    out.push_str("The code of conduct describes the following behavior:\n\n");

    out.push_str("**Positive Flags:**\n");
    let mut n = 0;
    for id in FlagId::ALL {
        if id.polarity() == Polarity::Positive && flags.contains(&id) {
            n += 1;
            out.push_str(&format!("{n}. {}\n", id.guideline()));
        }
    }
    out.push_str("\n**Negative Flags:**\n");
    n = 0;
    for id in FlagId::ALL {
        if id.polarity() == Polarity::Negative && flags.contains(&id) {
            n += 1;
            out.push_str(&format!("{n}. {}\n", id.guideline()));
        }
    }
    out.push_str("\n**Neutral Flags:**\n");
    out.push_str(NEUTRAL_RULE);
    out.push_str("\n\nExamples:\n\n");

    for example in few_shot_examples() {
        let verdict = serde_json::to_string(&example.verdict).expect("example serializes");
        out.push_str(&format!("Comment: {:?}\nAnswer: {verdict}\n\n", example.comment));
    }

    out.push_str(&format!("Comment: {body:?}\nAnswer:"));
    out
}
