//! Text the engine publishes on the forge: pull-request and issue bodies,
//! branch names, and notification summaries. Everything here is a pure
//! function of its inputs so the same decision always publishes the same
//! words.

use crate::forge::{IssueSpec, PullRequestSpec};
use crate::taxonomy::FlagId;

use super::HelpReason;

/// Label attached to every issue the engine files.
pub const ISSUE_LABEL: &str = "code-of-conduct";

/// Title used for help issues; also the dedup key for open ones.
pub const HELP_ISSUE_TITLE: &str = "The code of conduct needs attention";

/// Title used for enhancement issues; also the dedup key for open ones.
pub const ENHANCEMENT_ISSUE_TITLE: &str = "Extend the code of conduct with missing guidelines";

/// Path a freshly proposed conduct document is written to.
pub const PROPOSED_COC_PATH: &str = "CODE_OF_CONDUCT.md";

/// Branch carrying conduct proposals. One branch per proposed version, so
/// an open proposal for that version blocks duplicates.
pub fn proposal_branch(version: &str) -> String {
    format!("conduct-bot/covenant-{version}")
}

pub fn propose_pr_spec(version: &str, text: &str) -> PullRequestSpec {
    PullRequestSpec {
        title: format!("Add a code of conduct (Contributor Covenant {version})"),
        body: format!(
            "This project has no code of conduct yet. This pull request adds the \
             Contributor Covenant {version}, a widely adopted baseline that spells out \
             the behavior the community welcomes and the behavior it does not.\n\n\
             Merging it enables automatic review of contributions against these \
             guidelines. Feel free to adapt the text before merging; closing this pull \
             request without merging is also a perfectly good answer.\n\n\
             Filed automatically by the conduct engine."
        ),
        source_branch: proposal_branch(version),
        files: vec![(PROPOSED_COC_PATH.to_string(), text.to_string())],
    }
}

pub fn update_pr_spec(
    version: &str,
    from: Option<&str>,
    path: &str,
    text: &str,
) -> PullRequestSpec {
    let from_clause = match from {
        Some(v) => format!("Contributor Covenant {v}"),
        None => "an earlier version".to_string(),
    };
    PullRequestSpec {
        title: format!("Update the code of conduct to Contributor Covenant {version}"),
        body: format!(
            "The code of conduct at `{path}` matches {from_clause}. This pull request \
             updates it to the Contributor Covenant {version}, which adds clearer \
             enforcement guidelines and refreshed wording.\n\n\
             Feel free to adapt the text before merging; closing this pull request \
             without merging is also a perfectly good answer.\n\n\
             Filed automatically by the conduct engine."
        ),
        source_branch: proposal_branch(version),
        files: vec![(path.to_string(), text.to_string())],
    }
}

pub fn help_issue_spec(reason: &HelpReason) -> IssueSpec {
    let body = match reason {
        HelpReason::TooShort {
            path,
            effective_lines,
            min_lines,
        } => format!(
            "The code of conduct at `{path}` is too short to review contributions \
             against: it has {effective_lines} effective line(s) of content, below the \
             configured minimum of {min_lines}.\n\n\
             Consider expanding it to state which behaviors the community encourages \
             and which it does not accept. The Contributor Covenant is a solid \
             starting point.\n\n\
             Filed automatically by the conduct engine."
        ),
        HelpReason::LinkOnly { path, links } => {
            let list = links
                .iter()
                .map(|l| format!("- {l}"))
                .collect::<Vec<_>>()
                .join("\n");
            format!(
                "The code of conduct at `{path}` only points elsewhere instead of \
                 stating the project's guidelines:\n\n{list}\n\n\
                 A link-only document cannot be reviewed against, and the target can \
                 change or disappear. Consider inlining the actual text. The \
                 Contributor Covenant is a solid starting point.\n\n\
                 Filed automatically by the conduct engine."
            )
        }
        HelpReason::Unreadable { path } => format!(
            "The code of conduct at `{path}` could not be read as text, so it cannot \
             be reviewed against. Consider replacing it with a plain-text or Markdown \
             document.\n\n\
             Filed automatically by the conduct engine."
        ),
    };
    IssueSpec {
        title: HELP_ISSUE_TITLE.to_string(),
        body,
        labels: vec![ISSUE_LABEL.to_string()],
    }
}

pub fn enhancement_issue_spec(missing: &[FlagId]) -> IssueSpec {
    let list = missing
        .iter()
        .map(|f| format!("- {f}: {}", f.guideline()))
        .collect::<Vec<_>>()
        .join("\n");
    IssueSpec {
        title: ENHANCEMENT_ISSUE_TITLE.to_string(),
        body: format!(
            "The project's code of conduct covers most of the usual ground, but the \
             following guidelines appear to be missing:\n\n{list}\n\n\
             Consider adding them so contributions touching these behaviors can be \
             reviewed consistently.\n\n\
             Filed automatically by the conduct engine."
        ),
        labels: vec![ISSUE_LABEL.to_string()],
    }
}
