//! Corpus statistics: how widely conduct documents are adopted across the
//! most-starred repositories of a set of languages, how fresh those
//! documents are, which guidelines they cover, and which covenant versions
//! they carry. One run produces a per-language table plus a totals row,
//! renderable as markdown for reading or CSV for further processing.
//!
//! Counting rules:
//! - presence: the repository has a conduct document at a recognized path,
//!   readable or not.
//! - unreadable: the document exists but cannot be fetched as text (binary
//!   blob, or gone between listing and fetch). Present but invalid.
//! - content: the fetched document grades as outdated, incomplete, or
//!   complete, i.e. it is an actual policy rather than a stub or a bare
//!   link. Reference share, flag coverage, and version counts are all
//!   measured over these documents only.
//! - freshness: computed from repository timestamps for every located
//!   document; repositories with inconsistent timelines are skipped
//!   silently and do not count toward the mean.
//!
//! Percentages are rounded to two decimals when computed, so a rendered
//! report and the stats it came from agree exactly. Totals are recomputed
//! from summed raw counts, never averaged from per-language percentages.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coc::{self, AnalysisThresholds};
use crate::forge::{Forge, ForgeError};
use crate::repo;
use crate::taxonomy::{FlagId, FlagLexicon};
use crate::text::CovenantFingerprints;

/// Row label used for the recomputed totals.
pub const TOTAL_LABEL: &str = "total";

/// One row of the report. The fields are exactly the CSV columns; flag
/// percentages are indexed by [`FlagId::index`], version counts by
/// [`CorpusStats::version_labels`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub language: String,
    pub n_repos: u32,
    pub presence_count: u32,
    pub presence_pct: f64,
    pub content_count: u32,
    pub content_pct: f64,
    /// Content documents referencing the covenant by name or link.
    pub referencing_count: u32,
    /// referencing_count / content_count; None when there is no content.
    pub r_cc_pct: Option<f64>,
    pub unreadable_count: u32,
    /// Repositories whose timestamps allowed a freshness score.
    pub freshness_n: u32,
    pub mean_freshness: Option<f64>,
    /// Share of content documents covering each flag; None when 0/0.
    pub flag_pct: Vec<Option<f64>>,
    pub version_counts: Vec<u32>,
    /// Content documents with no recognizable covenant version.
    pub unversioned_count: u32,
}

/// A repository the run could not inspect. Recorded, never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineError {
    pub language: String,
    /// None when listing the language itself failed.
    pub repo: Option<String>,
    pub error: String,
}

/// The full report: one row per requested language, in request order,
/// plus a totals row recomputed from raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Covenant versions seen anywhere in the corpus, sorted; the
    /// `version_counts` vectors align with this.
    pub version_labels: Vec<String>,
    pub rows: Vec<StatsRow>,
    pub totals: StatsRow,
    /// Not part of the CSV; kept for the markdown report and logs.
    pub errors: Vec<MineError>,
}

#[derive(Debug, Default, Clone)]
struct Tally {
    n_repos: u32,
    presence: u32,
    content: u32,
    referencing: u32,
    unreadable: u32,
    freshness_sum: f64,
    freshness_n: u32,
    flag_hits: [u32; FlagId::ALL.len()],
    versions: std::collections::BTreeMap<String, u32>,
    unversioned: u32,
}

impl Tally {
    fn absorb(&mut self, other: &Tally) {
        self.n_repos += other.n_repos;
        self.presence += other.presence;
        self.content += other.content;
        self.referencing += other.referencing;
        self.unreadable += other.unreadable;
        self.freshness_sum += other.freshness_sum;
        self.freshness_n += other.freshness_n;
        for (mine, theirs) in self.flag_hits.iter_mut().zip(other.flag_hits) {
            *mine += theirs;
        }
        for (version, n) in &other.versions {
            *self.versions.entry(version.clone()).or_default() += n;
        }
        self.unversioned += other.unversioned;
    }

    fn into_row(self, language: &str, version_labels: &[String]) -> StatsRow {
        StatsRow {
            language: language.to_string(),
            n_repos: self.n_repos,
            presence_count: self.presence,
            presence_pct: pct(self.presence, self.n_repos),
            content_count: self.content,
            content_pct: pct(self.content, self.n_repos),
            referencing_count: self.referencing,
            r_cc_pct: opt_pct(self.referencing, self.content),
            unreadable_count: self.unreadable,
            freshness_n: self.freshness_n,
            mean_freshness: (self.freshness_n > 0)
                .then(|| self.freshness_sum / f64::from(self.freshness_n)),
            flag_pct: self
                .flag_hits
                .iter()
                .map(|&hits| opt_pct(hits, self.content))
                .collect(),
            version_counts: version_labels
                .iter()
                .map(|label| self.versions.get(label).copied().unwrap_or(0))
                .collect(),
            unversioned_count: self.unversioned,
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn pct(count: u32, denom: u32) -> f64 {
    if denom == 0 {
        0.0
    } else {
        round2(100.0 * f64::from(count) / f64::from(denom))
    }
}

fn opt_pct(count: u32, denom: u32) -> Option<f64> {
    (denom > 0).then(|| pct(count, denom))
}

/// Surveys the top `count` repositories of each language. Forge trouble
/// with one repository (or one language) is recorded in the result and the
/// run continues; the output is deterministic for a frozen forge state.
pub fn mine<F: Forge>(
    forge: &F,
    languages: &[String],
    count: usize,
    lexicon: &FlagLexicon,
    fingerprints: &CovenantFingerprints,
    thresholds: &AnalysisThresholds,
) -> CorpusStats {
    let mut errors = Vec::new();
    let mut tallies: Vec<(String, Tally)> = Vec::new();

    for language in languages {
        let mut tally = Tally::default();
        match forge.top_repositories(language, count) {
            Err(e) => errors.push(MineError {
                language: language.clone(),
                repo: None,
                error: e.to_string(),
            }),
            Ok(repos) => {
                for snapshot in repos {
                    tally.n_repos += 1;
                    let Some(file) = repo::locate_coc(&snapshot) else {
                        continue;
                    };
                    tally.presence += 1;
                    if let Ok(f) = repo::freshness(
                        snapshot.created_at,
                        file.last_modified_at,
                        snapshot.last_commit_at,
                    ) {
                        tally.freshness_sum += f;
                        tally.freshness_n += 1;
                    }
                    match forge.get_file(&snapshot.name, &file.path) {
                        Ok(Some(content)) => {
                            let analysis =
                                coc::analyze(lexicon, fingerprints, thresholds, &content);
                            if analysis.status.is_valid() {
                                tally.content += 1;
                                if analysis.references_covenant {
                                    tally.referencing += 1;
                                }
                                for flag in &analysis.detected {
                                    tally.flag_hits[flag.index()] += 1;
                                }
                                match &analysis.version {
                                    Some(v) => {
                                        *tally.versions.entry(v.clone()).or_default() += 1
                                    }
                                    None => tally.unversioned += 1,
                                }
                            }
                        }
                        // Listed but gone by fetch time: same bucket as a
                        // blob we cannot read.
                        Ok(None) | Err(ForgeError::NotText { .. }) => tally.unreadable += 1,
                        Err(e) => errors.push(MineError {
                            language: language.clone(),
                            repo: Some(snapshot.name.clone()),
                            error: e.to_string(),
                        }),
                    }
                }
            }
        }
        tallies.push((language.clone(), tally));
    }

    let mut totals = Tally::default();
    for (_, tally) in &tallies {
        totals.absorb(tally);
    }
    let version_labels: Vec<String> = totals.versions.keys().cloned().collect();

    CorpusStats {
        rows: tallies
            .into_iter()
            .map(|(language, tally)| tally.into_row(&language, &version_labels))
            .collect(),
        totals: totals.into_row(TOTAL_LABEL, &version_labels),
        version_labels,
        errors,
    }
}

/// Output format for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn render_report(stats: &CorpusStats, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(stats),
        ReportFormat::Csv => render_csv(stats),
    }
}

fn fmt_pct(p: f64) -> String {
    format!("{p:.2}")
}

fn fmt_opt_pct(p: Option<f64>) -> String {
    p.map(fmt_pct).unwrap_or_default()
}

/// Human-readable report: adoption, flag coverage, and version share
/// tables, each ending in the totals row, then any per-repo errors.
pub fn render_markdown(stats: &CorpusStats) -> String {
    let mut out = String::new();
    out.push_str("# Conduct document corpus report\n\n");

    out.push_str("## Adoption\n\n");
    out.push_str(
        "| language | repos | present | % | with content | % | referencing covenant | % | unreadable | mean freshness |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for row in stats.rows.iter().chain([&stats.totals]) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            row.language,
            row.n_repos,
            row.presence_count,
            fmt_pct(row.presence_pct),
            row.content_count,
            fmt_pct(row.content_pct),
            row.referencing_count,
            fmt_opt_pct(row.r_cc_pct),
            row.unreadable_count,
            row.mean_freshness
                .map(|f| format!("{f:.2}"))
                .unwrap_or_default(),
        );
    }

    out.push_str("\n## Flag coverage over documents with content\n\n");
    out.push_str("| language |");
    for flag in FlagId::ALL {
        let _ = write!(out, " {flag} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(FlagId::ALL.len()));
    out.push('\n');
    for row in stats.rows.iter().chain([&stats.totals]) {
        let _ = write!(out, "| {} |", row.language);
        for p in &row.flag_pct {
            let _ = write!(out, " {} |", fmt_opt_pct(*p));
        }
        out.push('\n');
    }

    out.push_str("\n## Covenant version share\n\n");
    out.push_str("| language |");
    for label in &stats.version_labels {
        let _ = write!(out, " {label} |");
    }
    out.push_str(" unversioned |\n|---|");
    out.push_str(&"---|".repeat(stats.version_labels.len() + 1));
    out.push('\n');
    for row in stats.rows.iter().chain([&stats.totals]) {
        let _ = write!(out, "| {} |", row.language);
        for n in &row.version_counts {
            let _ = write!(out, " {n} |");
        }
        let _ = writeln!(out, " {} |", row.unversioned_count);
    }

    if !stats.errors.is_empty() {
        out.push_str("\n## Repositories skipped on errors\n\n");
        for e in &stats.errors {
            let _ = writeln!(
                out,
                "- {} {}: {}",
                e.language,
                e.repo.as_deref().unwrap_or("(listing)"),
                e.error
            );
        }
    }
    out
}

const CSV_FIXED_COLUMNS: [&str; 11] = [
    "language",
    "n_repos",
    "presence_count",
    "presence_pct",
    "content_count",
    "content_pct",
    "referencing_count",
    "r_cc_pct",
    "unreadable_count",
    "freshness_n",
    "mean_freshness",
];

const CSV_LAST_COLUMN: &str = "unversioned_count";

/// Machine-readable report. Percentages keep their two-decimal form, the
/// freshness mean keeps full precision, empty cells are 0/0 cases, and the
/// totals row comes last. [`parse_csv`] reverses this exactly. Errors are
/// not part of the CSV.
pub fn render_csv(stats: &CorpusStats) -> String {
    let mut out = String::new();
    out.push_str(&CSV_FIXED_COLUMNS.join(","));
    for flag in FlagId::ALL {
        let _ = write!(out, ",{flag}");
    }
    for label in &stats.version_labels {
        let _ = write!(out, ",version:{label}");
    }
    let _ = writeln!(out, ",{CSV_LAST_COLUMN}");

    for row in stats.rows.iter().chain([&stats.totals]) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.language,
            row.n_repos,
            row.presence_count,
            fmt_pct(row.presence_pct),
            row.content_count,
            fmt_pct(row.content_pct),
            row.referencing_count,
            fmt_opt_pct(row.r_cc_pct),
            row.unreadable_count,
            row.freshness_n,
            row.mean_freshness.map(|f| f.to_string()).unwrap_or_default(),
        );
        for p in &row.flag_pct {
            let _ = write!(out, ",{}", fmt_opt_pct(*p));
        }
        for n in &row.version_counts {
            let _ = write!(out, ",{n}");
        }
        let _ = writeln!(out, ",{}", row.unversioned_count);
    }
    out
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed stats csv: {0}")]
pub struct CsvError(String);

fn bad(msg: impl Into<String>) -> CsvError {
    CsvError(msg.into())
}

/// Parses [`render_csv`] output back into stats (with no errors section).
pub fn parse_csv(text: &str) -> Result<CorpusStats, CsvError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    let columns: Vec<&str> = header.split(',').collect();
    let fixed = CSV_FIXED_COLUMNS.len();
    let flags = FlagId::ALL.len();
    for (i, expected) in CSV_FIXED_COLUMNS.iter().enumerate() {
        if columns.get(i) != Some(expected) {
            return Err(bad(format!("expected column {expected:?} at position {i}")));
        }
    }
    for (i, flag) in FlagId::ALL.iter().enumerate() {
        if columns.get(fixed + i).copied() != Some(flag.to_string()).as_deref() {
            return Err(bad(format!("expected flag column {flag}")));
        }
    }
    if columns.last() != Some(&CSV_LAST_COLUMN) {
        return Err(bad(format!("last column must be {CSV_LAST_COLUMN:?}")));
    }
    let version_labels: Vec<String> = columns[fixed + flags..columns.len() - 1]
        .iter()
        .map(|c| {
            c.strip_prefix("version:")
                .map(str::to_string)
                .ok_or_else(|| bad(format!("unexpected column {c:?}")))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(bad(format!(
                "row {} has {} cells, header has {}",
                lineno + 2,
                cells.len(),
                columns.len()
            )));
        }
        let cell_err = |what: &str| bad(format!("row {}: bad {what}", lineno + 2));
        let int = |i: usize, what: &str| cells[i].parse::<u32>().map_err(|_| cell_err(what));
        let num = |i: usize, what: &str| cells[i].parse::<f64>().map_err(|_| cell_err(what));
        let opt = |i: usize, what: &str| -> Result<Option<f64>, CsvError> {
            if cells[i].is_empty() {
                Ok(None)
            } else {
                num(i, what).map(Some)
            }
        };
        rows.push(StatsRow {
            language: cells[0].to_string(),
            n_repos: int(1, "n_repos")?,
            presence_count: int(2, "presence_count")?,
            presence_pct: num(3, "presence_pct")?,
            content_count: int(4, "content_count")?,
            content_pct: num(5, "content_pct")?,
            referencing_count: int(6, "referencing_count")?,
            r_cc_pct: opt(7, "r_cc_pct")?,
            unreadable_count: int(8, "unreadable_count")?,
            freshness_n: int(9, "freshness_n")?,
            mean_freshness: opt(10, "mean_freshness")?,
            flag_pct: (fixed..fixed + flags)
                .map(|i| opt(i, "flag_pct"))
                .collect::<Result<_, _>>()?,
            version_counts: (fixed + flags..columns.len() - 1)
                .map(|i| int(i, "version_counts"))
                .collect::<Result<_, _>>()?,
            unversioned_count: int(columns.len() - 1, "unversioned_count")?,
        });
    }
    let totals = rows.pop().ok_or_else(|| bad("no totals row"))?;
    if totals.language != TOTAL_LABEL {
        return Err(bad(format!(
            "last row must be {TOTAL_LABEL:?}, got {:?}",
            totals.language
        )));
    }
    Ok(CorpusStats {
        version_labels,
        rows,
        totals,
        errors: Vec::new(),
    })
}
