//! Clean review triples: noise filtering, deduplication and the
//! chronological per-project train/test split.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::miner::RawReviewEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaxonomyLabel {
    BugFix,
    Refactoring,
    Stylistic,
    NonCode,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewTriple {
    pub id: String,
    pub project: String,
    pub change_id: String,
    pub file_path: String,
    pub code_before: String,
    pub code_after: String,
    pub review_comment: String,
    pub review_line: usize,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy_label: Option<TaxonomyLabel>,
}

impl ReviewTriple {
    pub fn new(
        project: &str,
        change_id: &str,
        file_path: &str,
        code_before: &str,
        code_after: &str,
        review_comment: &str,
        review_line: usize,
        timestamp: i64,
    ) -> Self {
        let mut h = Sha256::new();
        for part in [project, change_id, file_path, review_comment, code_before, code_after] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        h.update(review_line.to_le_bytes());
        h.update(timestamp.to_le_bytes());
        ReviewTriple {
            id: hex::encode(&h.finalize()[..8]),
            project: project.to_string(),
            change_id: change_id.to_string(),
            file_path: file_path.to_string(),
            code_before: code_before.to_string(),
            code_after: code_after.to_string(),
            review_comment: review_comment.to_string(),
            review_line,
            timestamp,
            taxonomy_label: None,
        }
    }
}

/// Comments that carry no information about the change they sit on.
pub const IRRELEVANT_COMMENTS: &[&str] = &[
    "same as above",
    "same as the above",
    "same here",
    "see comment above",
    "same question here",
    "perhaps this as well",
    "as discussed",
    "new comment as above",
    "same",
    "see above",
    "similar to above",
    "same concern as above",
    "same comment as above",
    "and here",
    "here too",
    "same comments as above",
    "same thing",
    "same complaint here",
    "same as below",
    "nit",
    "ditto",
    "thanks",
    "fixed with the next upload",
    "uh no",
    "nice",
    "nice thanks",
    "love it",
    "ok, fixed with next update",
    "yes, you are right",
    "done",
    "likewise",
    "i see",
    "and again",
];

fn normalize_comment(comment: &str) -> String {
    comment
        .trim()
        .to_lowercase()
        .trim_end_matches(|c: char| matches!(c, '.' | '!' | '?' | ',') || c.is_whitespace())
        .to_string()
}

/// `true` when the comment should be kept.
pub fn filter_noise(comment: &str) -> bool {
    let norm = normalize_comment(comment);
    !IRRELEVANT_COMMENTS.contains(&norm.as_str())
}

/// Keep the earliest (by timestamp, then input order) of each identical
/// `(code_before, review_comment, code_after)` tuple. Survivors keep their
/// input order.
pub fn dedup(triples: Vec<ReviewTriple>) -> Vec<ReviewTriple> {
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.sort_by_key(|&i| (triples[i].timestamp, i));
    let mut seen = HashSet::new();
    let mut keep = vec![false; triples.len()];
    for i in order {
        let t = &triples[i];
        if seen.insert((&t.code_before, &t.review_comment, &t.code_after)) {
            keep[i] = true;
        }
    }
    triples
        .into_iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then_some(t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub per_project_counts: BTreeMap<String, ProjectCounts>,
}

impl SplitManifest {
    pub fn is_test(&self, id: &str) -> bool {
        self.test.iter().any(|t| t == id)
    }
}

/// Number of test items for a project of `n` triples.
pub fn test_count(n: usize, test_fraction: f64) -> usize {
    // The epsilon absorbs representation error in products like 0.05 * 60.
    ((n as f64 * test_fraction) - 1e-9).ceil().max(0.0) as usize
}

/// Per project, the most recent `ceil(fraction * n)` triples go to test.
/// Ties on timestamp are ordered by change id, then triple id, so the
/// result does not depend on input order.
pub fn chronological_split(triples: &[ReviewTriple], test_fraction: f64) -> SplitManifest {
    let mut by_project: BTreeMap<&str, Vec<&ReviewTriple>> = BTreeMap::new();
    for t in triples {
        by_project.entry(&t.project).or_default().push(t);
    }
    let mut manifest = SplitManifest {
        train: Vec::new(),
        test: Vec::new(),
        per_project_counts: BTreeMap::new(),
    };
    for (project, mut ts) in by_project {
        ts.sort_by(|a, b| {
            b.timestamp
                .cmp(&a.timestamp)
                .then_with(|| a.change_id.cmp(&b.change_id))
                .then_with(|| a.id.cmp(&b.id))
        });
        let n_test = test_count(ts.len(), test_fraction).min(ts.len());
        let (test, train) = ts.split_at(n_test);
        manifest.test.extend(test.iter().map(|t| t.id.clone()));
        manifest.train.extend(train.iter().rev().map(|t| t.id.clone()));
        manifest.per_project_counts.insert(
            project.to_string(),
            ProjectCounts {
                train: train.len(),
                test: test.len(),
            },
        );
    }
    manifest
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub events: usize,
    pub no_change: usize,
    pub empty_comment: usize,
    pub noise: usize,
    pub duplicates: usize,
    pub triples: usize,
}

/// Turn raw events into deduplicated triples, dropping events that did not
/// change the file and comments on the irrelevant-comment list.
pub fn triples_from_events(events: &[RawReviewEvent]) -> (Vec<ReviewTriple>, ExtractReport) {
    let mut report = ExtractReport {
        events: events.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for e in events {
        if e.no_change || e.file_before == e.file_after {
            report.no_change += 1;
            continue;
        }
        if e.comment_text.trim().is_empty() {
            report.empty_comment += 1;
            continue;
        }
        if !filter_noise(&e.comment_text) {
            report.noise += 1;
            continue;
        }
        out.push(ReviewTriple::new(
            &e.project,
            &e.change_id,
            &e.file_path,
            &e.file_before,
            &e.file_after,
            &e.comment_text,
            e.comment_line,
            e.timestamp,
        ));
    }
    let before = out.len();
    let out = dedup(out);
    report.duplicates = before - out.len();
    report.triples = out.len();
    (out, report)
}
