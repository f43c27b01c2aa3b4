//! Mining changes, inline review comments and file revisions from a Gerrit
//! server or a directory of recorded responses.

mod client;
mod ratelimit;
mod transport;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{ChangePage, ChangeSummary, GerritClient, InlineComment, RevisionSummary};
pub use ratelimit::RateLimiter;
#[cfg(feature = "http")]
pub use transport::HttpTransport;
pub use transport::{FixtureTransport, Transport};

/// Which patchset pair an event compares.
pub const PAIRING_RULE: &str = "commented-patchset/next-patchset-touching-file";

#[derive(Debug, Error)]
pub enum MineError {
    #[error("transport failure for {path}: {message} (retry after {retry_after_ms} ms)")]
    Retryable {
        path: String,
        message: String,
        retry_after_ms: u64,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("malformed response for {path}: field `{field}`: {message}")]
    Parse {
        path: String,
        field: String,
        message: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl MineError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, MineError::Retryable { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReviewEvent {
    pub project: String,
    pub change_id: String,
    pub file_path: String,
    pub comment_text: String,
    pub comment_line: usize,
    pub patchset_before: u32,
    pub patchset_after: u32,
    pub file_before: String,
    pub file_after: String,
    pub timestamp: i64,
    /// The file did not change between the paired patchsets.
    #[serde(default)]
    pub no_change: bool,
    pub pairing: String,
}

/// Everything fetched for a set of changes, keyed for lookup during
/// assembly. A `None` file entry records a revision where the file is absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinedData {
    pub changes: Vec<ChangeSummary>,
    pub comments: BTreeMap<(String, String), Vec<InlineComment>>,
    pub files: BTreeMap<(String, String, String), Option<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub non_java: usize,
    pub missing_revision: usize,
    pub no_later_patchset: usize,
    pub line_out_of_range: usize,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.missing_revision + self.no_later_patchset + self.line_out_of_range
    }
}

pub fn is_java(path: &str) -> bool {
    path.ends_with(".java")
}

/// Pair every inline comment on a `.java` file with the first later
/// patchset whose copy of the file differs. If no later patchset changes the
/// file the event is emitted with `no_change` set. Comments whose file is
/// missing in the commented or the next patchset are skipped and counted.
pub fn assemble_raw_events(data: &MinedData) -> (Vec<RawReviewEvent>, SkipReport) {
    let mut events = Vec::new();
    let mut skips = SkipReport::default();
    for change in &data.changes {
        let mut revisions: Vec<&RevisionSummary> = change.revisions.iter().collect();
        revisions.sort_by_key(|r| r.number);
        for (ri, rev) in revisions.iter().enumerate() {
            let Some(comments) = data.comments.get(&(change.id.clone(), rev.id.clone())) else {
                continue;
            };
            for c in comments {
                if !is_java(&c.file_path) {
                    skips.non_java += 1;
                    continue;
                }
                let lookup = |r: &RevisionSummary| {
                    data.files
                        .get(&(change.id.clone(), r.id.clone(), c.file_path.clone()))
                        .cloned()
                        .flatten()
                };
                let Some(before) = lookup(rev) else {
                    skips.missing_revision += 1;
                    continue;
                };
                if c.line == 0 || c.line > crate::localize::split_lines(&before).len() {
                    skips.line_out_of_range += 1;
                    continue;
                }
                let later = &revisions[ri + 1..];
                if later.is_empty() {
                    skips.no_later_patchset += 1;
                    continue;
                }
                let mut paired = None;
                let mut first_present = None;
                for r in later {
                    match lookup(r) {
                        None => break,
                        Some(text) => {
                            if first_present.is_none() {
                                first_present = Some((r.number, text.clone()));
                            }
                            if text != before {
                                paired = Some((r.number, text, false));
                                break;
                            }
                        }
                    }
                }
                let paired = paired.or_else(|| first_present.map(|(n, t)| (n, t, true)));
                let Some((after_number, after, no_change)) = paired else {
                    skips.missing_revision += 1;
                    continue;
                };
                events.push(RawReviewEvent {
                    project: change.project.clone(),
                    change_id: change.change_id.clone(),
                    file_path: c.file_path.clone(),
                    comment_text: c.message.clone(),
                    comment_line: c.line,
                    patchset_before: rev.number,
                    patchset_after: after_number,
                    file_before: before,
                    file_after: after,
                    timestamp: c.timestamp,
                    no_change,
                    pairing: PAIRING_RULE.to_string(),
                });
            }
        }
    }
    (events, skips)
}

/// Fetch every page of changes for `query`, then their inline comments and
/// the `.java` files those comments touch in the commented and all later
/// patchsets. Changes are processed in parallel; the result does not depend
/// on scheduling.
pub fn mine<T: Transport>(
    client: &GerritClient<T>,
    query: &str,
    page_size: usize,
    max_changes: Option<usize>,
) -> Result<MinedData, MineError> {
    use rayon::prelude::*;

    let mut changes = Vec::new();
    let mut offset = 0;
    loop {
        let page = client.fetch_change_page(query, offset, page_size)?;
        let n = page.changes.len();
        changes.extend(page.changes);
        offset = page.next_offset;
        if !page.more || n == 0 || max_changes.is_some_and(|m| changes.len() >= m) {
            break;
        }
    }
    if let Some(m) = max_changes {
        changes.truncate(m);
    }

    type PerChange = (
        Vec<((String, String), Vec<InlineComment>)>,
        Vec<((String, String, String), Option<String>)>,
    );
    let per_change: Vec<PerChange> = changes
        .par_iter()
        .map(|change| -> Result<PerChange, MineError> {
            let mut comments = Vec::new();
            let mut files = Vec::new();
            let mut revisions: Vec<&RevisionSummary> = change.revisions.iter().collect();
            revisions.sort_by_key(|r| r.number);
            for (ri, rev) in revisions.iter().enumerate() {
                let cs = client.fetch_inline_comments(&change.id, &rev.id)?;
                let mut paths: Vec<&str> =
                    cs.iter().map(|c| c.file_path.as_str()).filter(|p| is_java(p)).collect();
                paths.sort_unstable();
                paths.dedup();
                for path in paths {
                    for r in &revisions[ri..] {
                        let key = (change.id.clone(), r.id.clone(), path.to_string());
                        if files.iter().any(|(k, _)| *k == key) {
                            continue;
                        }
                        let content = client.fetch_file_content(&change.id, &r.id, path)?;
                        files.push((key, content));
                    }
                }
                comments.push(((change.id.clone(), rev.id.clone()), cs));
            }
            Ok((comments, files))
        })
        .collect::<Result<_, _>>()?;

    let mut data = MinedData {
        changes,
        ..Default::default()
    };
    for (comments, files) in per_change {
        data.comments.extend(comments);
        data.files.extend(files);
    }
    Ok(data)
}
