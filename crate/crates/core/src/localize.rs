//! Line diffs between the reviewed and revised file, pairing of a review
//! line with its nearest change, and the focus/target extraction rules for
//! inserts, deletes and updates.
//!
//! Lines keep their terminators (`"foo\n"`), so splitting and rejoining is
//! lossless and a missing final newline is an ordinary line difference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize::Marker;

/// Maximum distance, in lines of the reviewed file, between the review line
/// and the anchor of the change it is paired with.
pub const WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HunkKind {
    Insert,
    Delete,
    Update,
}

/// A contiguous change. Spans are `(start, len)` with 1-based starts; an
/// empty span (len 0) starts at the line *preceding* the gap, 0 at the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiffHunk {
    pub kind: HunkKind,
    pub before_start: usize,
    pub before_len: usize,
    pub after_start: usize,
    pub after_len: usize,
}

impl LineDiffHunk {
    /// The line of the reviewed file used to measure distance to a comment.
    pub fn anchor(&self) -> usize {
        self.before_start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Insert,
    /// Insertion before the first line; the focus is a synthetic empty
    /// anchor (`focus_len == 0`) at line 1.
    InsertAtHead,
    Delete,
    Update,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRegion {
    pub kind: EditKind,
    pub focus_start: usize,
    pub focus_len: usize,
    pub target_lines: Vec<String>,
}

impl EditRegion {
    pub fn is_delete_target(&self) -> bool {
        is_delete_target(&self.target_lines)
    }

    /// Target text as it should appear in the revised file.
    pub fn target_text(&self) -> String {
        self.target_lines.concat()
    }
}

/// One localized review comment, as written by the localize stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizedSample {
    pub triple_id: String,
    pub kind: EditKind,
    pub focus_start: usize,
    pub focus_len: usize,
    pub target_lines: Vec<String>,
    pub distance: usize,
}

impl LocalizedSample {
    pub fn region(&self) -> EditRegion {
        EditRegion {
            kind: self.kind,
            focus_start: self.focus_start,
            focus_len: self.focus_len,
            target_lines: self.target_lines.clone(),
        }
    }
}

pub fn is_delete_target<S: AsRef<str>>(lines: &[S]) -> bool {
    lines.len() == 1 && lines[0].as_ref() == Marker::Del.surface()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LocalizeError {
    #[error("focus span {start}+{len} is outside a file of {lines} lines")]
    FocusOutOfBounds {
        start: usize,
        len: usize,
        lines: usize,
    },
    #[error("hunk does not match the supplied files")]
    HunkMismatch,
}

/// Split into lines, each keeping its `\n` terminator.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Equal,
    Delete,
    Insert,
}

/// Myers' O(ND) shortest edit script.
fn myers<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Op> {
    let n = a.len() as isize;
    let m = b.len() as isize;
    let max = (n + m) as usize;
    let offset = max as isize + 1;
    let mut v = vec![0isize; 2 * max + 3];
    // trace[d] holds v[-d..=d] as it was before round d.
    let mut trace: Vec<Vec<isize>> = Vec::new();

    'outer: for d in 0..=max as isize {
        trace.push(v[(offset - d) as usize..=(offset + d) as usize].to_vec());
        let mut k = -d;
        while k <= d {
            let idx = (k + offset) as usize;
            let mut x = if k == -d || (k != d && v[idx - 1] < v[idx + 1]) {
                v[idx + 1]
            } else {
                v[idx - 1] + 1
            };
            let mut y = x - k;
            while x < n && y < m && a[x as usize] == b[y as usize] {
                x += 1;
                y += 1;
            }
            v[idx] = x;
            if x >= n && y >= m {
                break 'outer;
            }
            k += 2;
        }
    }

    let mut ops = Vec::with_capacity(max);
    let (mut x, mut y) = (n, m);
    for (d, v) in trace.iter().enumerate().rev() {
        let d = d as isize;
        let at = |k: isize| v[(k + d) as usize];
        let k = x - y;
        let prev_k = if k == -d || (k != d && at(k - 1) < at(k + 1)) {
            k + 1
        } else {
            k - 1
        };
        let prev_x = if d == 0 { 0 } else { at(prev_k) };
        let prev_y = prev_x - prev_k;
        while x > prev_x && y > prev_y {
            ops.push(Op::Equal);
            x -= 1;
            y -= 1;
        }
        if d > 0 {
            ops.push(if x == prev_x { Op::Insert } else { Op::Delete });
        }
        x = prev_x;
        y = prev_y;
    }
    ops.reverse();
    ops
}

pub fn line_diff(before: &str, after: &str) -> Vec<LineDiffHunk> {
    let a = split_lines(before);
    let b = split_lines(after);
    hunks_from_ops(&myers(&a, &b))
}

fn hunks_from_ops(ops: &[Op]) -> Vec<LineDiffHunk> {
    let mut hunks = Vec::new();
    let (mut ai, mut bi) = (0usize, 0usize);
    let mut i = 0;
    while i < ops.len() {
        if ops[i] == Op::Equal {
            ai += 1;
            bi += 1;
            i += 1;
            continue;
        }
        let (a0, b0) = (ai, bi);
        while i < ops.len() && ops[i] != Op::Equal {
            match ops[i] {
                Op::Delete => ai += 1,
                Op::Insert => bi += 1,
                Op::Equal => unreachable!(),
            }
            i += 1;
        }
        let (dl, il) = (ai - a0, bi - b0);
        let kind = match (dl, il) {
            (0, _) => HunkKind::Insert,
            (_, 0) => HunkKind::Delete,
            _ => HunkKind::Update,
        };
        hunks.push(LineDiffHunk {
            kind,
            before_start: if dl == 0 { a0 } else { a0 + 1 },
            before_len: dl,
            after_start: if il == 0 { b0 } else { b0 + 1 },
            after_len: il,
        });
    }
    hunks
}

/// Apply every hunk of a diff to `before`, producing the revised text.
pub fn apply_hunks(before: &str, after: &str, hunks: &[LineDiffHunk]) -> String {
    let a = split_lines(before);
    let b = split_lines(after);
    let mut out = String::with_capacity(after.len());
    let mut ai = 0;
    for h in hunks {
        let del_from = if h.before_len == 0 { h.before_start } else { h.before_start - 1 };
        for line in &a[ai..del_from] {
            out.push_str(line);
        }
        let ins_from = if h.after_len == 0 { h.after_start } else { h.after_start - 1 };
        for line in &b[ins_from..ins_from + h.after_len] {
            out.push_str(line);
        }
        ai = del_from + h.before_len;
    }
    for line in &a[ai..] {
        out.push_str(line);
    }
    out
}

/// The hunk nearest to `review_line` and its distance, or `None` when the
/// nearest change is more than [`WINDOW`] lines away. Ties prefer the hunk
/// at or after the review line.
pub fn select_relevant_hunk(
    hunks: &[LineDiffHunk],
    review_line: usize,
) -> Option<(LineDiffHunk, usize)> {
    nearest_hunk(hunks, review_line).filter(|(_, d)| *d <= WINDOW)
}

/// Nearest hunk regardless of the window, for distance statistics.
pub fn nearest_hunk(hunks: &[LineDiffHunk], review_line: usize) -> Option<(LineDiffHunk, usize)> {
    hunks
        .iter()
        .map(|h| (*h, h.anchor().abs_diff(review_line)))
        .min_by_key(|(h, d)| (*d, h.anchor() < review_line))
}

/// Histogram of signed distances `anchor - review_line` to the nearest
/// change, one entry per sample.
pub fn distance_histogram(signed: impl IntoIterator<Item = i64>) -> BTreeMap<i64, usize> {
    let mut hist = BTreeMap::new();
    for d in signed {
        *hist.entry(d).or_insert(0) += 1;
    }
    hist
}

pub fn extract_edit_region(
    hunk: &LineDiffHunk,
    before: &str,
    after: &str,
) -> Result<EditRegion, LocalizeError> {
    let a = split_lines(before);
    let b = split_lines(after);
    let after_lines = |h: &LineDiffHunk| -> Result<Vec<String>, LocalizeError> {
        let from = h.after_start.checked_sub(1).ok_or(LocalizeError::HunkMismatch)?;
        b.get(from..from + h.after_len)
            .map(|s| s.iter().map(|l| l.to_string()).collect())
            .ok_or(LocalizeError::HunkMismatch)
    };
    if hunk.before_start + hunk.before_len.saturating_sub(1) > a.len() {
        return Err(LocalizeError::HunkMismatch);
    }
    match hunk.kind {
        HunkKind::Update => Ok(EditRegion {
            kind: EditKind::Update,
            focus_start: hunk.before_start,
            focus_len: hunk.before_len,
            target_lines: after_lines(hunk)?,
        }),
        HunkKind::Delete => Ok(EditRegion {
            kind: EditKind::Delete,
            focus_start: hunk.before_start,
            focus_len: hunk.before_len,
            target_lines: vec![Marker::Del.surface().to_string()],
        }),
        HunkKind::Insert if hunk.before_start == 0 => Ok(EditRegion {
            kind: EditKind::InsertAtHead,
            focus_start: 1,
            focus_len: 0,
            target_lines: after_lines(hunk)?,
        }),
        HunkKind::Insert => {
            let anchor = a[hunk.before_start - 1].to_string();
            let mut target = vec![anchor];
            target.extend(after_lines(hunk)?);
            Ok(EditRegion {
                kind: EditKind::Insert,
                focus_start: hunk.before_start,
                focus_len: 1,
                target_lines: target,
            })
        }
    }
}

/// Replace the focus lines of `before` with the region's target lines. A
/// lone `<|del|>` target removes the focus.
pub fn apply_edit(before: &str, region: &EditRegion) -> Result<String, LocalizeError> {
    let lines = split_lines(before);
    let (start, len) = (region.focus_start, region.focus_len);
    if start == 0 || start - 1 + len > lines.len() || (len == 0 && start - 1 > lines.len()) {
        return Err(LocalizeError::FocusOutOfBounds {
            start,
            len,
            lines: lines.len(),
        });
    }
    let mut out = String::with_capacity(before.len());
    for l in &lines[..start - 1] {
        out.push_str(l);
    }
    if !region.is_delete_target() {
        for l in &region.target_lines {
            out.push_str(l);
        }
    }
    for l in &lines[start - 1 + len..] {
        out.push_str(l);
    }
    Ok(out)
}

/// Lines of `before` covered by a focus span.
pub fn focus_lines<'a>(before: &'a str, region: &EditRegion) -> Vec<&'a str> {
    let lines = split_lines(before);
    let from = region.focus_start.saturating_sub(1).min(lines.len());
    let to = (from + region.focus_len).min(lines.len());
    lines[from..to].to_vec()
}
