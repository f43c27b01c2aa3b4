use std::time::Duration;

use base64::Engine;
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MineError, RateLimiter, Transport};

const XSSI_PREFIX: &str = ")]}'";
const GERRIT_TS_FMT: &str = "%Y-%m-%d %H:%M:%S%.f";

/// Remove the anti-XSSI line Gerrit puts in front of JSON bodies.
pub fn strip_xssi(body: &str) -> &str {
    match body.strip_prefix(XSSI_PREFIX) {
        Some(rest) => rest.trim_start_matches(['\r', '\n']),
        None => body,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionSummary {
    pub id: String,
    pub number: u32,
    pub created: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSummary {
    /// Identifier used in request paths (`project~number` or the triplet).
    pub id: String,
    pub project: String,
    pub change_id: String,
    pub number: u64,
    pub updated: i64,
    pub revisions: Vec<RevisionSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangePage {
    pub changes: Vec<ChangeSummary>,
    pub next_offset: usize,
    pub more: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InlineComment {
    pub file_path: String,
    pub line: usize,
    pub message: String,
    pub author: String,
    pub timestamp: i64,
}

pub struct GerritClient<T> {
    transport: T,
    limiter: RateLimiter,
    max_retries: u32,
}

fn encode_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

/// Change ids arrive from the server already percent-encoded
/// (`project~number` with the project escaped); existing escapes are kept.
fn encode_id(s: &str) -> String {
    s.split('%').map(encode_component).collect::<Vec<_>>().join("%")
}

pub(crate) fn parse_timestamp(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s, GERRIT_TS_FMT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

struct Ctx<'a> {
    path: &'a str,
}

impl Ctx<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> MineError {
        MineError::Parse {
            path: self.path.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn str_field<'v>(&self, v: &'v Value, field: &str) -> Result<&'v str, MineError> {
        v.get(field)
            .and_then(Value::as_str)
            .ok_or_else(|| self.err(field, "missing or not a string"))
    }

    fn u64_field(&self, v: &Value, field: &str) -> Result<u64, MineError> {
        v.get(field)
            .and_then(Value::as_u64)
            .ok_or_else(|| self.err(field, "missing or not an unsigned integer"))
    }

    fn ts_field(&self, v: &Value, field: &str) -> Result<i64, MineError> {
        let s = self.str_field(v, field)?;
        parse_timestamp(s).ok_or_else(|| self.err(field, format!("bad timestamp {s:?}")))
    }

    fn json(&self, body: &str) -> Result<Value, MineError> {
        serde_json::from_str(strip_xssi(body)).map_err(|e| self.err("<body>", e.to_string()))
    }
}

impl<T: Transport> GerritClient<T> {
    pub fn new(transport: T, limiter: RateLimiter) -> Self {
        GerritClient {
            transport,
            limiter,
            max_retries: 3,
        }
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn get(&self, path: &str) -> Result<String, MineError> {
        let mut attempt = 0;
        loop {
            self.limiter.acquire();
            match self.transport.get(path) {
                Err(MineError::Retryable { retry_after_ms, .. }) if attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(retry_after_ms << (attempt - 1)));
                }
                other => return other,
            }
        }
    }

    pub fn fetch_change_page(
        &self,
        query: &str,
        offset: usize,
        limit: usize,
    ) -> Result<ChangePage, MineError> {
        if limit == 0 {
            return Err(MineError::InvalidRequest("limit must be at least 1".into()));
        }
        let path = format!(
            "/changes/?q={}&o=ALL_REVISIONS&S={offset}&n={limit}",
            encode_component(query)
        );
        let body = self.get(&path)?;
        let ctx = Ctx { path: &path };
        let json = ctx.json(&body)?;
        let items = json.as_array().ok_or_else(|| ctx.err("<body>", "expected a JSON array"))?;
        let mut changes = Vec::with_capacity(items.len());
        let mut more = false;
        for item in items {
            changes.push(parse_change(&ctx, item)?);
            more = item.get("_more_changes").and_then(Value::as_bool).unwrap_or(false);
        }
        Ok(ChangePage {
            next_offset: offset + changes.len(),
            changes,
            more,
        })
    }

    /// Line-anchored top-level comments on one revision. File-level comments
    /// and replies within a thread are dropped.
    pub fn fetch_inline_comments(
        &self,
        change_id: &str,
        revision_id: &str,
    ) -> Result<Vec<InlineComment>, MineError> {
        let path = format!(
            "/changes/{}/revisions/{}/comments",
            encode_id(change_id),
            encode_component(revision_id)
        );
        let body = self.get(&path)?;
        let ctx = Ctx { path: &path };
        let json = ctx.json(&body)?;
        let files = json.as_object().ok_or_else(|| ctx.err("<body>", "expected a JSON object"))?;
        let mut out = Vec::new();
        for (file_path, list) in files {
            let list = list.as_array().ok_or_else(|| ctx.err(file_path, "expected an array"))?;
            for c in list {
                if c.get("in_reply_to").is_some_and(|v| !v.is_null()) {
                    continue;
                }
                let Some(line) = c.get("line").and_then(Value::as_u64) else {
                    continue;
                };
                if line == 0 {
                    continue;
                }
                let author = c
                    .get("author")
                    .and_then(|a| {
                        a.get("username")
                            .or_else(|| a.get("email"))
                            .or_else(|| a.get("name"))
                    })
                    .and_then(Value::as_str)
                    .unwrap_or("")
                    .to_string();
                out.push(InlineComment {
                    file_path: file_path.clone(),
                    line: line as usize,
                    message: ctx.str_field(c, "message")?.to_string(),
                    author,
                    timestamp: ctx.ts_field(c, "updated")?,
                });
            }
        }
        Ok(out)
    }

    /// File text at a revision, or `None` when the file does not exist there.
    pub fn fetch_file_content(
        &self,
        change_id: &str,
        revision_id: &str,
        file_path: &str,
    ) -> Result<Option<String>, MineError> {
        let path = format!(
            "/changes/{}/revisions/{}/files/{}/content",
            encode_id(change_id),
            encode_component(revision_id),
            encode_component(file_path)
        );
        let body = match self.get(&path) {
            Ok(b) => b,
            Err(MineError::NotFound(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let ctx = Ctx { path: &path };
        let compact: String = body.chars().filter(|c| !c.is_whitespace()).collect();
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(compact)
            .map_err(|e| ctx.err("content", e.to_string()))?;
        String::from_utf8(bytes)
            .map(Some)
            .map_err(|e| ctx.err("content", e.to_string()))
    }
}

fn parse_change(ctx: &Ctx<'_>, v: &Value) -> Result<ChangeSummary, MineError> {
    let revs = v
        .get("revisions")
        .and_then(Value::as_object)
        .ok_or_else(|| ctx.err("revisions", "missing or not an object"))?;
    let mut revisions = Vec::with_capacity(revs.len());
    for (id, r) in revs {
        revisions.push(RevisionSummary {
            id: id.clone(),
            number: ctx.u64_field(r, "_number")? as u32,
            created: ctx.ts_field(r, "created")?,
        });
    }
    revisions.sort_by_key(|r| r.number);
    Ok(ChangeSummary {
        id: ctx.str_field(v, "id")?.to_string(),
        project: ctx.str_field(v, "project")?.to_string(),
        change_id: ctx.str_field(v, "change_id")?.to_string(),
        number: ctx.u64_field(v, "_number")?,
        updated: ctx.ts_field(v, "updated")?,
        revisions,
    })
}
