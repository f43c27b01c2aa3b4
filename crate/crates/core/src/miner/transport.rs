use std::fs;
use std::path::{Path, PathBuf};

use super::MineError;

/// Raw GET access to a Gerrit-compatible server. `path` includes the leading
/// slash and any query string, e.g. `/changes/?q=status:merged&o=ALL_REVISIONS`.
pub trait Transport: Sync {
    fn get(&self, path: &str) -> Result<String, MineError>;
}

/// Recorded responses laid out by request path: `/a/b/c?q` is stored at
/// `<root>/a/b/c@q`, and a path ending in `/` uses the file name `_index`.
/// Path segments are used verbatim (still percent-encoded).
///
/// A change query recorded without its `S=`/`n=` paging parameters serves
/// any page of that query, emulating server-side paging.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    root: PathBuf,
}

impl FixtureTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureTransport { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File that stores the response for a request path.
    pub fn key_path(&self, request: &str) -> PathBuf {
        let (path, query) = match request.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (request, None),
        };
        let mut segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        let last = segments.pop().unwrap_or("");
        let mut file = if last.is_empty() { "_index".to_string() } else { last.to_string() };
        if let Some(q) = query {
            file.push('@');
            file.push_str(q);
        }
        let mut out = self.root.clone();
        for s in segments {
            out.push(if s == ".." || s == "." { "_" } else { s });
        }
        out.push(file);
        out
    }

    /// Store a response under its request path.
    pub fn record(&self, request: &str, body: &str) -> std::io::Result<()> {
        let p = self.key_path(request);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(p, body)
    }

    fn read(&self, request: &str) -> Option<String> {
        fs::read_to_string(self.key_path(request)).ok()
    }

    fn emulate_paging(&self, request: &str) -> Result<Option<String>, MineError> {
        let Some((path, query)) = request.split_once('?') else {
            return Ok(None);
        };
        let mut start = 0usize;
        let mut limit = None;
        let mut rest = Vec::new();
        for kv in query.split('&') {
            if let Some(v) = kv.strip_prefix("S=") {
                start = v.parse().map_err(|_| MineError::InvalidRequest(request.into()))?;
            } else if let Some(v) = kv.strip_prefix("n=") {
                limit = Some(v.parse().map_err(|_| MineError::InvalidRequest(request.into()))?);
            } else {
                rest.push(kv);
            }
        }
        let full = format!("{path}?{}", rest.join("&"));
        let Some(body) = self.read(&full) else {
            return Ok(None);
        };
        let parse_err = |m: String| MineError::Parse {
            path: request.to_string(),
            field: "changes".into(),
            message: m,
        };
        let json = super::client::strip_xssi(&body);
        let mut all: Vec<serde_json::Value> =
            serde_json::from_str(json).map_err(|e| parse_err(e.to_string()))?;
        for c in &mut all {
            if let Some(o) = c.as_object_mut() {
                o.remove("_more_changes");
            }
        }
        let end = limit.map_or(all.len(), |l: usize| (start + l).min(all.len()));
        let start = start.min(all.len());
        let mut page: Vec<serde_json::Value> = all[start..end].to_vec();
        if end < all.len() {
            if let Some(o) = page.last_mut().and_then(|v| v.as_object_mut()) {
                o.insert("_more_changes".into(), serde_json::Value::Bool(true));
            }
        }
        let body = serde_json::to_string(&page).map_err(|e| parse_err(e.to_string()))?;
        Ok(Some(format!(")]}}'\n{body}")))
    }
}

impl Transport for FixtureTransport {
    fn get(&self, path: &str) -> Result<String, MineError> {
        if let Some(body) = self.read(path) {
            return Ok(body);
        }
        if path.starts_with("/changes/?") {
            if let Some(body) = self.emulate_paging(path)? {
                return Ok(body);
            }
        }
        Err(MineError::NotFound(path.to_string()))
    }
}

#[cfg(feature = "http")]
pub use http::HttpTransport;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{MineError, Transport};

    /// Live access over HTTPS with an optional static bearer token.
    pub struct HttpTransport {
        base_url: String,
        token: Option<String>,
        client: reqwest::blocking::Client,
    }

    impl HttpTransport {
        pub fn new(base_url: &str, token: Option<String>) -> Result<Self, MineError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .user_agent(concat!(env!("CARGO_PKG_NAME"), "/", env!("CARGO_PKG_VERSION")))
                .build()
                .map_err(|e| MineError::InvalidRequest(e.to_string()))?;
            Ok(HttpTransport {
                base_url: base_url.trim_end_matches('/').to_string(),
                token,
                client,
            })
        }
    }

    const DEFAULT_BACKOFF_MS: u64 = 1000;

    impl Transport for HttpTransport {
        fn get(&self, path: &str) -> Result<String, MineError> {
            let mut req = self.client.get(format!("{}{}", self.base_url, path));
            if let Some(t) = &self.token {
                req = req.bearer_auth(t);
            }
            let resp = req.send().map_err(|e| MineError::Retryable {
                path: path.to_string(),
                message: e.to_string(),
                retry_after_ms: DEFAULT_BACKOFF_MS,
            })?;
            let status = resp.status();
            if status.as_u16() == 404 {
                return Err(MineError::NotFound(path.to_string()));
            }
            if status.as_u16() == 429 || status.is_server_error() {
                let retry_after_ms = resp
                    .headers()
                    .get(reqwest::header::RETRY_AFTER)
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.parse::<u64>().ok())
                    .map_or(DEFAULT_BACKOFF_MS, |s| s * 1000);
                return Err(MineError::Retryable {
                    path: path.to_string(),
                    message: format!("HTTP {status}"),
                    retry_after_ms,
                });
            }
            if !status.is_success() {
                return Err(MineError::InvalidRequest(format!("{path}: HTTP {status}")));
            }
            resp.text().map_err(|e| MineError::Retryable {
                path: path.to_string(),
                message: e.to_string(),
                retry_after_ms: DEFAULT_BACKOFF_MS,
            })
        }
    }
}
