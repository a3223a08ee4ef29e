use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;

use super::RepoError;

/// Raw provider reply for one GET.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub retry_after: Option<u64>,
}

impl ApiResponse {
    pub fn ok(body: impl Into<Vec<u8>>) -> Self {
        Self { status: 200, body: body.into(), retry_after: None }
    }

    pub fn status(status: u16) -> Self {
        Self { status, body: Vec::new(), retry_after: None }
    }
}

/// One GET against the provider API. `path` is the request path and query
/// relative to the API base, e.g. `/repos/acme/widget/readme`.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn get(&self, path: &str) -> Result<ApiResponse, RepoError>;
}

pub struct HttpTransport {
    client: reqwest::Client,
    base_url: String,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, RepoError> {
        let client = reqwest::Client::builder()
            .user_agent(concat!("repolens/", env!("CARGO_PKG_VERSION")))
            .timeout(timeout)
            .build()
            .map_err(|e| RepoError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: token.filter(|t| !t.is_empty()),
        })
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn get(&self, path: &str) -> Result<ApiResponse, RepoError> {
        let mut request = self
            .client
            .get(format!("{}{}", self.base_url, path))
            .header(reqwest::header::ACCEPT, "application/vnd.github+json")
            .header("X-GitHub-Api-Version", "2022-11-28");
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .await
            .map_err(|e| RepoError::Transport(e.without_url().to_string()))?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let body = response
            .bytes()
            .await
            .map_err(|e| RepoError::Transport(e.without_url().to_string()))?;
        Ok(ApiResponse { status, body: body.to_vec(), retry_after })
    }
}

/// Serves recorded API replies from disk.
///
/// A request for `/repos/acme/widget/contents/src/a.c?ref=main` reads
/// `<root>/repos/acme/widget/contents/src/a.c@ref=main.json`; requests
/// without a query drop the `@...` part. Unrecorded paths answer 404.
/// In-memory overrides take precedence over files.
pub struct FixtureTransport {
    root: PathBuf,
    overrides: HashMap<String, ApiResponse>,
    calls: AtomicUsize,
    log: Mutex<Vec<String>>,
}

impl FixtureTransport {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            overrides: HashMap::new(),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// A transport with no directory; only overrides answer.
    pub fn empty() -> Self {
        Self::new(PathBuf::new())
    }

    pub fn with_response(mut self, path: impl Into<String>, response: ApiResponse) -> Self {
        self.overrides.insert(path.into(), response);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Request paths that had no recording.
    pub fn misses(&self) -> Vec<String> {
        self.log.lock().expect("fixture log poisoned").clone()
    }

    pub fn fixture_file(root: &Path, path: &str) -> Option<PathBuf> {
        let (path, query) = match path.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (path, None),
        };
        let mut file = root.to_path_buf();
        let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        if segments.iter().any(|s| s.is_empty() || *s == "." || *s == "..") {
            return None;
        }
        let (last, dirs) = segments.split_last()?;
        for dir in dirs {
            file.push(dir);
        }
        let name = match query {
            Some(q) => format!("{last}@{}.json", q.replace('/', "%2F")),
            None => format!("{last}.json"),
        };
        file.push(name);
        Some(file)
    }
}

#[async_trait]
impl Transport for FixtureTransport {
    async fn get(&self, path: &str) -> Result<ApiResponse, RepoError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(response) = self.overrides.get(path) {
            return Ok(response.clone());
        }
        let found = Self::fixture_file(&self.root, path).and_then(|file| std::fs::read(file).ok());
        match found {
            Some(body) => Ok(ApiResponse::ok(body)),
            None => {
                self.log.lock().expect("fixture log poisoned").push(path.to_string());
                Ok(ApiResponse::status(404))
            }
        }
    }
}
