use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine;
use chrono::Utc;
use dashmap::DashMap;
use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::Deserialize;
use tokio::sync::Mutex;

use super::transport::{ApiResponse, Transport};
use super::{CodeFile, RepoContext, RepoError, RepoRef, FILE_TREE_MAX, MAX_FILE_BYTES, README_EXCERPT_MAX};

/// Characters escaped inside a single path segment or query value.
const SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b'?')
    .add(b'&')
    .add(b'=')
    .add(b'+')
    .add(b'<')
    .add(b'>')
    .add(b'`')
    .add(b'{')
    .add(b'}');

#[derive(Debug, Clone)]
pub struct RepoConfig {
    pub api_base_url: String,
    pub token: Option<String>,
    pub cache_ttl: Duration,
    pub readme_excerpt_max: usize,
    pub file_tree_max: usize,
    pub max_file_bytes: usize,
}

impl Default for RepoConfig {
    fn default() -> Self {
        Self {
            api_base_url: "https://api.github.com".to_string(),
            token: None,
            cache_ttl: Duration::from_secs(10 * 60),
            readme_excerpt_max: README_EXCERPT_MAX,
            file_tree_max: FILE_TREE_MAX,
            max_file_bytes: MAX_FILE_BYTES,
        }
    }
}

type Slot<T> = Arc<Mutex<Option<(Instant, Arc<T>)>>>;

/// Fetches repository metadata and files, caching both for the configured TTL.
///
/// Each cache key owns an async mutex, so concurrent misses on one key
/// issue a single fetch while other keys proceed independently.
pub struct RepoService {
    transport: Arc<dyn Transport>,
    config: RepoConfig,
    contexts: DashMap<RepoRef, Slot<RepoContext>>,
    files: DashMap<(RepoRef, String), Slot<CodeFile>>,
}

#[derive(Deserialize)]
struct RepoMeta {
    full_name: Option<String>,
    description: Option<String>,
    default_branch: Option<String>,
}

#[derive(Deserialize)]
struct TreeReply {
    #[serde(default)]
    tree: Vec<TreeEntry>,
    #[serde(default)]
    truncated: bool,
}

#[derive(Deserialize)]
struct TreeEntry {
    path: String,
}

#[derive(Deserialize)]
struct EncodedContent {
    #[serde(rename = "type", default)]
    kind: Option<String>,
    #[serde(default)]
    size: Option<usize>,
    #[serde(default)]
    encoding: Option<String>,
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Topics {
    #[serde(default)]
    names: Vec<String>,
}

impl RepoService {
    pub fn new(transport: Arc<dyn Transport>, config: RepoConfig) -> Self {
        Self {
            transport,
            config,
            contexts: DashMap::new(),
            files: DashMap::new(),
        }
    }

    pub fn config(&self) -> &RepoConfig {
        &self.config
    }

    pub async fn fetch_repo_context(&self, repo: &RepoRef) -> Result<Arc<RepoContext>, RepoError> {
        let slot = self.contexts.entry(repo.clone()).or_default().clone();
        let mut guard = slot.lock().await;
        if let Some((at, ctx)) = guard.as_ref() {
            if at.elapsed() < self.config.cache_ttl {
                return Ok(ctx.clone());
            }
        }
        let ctx = Arc::new(self.load_context(repo).await?);
        *guard = Some((Instant::now(), ctx.clone()));
        Ok(ctx)
    }

    pub async fn fetch_file(&self, repo: &RepoRef, path: &str) -> Result<Arc<CodeFile>, RepoError> {
        let path = path.trim_matches('/');
        if path.is_empty() {
            return Err(RepoError::FileNotFound(String::new()));
        }
        let key = (repo.clone(), path.to_string());
        let slot = self.files.entry(key).or_default().clone();
        let mut guard = slot.lock().await;
        if let Some((at, file)) = guard.as_ref() {
            if at.elapsed() < self.config.cache_ttl {
                return Ok(file.clone());
            }
        }
        let file = Arc::new(self.load_file(repo, path).await?);
        *guard = Some((Instant::now(), file.clone()));
        Ok(file)
    }

    async fn get(&self, path: &str) -> Result<ApiResponse, RepoError> {
        let response = self.transport.get(path).await?;
        match response.status {
            403 | 429 => Err(RepoError::RateLimited { retry_after: response.retry_after }),
            _ => Ok(response),
        }
    }

    fn base(repo: &RepoRef) -> String {
        format!(
            "/repos/{}/{}",
            utf8_percent_encode(&repo.owner, SEGMENT),
            utf8_percent_encode(&repo.name, SEGMENT)
        )
    }

    async fn load_context(&self, repo: &RepoRef) -> Result<RepoContext, RepoError> {
        let base = Self::base(repo);
        let meta = self.get(&base).await?;
        if meta.status == 404 {
            return Err(RepoError::RepoNotFound(repo.full_name()));
        }
        let meta: RepoMeta = parse_json(expect_ok(meta)?)?;

        let git_ref = repo
            .git_ref
            .clone()
            .or(meta.default_branch)
            .unwrap_or_else(|| "HEAD".to_string());
        let tree = self
            .get(&format!("{base}/git/trees/{}?recursive=1", utf8_percent_encode(&git_ref, SEGMENT)))
            .await?;
        let (file_tree, tree_truncated) = match tree.status {
            404 => return Err(RepoError::RepoNotFound(format!("{}@{git_ref}", repo.full_name()))),
            // An empty repository has no tree.
            409 => (Vec::new(), false),
            _ => {
                let reply: TreeReply = parse_json(expect_ok(tree)?)?;
                let (paths, cut) = bounded_tree(reply.tree.into_iter().map(|e| e.path), self.config.file_tree_max);
                (paths, cut || reply.truncated)
            }
        };

        let readme = self.get(&format!("{base}/readme{}", ref_query(repo))).await?;
        let readme_excerpt = if readme.status == 404 {
            String::new()
        } else {
            let content: EncodedContent = parse_json(expect_ok(readme)?)?;
            let bytes = decode_content(&content).unwrap_or_default();
            excerpt(&String::from_utf8_lossy(&bytes), self.config.readme_excerpt_max)
        };

        let topics = self.get(&format!("{base}/topics")).await?;
        let topics = if topics.status == 404 {
            Vec::new()
        } else {
            parse_json::<Topics>(expect_ok(topics)?)?.names
        };

        Ok(RepoContext {
            repo: repo.clone(),
            title: meta.full_name.unwrap_or_else(|| repo.full_name()),
            description: meta.description.unwrap_or_default(),
            file_tree,
            tree_truncated,
            readme_excerpt,
            topics,
            fetched_at: Utc::now(),
        })
    }

    async fn load_file(&self, repo: &RepoRef, path: &str) -> Result<CodeFile, RepoError> {
        let encoded: Vec<String> = path
            .split('/')
            .map(|s| utf8_percent_encode(s, SEGMENT).to_string())
            .collect();
        let response = self
            .get(&format!("{}/contents/{}{}", Self::base(repo), encoded.join("/"), ref_query(repo)))
            .await?;
        if response.status == 404 {
            return Err(RepoError::FileNotFound(path.to_string()));
        }
        let body = expect_ok(response)?;
        // Directories come back as JSON arrays.
        let content: EncodedContent = match serde_json::from_slice(&body) {
            Ok(c) => c,
            Err(_) if body.first() == Some(&b'[') => return Err(RepoError::FileNotFound(path.to_string())),
            Err(e) => return Err(RepoError::Transport(format!("malformed provider reply: {e}"))),
        };
        if content.kind.as_deref().is_some_and(|k| k != "file") {
            return Err(RepoError::FileNotFound(path.to_string()));
        }
        let limit = self.config.max_file_bytes;
        let too_large = |size| RepoError::FileTooLarge { path: path.to_string(), size, limit };
        if let Some(size) = content.size.filter(|s| *s > limit) {
            return Err(too_large(size));
        }
        let bytes = match content.encoding.as_deref() {
            // The provider omits content for blobs above its own inline limit.
            Some("none") => return Err(too_large(content.size.unwrap_or(0))),
            _ => decode_content(&content).ok_or_else(|| RepoError::BinaryFile(path.to_string()))?,
        };
        if bytes.len() > limit {
            return Err(too_large(bytes.len()));
        }
        if bytes.contains(&0) {
            return Err(RepoError::BinaryFile(path.to_string()));
        }
        let text = String::from_utf8(bytes).map_err(|_| RepoError::BinaryFile(path.to_string()))?;
        Ok(CodeFile::new(repo.clone(), path, text))
    }
}

fn ref_query(repo: &RepoRef) -> String {
    match &repo.git_ref {
        Some(r) => format!("?ref={}", utf8_percent_encode(r, SEGMENT)),
        None => String::new(),
    }
}

fn expect_ok(response: ApiResponse) -> Result<Vec<u8>, RepoError> {
    if (200..300).contains(&response.status) {
        Ok(response.body)
    } else {
        Err(RepoError::Transport(format!("provider answered HTTP {}", response.status)))
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: Vec<u8>) -> Result<T, RepoError> {
    serde_json::from_slice(&body).map_err(|e| RepoError::Transport(format!("malformed provider reply: {e}")))
}

fn decode_content(content: &EncodedContent) -> Option<Vec<u8>> {
    let raw = content.content.as_deref().unwrap_or("");
    match content.encoding.as_deref() {
        Some("base64") | None => {
            let compact: String = raw.chars().filter(|c| !c.is_ascii_whitespace()).collect();
            base64::engine::general_purpose::STANDARD.decode(compact).ok()
        }
        Some("utf-8" | "utf8") => Some(raw.as_bytes().to_vec()),
        Some(_) => None,
    }
}

/// Truncates to at most `max` characters, cutting at a line boundary when
/// at least one whole line fits.
pub(crate) fn excerpt(text: &str, max: usize) -> String {
    let text = text.replace("\r\n", "\n");
    if text.chars().count() <= max {
        return text;
    }
    let mut out = String::new();
    let mut used = 0;
    for line in text.split_inclusive('\n') {
        let n = line.chars().count();
        if used + n > max {
            break;
        }
        out.push_str(line);
        used += n;
    }
    if out.is_empty() {
        out = text.chars().take(max).collect();
    }
    out
}

/// Sorted, deduplicated tree limited to `max` entries, keeping shallower
/// paths first. Returns whether anything was dropped.
pub(crate) fn bounded_tree(paths: impl Iterator<Item = String>, max: usize) -> (Vec<String>, bool) {
    let unique: BTreeSet<String> = paths.filter(|p| !p.is_empty()).collect();
    if unique.len() <= max {
        return (unique.into_iter().collect(), false);
    }
    let mut by_depth: Vec<String> = unique.into_iter().collect();
    by_depth.sort_by(|a, b| depth(a).cmp(&depth(b)).then_with(|| a.cmp(b)));
    by_depth.truncate(max);
    by_depth.sort();
    (by_depth, true)
}

fn depth(path: &str) -> usize {
    path.matches('/').count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpt_cuts_at_line_boundary() {
        let text = "aaaa\nbbbb\ncccc\n";
        assert_eq!(excerpt(text, 100), text);
        assert_eq!(excerpt(text, 12), "aaaa\nbbbb\n");
        assert_eq!(excerpt(text, 10), "aaaa\nbbbb\n");
        assert_eq!(excerpt(text, 9), "aaaa\n");
        // A single overlong line is hard-cut.
        assert_eq!(excerpt("abcdefgh", 3), "abc");
    }

    #[test]
    fn excerpt_counts_characters_not_bytes() {
        let text = "ééé\nééé\n";
        assert_eq!(excerpt(text, 8), text);
        assert_eq!(excerpt(text, 7), "ééé\n");
    }

    #[test]
    fn tree_is_sorted_unique_and_bounded_by_depth() {
        let paths = ["b/x/y", "a", "b", "b/x", "a", "c/d"].map(String::from);
        let (tree, cut) = bounded_tree(paths.clone().into_iter(), 10);
        assert_eq!(tree, vec!["a", "b", "b/x", "b/x/y", "c/d"]);
        assert!(!cut);

        let (tree, cut) = bounded_tree(paths.into_iter(), 3);
        assert!(cut);
        assert_eq!(tree, vec!["a", "b", "b/x"]);
    }
}
