//! Repository coordinates, metadata and file contents.
//!
//! Everything here is fetched from the hosting provider's REST API through a
//! pluggable [`Transport`]; recorded JSON fixtures stand in for the network
//! in tests.

mod service;
mod transport;
mod urls;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::language::Language;

pub use self::service::{RepoConfig, RepoService};
pub use self::transport::{ApiResponse, FixtureTransport, HttpTransport, Transport};
pub use self::urls::{parse_repo_url, ParsedUrl};

pub const README_EXCERPT_MAX: usize = 4000;
pub const FILE_TREE_MAX: usize = 2000;
pub const MAX_FILE_BYTES: usize = 1024 * 1024;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RepoError {
    #[error("url not recognized as a repository or code file: {0}")]
    UrlNotRecognized(String),
    #[error("invalid repository reference: {0}")]
    InvalidRef(String),
    #[error("repository {0} not found")]
    RepoNotFound(String),
    #[error("file {0} not found")]
    FileNotFound(String),
    #[error("file {path} is {size} bytes, limit is {limit}")]
    FileTooLarge { path: String, size: usize, limit: usize },
    #[error("file {0} is not valid text")]
    BinaryFile(String),
    #[error("provider rate limit reached")]
    RateLimited { retry_after: Option<u64> },
    #[error("transport failure: {0}")]
    Transport(String),
}

/// Coordinates of a repository at a ref. `git_ref: None` means the
/// provider's default branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoRef {
    pub owner: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub git_ref: Option<String>,
}

impl RepoRef {
    pub fn new(
        owner: impl Into<String>,
        name: impl Into<String>,
        git_ref: Option<String>,
    ) -> Result<Self, RepoError> {
        let owner = owner.into();
        let name = name.into();
        for part in [&owner, &name] {
            if part.is_empty() || part.contains('/') {
                return Err(RepoError::InvalidRef(format!("{owner}/{name}")));
            }
        }
        if matches!(&git_ref, Some(r) if r.is_empty()) {
            return Err(RepoError::InvalidRef(format!("{owner}/{name}@")));
        }
        Ok(Self { owner, name, git_ref })
    }

    pub fn full_name(&self) -> String {
        format!("{}/{}", self.owner, self.name)
    }

    pub fn repo_url(&self) -> String {
        format!("https://github.com/{}/{}", self.owner, self.name)
    }

    /// Blob URL for `path`; the default-branch marker renders as `HEAD`.
    pub fn blob_url(&self, path: &str) -> String {
        let git_ref = self.git_ref.as_deref().unwrap_or("HEAD");
        format!(
            "https://github.com/{}/{}/blob/{}/{}",
            self.owner, self.name, git_ref, path
        )
    }
}

/// 1-based inclusive line range, e.g. from a `#L10-L20` fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRange {
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoContext {
    pub repo: RepoRef,
    pub title: String,
    pub description: String,
    /// Sorted, unique, repo-root-relative paths of files and directories.
    pub file_tree: Vec<String>,
    /// True when the provider or [`FILE_TREE_MAX`] cut the tree short.
    pub tree_truncated: bool,
    pub readme_excerpt: String,
    pub topics: Vec<String>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFile {
    pub repo: RepoRef,
    pub path: String,
    pub language: Language,
    pub content: String,
    pub line_count: usize,
}

impl CodeFile {
    pub fn new(repo: RepoRef, path: impl Into<String>, content: impl Into<String>) -> Self {
        let path = path.into();
        let content = content.into();
        Self {
            repo,
            language: Language::from_path(&path),
            line_count: count_lines(&content),
            path,
            content,
        }
    }

    /// Lines `start..=end` (1-based) joined with `\n`.
    pub fn line_text(&self, range: LineRange) -> Option<String> {
        if range.start_line == 0 || range.start_line > range.end_line {
            return None;
        }
        if range.end_line as usize > self.line_count {
            return None;
        }
        let lines: Vec<&str> = self
            .content
            .lines()
            .skip(range.start_line as usize - 1)
            .take((range.end_line - range.start_line + 1) as usize)
            .collect();
        Some(lines.join("\n"))
    }
}

/// Number of newline-delimited lines; a trailing newline does not open a new line.
pub fn count_lines(content: &str) -> usize {
    content.lines().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSpan {
    pub start_line: u32,
    pub end_line: u32,
    pub text: String,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SelectionError {
    #[error("selection must be nonempty with 1 <= start_line <= end_line")]
    Malformed,
    #[error("selection ends at line {end_line} but the file has {line_count} lines")]
    OutOfRange { end_line: u32, line_count: usize },
}

impl SelectionSpan {
    /// Shape checks that do not need the file.
    pub fn check_shape(&self) -> Result<(), SelectionError> {
        if self.start_line == 0 || self.start_line > self.end_line || self.text.is_empty() {
            return Err(SelectionError::Malformed);
        }
        Ok(())
    }

    pub fn validate(&self, line_count: usize) -> Result<(), SelectionError> {
        self.check_shape()?;
        if self.end_line as usize > line_count {
            return Err(SelectionError::OutOfRange {
                end_line: self.end_line,
                line_count,
            });
        }
        Ok(())
    }

    pub fn range(&self) -> LineRange {
        LineRange {
            start_line: self.start_line,
            end_line: self.end_line,
        }
    }
}
