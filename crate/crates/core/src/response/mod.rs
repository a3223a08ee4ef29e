//! Turns raw model text into typed feature responses.
//!
//! Parsing never trusts the model with anything computed locally: quality
//! metrics always come from the base report, and only vulnerability
//! findings and narrative are taken from the reply.

mod fences;
mod quality;

use serde::{Deserialize, Serialize};

use crate::language::Language;
use crate::metrics::QualityReport;
use crate::prompt::TaskKind;

pub use self::fences::{fenced_blocks, FencedBlock};
pub use self::quality::{
    degraded_quality, merge_chunk_findings, parse_quality, parse_quality_chunk, render_quality_markdown, ChunkResponse,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefactoredCode {
    pub language: Language,
    pub code: String,
    pub change_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResponse {
    pub task: TaskKind,
    pub body_markdown: String,
    #[serde(default)]
    pub refactored_code: Option<RefactoredCode>,
    #[serde(default)]
    pub quality: Option<QualityReport>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub session_id: Option<String>,
}

impl FeatureResponse {
    pub fn text(task: TaskKind, body: impl Into<String>) -> Self {
        Self { task, body_markdown: body.into(), refactored_code: None, quality: None, warnings: Vec::new(), session_id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("the model returned an empty response")]
    EmptyResponse,
    #[error("the model reply contains no fenced code block")]
    NoCodeBlockFound,
    #[error("the model reply is not the requested JSON object: {0}")]
    MalformedJson(String),
    #[error("chunk set incomplete: expected chunks 1..={expected}, got {got:?}")]
    ChunkSetIncomplete { expected: usize, got: Vec<usize> },
}

fn normalize(raw: &str) -> String {
    raw.replace("\r\n", "\n").trim().to_string()
}

/// Heading text of an ATX heading line (`#` to `######`).
fn heading_text(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    let hashes = trimmed.chars().take_while(|c| *c == '#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &trimmed[hashes..];
    if !rest.is_empty() && !rest.starts_with([' ', '\t']) {
        return None;
    }
    Some(rest.trim().trim_end_matches('#').trim())
}

/// Passes the markdown through and warns about each directed heading that
/// is missing. Headings match case-insensitively at any level outside code.
pub fn parse_explanation(raw: &str, task: TaskKind) -> Result<FeatureResponse, FormatError> {
    let body = normalize(raw);
    if body.is_empty() {
        return Err(FormatError::EmptyResponse);
    }
    let inside: Vec<bool> = fences::inside_fence_mask(&body);
    let present: Vec<String> = body
        .lines()
        .zip(inside)
        .filter(|(_, fenced)| !fenced)
        .filter_map(|(l, _)| heading_text(l))
        .map(str::to_lowercase)
        .collect();
    let mut response = FeatureResponse::text(task, body.clone());
    for heading in task.headings() {
        if !present.iter().any(|p| p == &heading.to_lowercase()) {
            response.warnings.push(format!("missing section heading \"{heading}\""));
        }
    }
    Ok(response)
}

fn bullet_text(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for marker in ["- ", "* ", "+ "] {
        if let Some(rest) = t.strip_prefix(marker) {
            return Some(rest.trim());
        }
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return Some(rest.trim());
        }
    }
    None
}

/// Takes the first fenced block as the refactored file and the bullets
/// after it as change notes.
pub fn parse_refactor(raw: &str, expected: Language) -> Result<FeatureResponse, FormatError> {
    let body = normalize(raw);
    if body.is_empty() {
        return Err(FormatError::EmptyResponse);
    }
    let blocks = fenced_blocks(&body);
    let first = blocks.first().ok_or(FormatError::NoCodeBlockFound)?;
    if first.code.trim().is_empty() {
        return Err(FormatError::NoCodeBlockFound);
    }
    let mut warnings = Vec::new();
    if blocks.len() > 1 {
        warnings.push(format!("reply contained {} code blocks; used the first", blocks.len()));
    }
    if !first.closed {
        warnings.push("the code block is not closed; took everything after the opening fence".to_string());
    }
    let tag = first.info.split_whitespace().next().unwrap_or("");
    let language = match Language::from_alias(tag) {
        _ if tag.is_empty() => expected,
        Some(found) if found == expected => found,
        Some(found) => {
            warnings.push(format!("code block is tagged {found}, expected {expected}"));
            found
        }
        None => {
            warnings.push(format!("code block tag \"{tag}\" is not a known language; expected {expected}"));
            expected
        }
    };
    let inside = fences::inside_fence_mask(&body);
    let change_notes = body
        .lines()
        .enumerate()
        .skip(first.end_line + 1)
        .filter(|(i, _)| !inside[*i])
        .filter_map(|(_, l)| bullet_text(l))
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect();
    let mut code = first.code.clone();
    code.push('\n');
    Ok(FeatureResponse {
        task: TaskKind::Refactor,
        body_markdown: body,
        refactored_code: Some(RefactoredCode { language, code, change_notes }),
        quality: None,
        warnings,
        session_id: None,
    })
}
