use url::Url;

use super::{LineRange, RepoError, RepoRef};

/// Structured parts of a repository or code-file page URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedUrl {
    pub repo: RepoRef,
    pub path: Option<String>,
    /// Line hint from a `#L{a}` or `#L{a}-L{b}` fragment.
    pub lines: Option<LineRange>,
}

/// Recognizes `https://github.com/{owner}/{name}` and
/// `https://github.com/{owner}/{name}/blob/{ref}/{path}`.
pub fn parse_repo_url(input: &str) -> Result<ParsedUrl, RepoError> {
    let not_recognized = || RepoError::UrlNotRecognized(input.to_string());
    let url = Url::parse(input.trim()).map_err(|_| not_recognized())?;
    if !matches!(url.scheme(), "https" | "http") {
        return Err(not_recognized());
    }
    match url.host_str() {
        Some("github.com" | "www.github.com") => {}
        _ => return Err(not_recognized()),
    }

    let segments: Vec<&str> = url
        .path_segments()
        .map(|s| s.collect())
        .unwrap_or_default();
    // Tolerate one trailing slash.
    let segments = match segments.split_last() {
        Some((&"", rest)) => rest.to_vec(),
        _ => segments,
    };

    let lines = url.fragment().and_then(parse_line_fragment);
    match segments.as_slice() {
        [owner, name] => {
            let name = name.strip_suffix(".git").unwrap_or(name);
            let repo = RepoRef::new(*owner, name, None).map_err(|_| not_recognized())?;
            Ok(ParsedUrl { repo, path: None, lines: None })
        }
        [owner, name, "blob", git_ref, path @ ..] if !path.is_empty() => {
            if path.iter().any(|s| s.is_empty()) {
                return Err(not_recognized());
            }
            let repo = RepoRef::new(*owner, *name, Some(git_ref.to_string()))
                .map_err(|_| not_recognized())?;
            Ok(ParsedUrl {
                repo,
                path: Some(path.join("/")),
                lines,
            })
        }
        _ => Err(not_recognized()),
    }
}

fn parse_line_fragment(fragment: &str) -> Option<LineRange> {
    let rest = fragment.strip_prefix('L')?;
    let (start, end) = match rest.split_once('-') {
        Some((a, b)) => (a, b.strip_prefix('L').unwrap_or(b)),
        None => (rest, rest),
    };
    let start_line: u32 = start.parse().ok()?;
    let end_line: u32 = end.parse().ok()?;
    (start_line >= 1 && start_line <= end_line).then_some(LineRange { start_line, end_line })
}
