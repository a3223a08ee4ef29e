use serde::{Deserialize, Serialize};

/// Source text with CRLF converted to LF.
pub fn normalize_source(content: &str) -> String {
    content.replace("\r\n", "\n")
}

/// A backtick fence longer than any backtick run in `texts`.
pub fn fence_for(texts: &[&str]) -> String {
    let longest = texts
        .iter()
        .flat_map(|t| t.split(|c| c != '`'))
        .map(str::len)
        .max()
        .unwrap_or(0);
    "`".repeat(longest.max(2) + 1)
}

fn number_width(last_line: usize) -> usize {
    last_line.max(1).to_string().len()
}

fn numbered_line(out: &mut String, n: usize, width: usize, line: &str) {
    if line.is_empty() {
        out.push_str(&format!("{n:>width$} |\n"));
    } else {
        out.push_str(&format!("{n:>width$} | {line}\n"));
    }
}

/// Lines `first..` of `lines`, prefixed with their 1-based numbers. The
/// number column is as wide as `width_for`'s digits.
pub fn numbered(lines: &[&str], first: usize, width_for: usize) -> String {
    let width = number_width(width_for);
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        numbered_line(&mut out, first + i, width, line);
    }
    out.truncate(out.trim_end_matches('\n').len());
    out
}

/// Numbered source keeping the first `head` and last `tail` lines, with a
/// marker standing in for the elided middle.
pub fn numbered_elided(lines: &[&str], head: usize, tail: usize) -> String {
    if head + tail >= lines.len() {
        return numbered(lines, 1, lines.len());
    }
    let width = number_width(lines.len());
    let mut out = String::new();
    for (i, line) in lines[..head].iter().enumerate() {
        numbered_line(&mut out, i + 1, width, line);
    }
    let (from, to) = (head + 1, lines.len() - tail);
    out.push_str(&format!(
        "{:>width$} | ... [lines {from}-{to} elided, {} lines] ...\n",
        "",
        to - from + 1
    ));
    for (i, line) in lines[lines.len() - tail..].iter().enumerate() {
        numbered_line(&mut out, lines.len() - tail + i + 1, width, line);
    }
    out.truncate(out.trim_end_matches('\n').len());
    out
}

/// One line-bounded piece of a file for chunked analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceChunk {
    pub index: usize,
    pub count: usize,
    pub start_line: usize,
    pub end_line: usize,
    /// The chunk's lines with their terminators; chunks concatenate to the
    /// normalized source.
    pub text: String,
}

/// Splits `source` at line boundaries so that no chunk's numbered rendering
/// exceeds `max_chars`. Returns `Err(line)` for a line that cannot fit alone.
pub fn chunk_lines(source: &str, max_chars: usize) -> Result<Vec<SourceChunk>, usize> {
    let total_lines = source.split_inclusive('\n').count();
    let width = number_width(total_lines);
    let mut chunks: Vec<(usize, usize, String)> = Vec::new();
    let mut current = String::new();
    let mut start = 1;
    let mut rendered = 0;
    for (i, line) in source.split_inclusive('\n').enumerate() {
        let n = i + 1;
        let body = line.strip_suffix('\n').unwrap_or(line);
        let cost = width + 3 + body.chars().count() + 1;
        if cost > max_chars {
            return Err(n);
        }
        if rendered + cost > max_chars && !current.is_empty() {
            chunks.push((start, n - 1, std::mem::take(&mut current)));
            start = n;
            rendered = 0;
        }
        current.push_str(line);
        rendered += cost;
    }
    if !current.is_empty() || chunks.is_empty() {
        chunks.push((start, total_lines.max(start), current));
    }
    let count = chunks.len();
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, (start_line, end_line, text))| SourceChunk {
            index: i + 1,
            count,
            start_line,
            end_line: if text.is_empty() { start_line - 1 } else { end_line },
            text,
        })
        .collect())
}

impl SourceChunk {
    pub fn numbered(&self, total_lines: usize) -> String {
        let lines: Vec<&str> = self.text.lines().collect();
        numbered(&lines, self.start_line, total_lines)
    }
}
