/// A fenced code block found in markdown. Line indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    pub info: String,
    pub code: String,
    pub start_line: usize,
    /// The closing fence line, or the last line when unclosed.
    pub end_line: usize,
    pub closed: bool,
}

struct Opening<'a> {
    marker: char,
    len: usize,
    info: &'a str,
}

fn opening(line: &str) -> Option<Opening<'_>> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let marker = rest.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = rest.chars().take_while(|c| *c == marker).count();
    if len < 3 {
        return None;
    }
    let info = rest[len..].trim();
    if marker == '`' && info.contains('`') {
        return None;
    }
    Some(Opening { marker, len, info })
}

fn closes(line: &str, open: &Opening<'_>) -> bool {
    let t = line.trim();
    let len = t.chars().take_while(|c| *c == open.marker).count();
    len >= open.len && t.chars().all(|c| c == open.marker)
}

pub fn fenced_blocks(markdown: &str) -> Vec<FencedBlock> {
    let lines: Vec<&str> = markdown.lines().collect();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let Some(open) = opening(lines[i]) else {
            i += 1;
            continue;
        };
        let start = i;
        let mut j = i + 1;
        while j < lines.len() && !closes(lines[j], &open) {
            j += 1;
        }
        let closed = j < lines.len();
        let end_body = j.min(lines.len());
        blocks.push(FencedBlock {
            info: open.info.to_string(),
            code: lines[start + 1..end_body].join("\n"),
            start_line: start,
            end_line: if closed { j } else { lines.len() - 1 },
            closed,
        });
        i = j + 1;
    }
    blocks
}

/// Per line: whether it belongs to a fenced block, fences included.
pub(crate) fn inside_fence_mask(markdown: &str) -> Vec<bool> {
    let count = markdown.lines().count();
    let mut mask = vec![false; count];
    for b in fenced_blocks(markdown) {
        for m in &mut mask[b.start_line..=b.end_line.min(count.saturating_sub(1))] {
            *m = true;
        }
    }
    mask
}
