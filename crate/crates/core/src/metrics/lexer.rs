//! Comment/string masking and a small, language-agnostic tokenizer.

use super::profile::LanguageProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    Number,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

fn starts_with(chars: &[char], at: usize, pat: &str) -> bool {
    pat.chars().enumerate().all(|(k, p)| chars.get(at + k) == Some(&p))
}

fn mask(c: char) -> char {
    if c == '\n' {
        '\n'
    } else {
        ' '
    }
}

/// Replaces comment bodies (markers included) and string literal bodies
/// (delimiters kept) with spaces. Newlines survive untouched; unterminated
/// constructs run to end of input.
pub fn strip_comments_and_strings(content: &str, profile: &LanguageProfile) -> String {
    let chars: Vec<char> = content.chars().collect();
    let mut quotes: Vec<(&str, bool)> = profile
        .string_delimiters
        .iter()
        .map(|d| (d.as_str(), true))
        .chain(profile.raw_string_delimiters.iter().map(|d| (d.as_str(), false)))
        .collect();
    quotes.sort_by_key(|(d, _)| std::cmp::Reverse(d.chars().count()));

    let mut out = String::with_capacity(content.len());
    let mut i = 0;
    'scan: while i < chars.len() {
        for (open, close) in &profile.block_comment {
            if starts_with(&chars, i, open) {
                let open_len = open.chars().count();
                let close_len = close.chars().count();
                out.extend(std::iter::repeat_n(' ', open_len));
                i += open_len;
                while i < chars.len() {
                    if starts_with(&chars, i, close) {
                        out.extend(std::iter::repeat_n(' ', close_len));
                        i += close_len;
                        continue 'scan;
                    }
                    out.push(mask(chars[i]));
                    i += 1;
                }
                continue 'scan;
            }
        }
        for marker in &profile.line_comment {
            if starts_with(&chars, i, marker) {
                while i < chars.len() && chars[i] != '\n' {
                    out.push(' ');
                    i += 1;
                }
                continue 'scan;
            }
        }
        for (delim, escapes) in &quotes {
            if starts_with(&chars, i, delim) {
                let len = delim.chars().count();
                out.push_str(delim);
                i += len;
                while i < chars.len() {
                    if *escapes && chars[i] == '\\' {
                        out.push(' ');
                        if let Some(&next) = chars.get(i + 1) {
                            out.push(mask(next));
                        }
                        i += 2;
                        continue;
                    }
                    if starts_with(&chars, i, delim) {
                        out.push_str(delim);
                        i += len;
                        continue 'scan;
                    }
                    out.push(mask(chars[i]));
                    i += 1;
                }
                continue 'scan;
            }
        }
        let c = chars[i];
        if profile.char_delimiters.contains(&c) {
            if let Some(end) = char_literal_end(&chars, i) {
                out.push(c);
                out.extend(std::iter::repeat_n(' ', end - i - 1));
                out.push(c);
                i = end + 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Index of the closing quote of a character literal opened at `at`.
fn char_literal_end(chars: &[char], at: usize) -> Option<usize> {
    let quote = chars[at];
    match chars.get(at + 1) {
        Some('\\') => (at + 2..chars.len().min(at + 16))
            .take_while(|&j| chars[j] != '\n')
            .find(|&j| j > at + 2 && chars[j] == quote),
        Some(&c) if c != '\n' && c != quote => (chars.get(at + 2) == Some(&quote)).then_some(at + 2),
        _ => None,
    }
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

/// Tokenizes already-stripped text. Whitespace and leftover quote
/// characters separate tokens and are not themselves tokens.
pub fn tokenize(stripped: &str, profile: &LanguageProfile) -> Vec<Token> {
    let quote_chars: Vec<char> = profile
        .string_delimiters
        .iter()
        .chain(&profile.raw_string_delimiters)
        .flat_map(|d| d.chars())
        .chain(profile.char_delimiters.iter().copied())
        .collect();
    let chars: Vec<char> = stripped.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || quote_chars.contains(&c) {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if is_word_start(c) {
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            TokenKind::Word
        } else if c.is_ascii_digit() {
            i = number_end(&chars, i);
            TokenKind::Number
        } else {
            let len = profile
                .operators
                .iter()
                .find(|op| starts_with(&chars, i, op))
                .map(|op| op.chars().count())
                .unwrap_or(1);
            i += len;
            TokenKind::Operator
        };
        tokens.push(Token {
            kind,
            text: chars[start..i].iter().collect(),
        });
    }
    tokens
}

fn number_end(chars: &[char], start: usize) -> usize {
    let hex = chars.get(start) == Some(&'0') && matches!(chars.get(start + 1), Some('x' | 'X'));
    let mut seen_dot = false;
    let mut i = start + 1;
    while i < chars.len() {
        let c = chars[i];
        let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        let accept = c.is_ascii_alphanumeric()
            || c == '_'
            || (c == '.' && !seen_dot && !hex && next_digit)
            || ((c == '+' || c == '-') && !hex && matches!(chars[i - 1], 'e' | 'E') && next_digit);
        if !accept {
            break;
        }
        seen_dot |= c == '.';
        i += 1;
    }
    i
}
