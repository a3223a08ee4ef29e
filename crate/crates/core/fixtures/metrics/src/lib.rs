//! Token helpers.

pub enum Kind {
    Word,
    Number,
    Other,
}

pub fn classify<'a>(s: &'a str) -> Kind {
    match s.chars().next() {
        Some(c) if c.is_alphabetic() => Kind::Word,
        Some('0'..='9') => Kind::Number,
        _ => Kind::Other,
    }
}

pub fn parse_all(items: &[&str]) -> Result<Vec<u32>, std::num::ParseIntError> {
    let mut out = Vec::new();
    for item in items {
        out.push(item.parse::<u32>()?);
    }
    Ok(out)
}
