use serde_json::{Map, Value};

use super::{fenced_blocks, FeatureResponse, FormatError};
use crate::metrics::{Confidence, QualityReport, VulnerabilityCategory, VulnerabilityFinding};
use crate::prompt::TaskKind;
use crate::repo::LineRange;

/// Parsed reply for one quality chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkResponse {
    pub index: usize,
    pub count: usize,
    pub findings: Vec<VulnerabilityFinding>,
    pub narrative: String,
    pub warnings: Vec<String>,
}

fn extract_object(raw: &str) -> Result<Map<String, Value>, FormatError> {
    let as_object = |text: &str| match serde_json::from_str::<Value>(text.trim()) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    };
    if let Some(map) = as_object(raw) {
        return Ok(map);
    }
    for block in fenced_blocks(raw) {
        if let Some(map) = as_object(&block.code) {
            return Ok(map);
        }
    }
    if let (Some(open), Some(close)) = (raw.find('{'), raw.rfind('}')) {
        if open < close {
            if let Some(map) = as_object(&raw[open..=close]) {
                return Ok(map);
            }
        }
    }
    let reason = match serde_json::from_str::<Value>(raw.trim()) {
        Ok(_) => "top-level value is not an object".to_string(),
        Err(e) => e.to_string(),
    };
    Err(FormatError::MalformedJson(reason))
}

fn line_number(v: Option<&Value>) -> Option<u32> {
    v?.as_u64().filter(|n| *n >= 1).and_then(|n| u32::try_from(n).ok())
}

fn location(v: Option<&Value>, warnings: &mut Vec<String>) -> Option<LineRange> {
    match v {
        None | Some(Value::Null) => None,
        Some(Value::Object(o)) => {
            let start = line_number(o.get("start_line"));
            let end = line_number(o.get("end_line")).or(start);
            match (start, end) {
                (Some(s), Some(e)) if s <= e => Some(LineRange { start_line: s, end_line: e }),
                _ => {
                    warnings.push("dropped an invalid location_hint".to_string());
                    None
                }
            }
        }
        Some(_) => {
            warnings.push("dropped an invalid location_hint".to_string());
            None
        }
    }
}

fn finding(v: &Value, warnings: &mut Vec<String>) -> Option<VulnerabilityFinding> {
    let Value::Object(o) = v else {
        warnings.push("skipped a finding that is not an object".to_string());
        return None;
    };
    let raw_category = o.get("category").and_then(Value::as_str).unwrap_or("");
    let category = raw_category.parse::<VulnerabilityCategory>().unwrap_or_else(|_| {
        warnings.push(format!("unknown vulnerability category \"{raw_category}\" mapped to Other"));
        VulnerabilityCategory::Other
    });
    let confidence = match o.get("confidence").and_then(Value::as_str) {
        Some(c) => c.parse::<Confidence>().unwrap_or_else(|_| {
            warnings.push(format!("unknown confidence \"{c}\" treated as low"));
            Confidence::Low
        }),
        None => {
            warnings.push("finding without confidence treated as low".to_string());
            Confidence::Low
        }
    };
    Some(VulnerabilityFinding {
        category,
        location_hint: location(o.get("location_hint"), warnings),
        rationale: o.get("rationale").and_then(Value::as_str).unwrap_or("").trim().to_string(),
        confidence,
    })
}

/// Parses one chunk's JSON reply. Model-supplied metric fields are ignored.
pub fn parse_quality_chunk(raw: &str, index: usize, count: usize) -> Result<ChunkResponse, FormatError> {
    if raw.trim().is_empty() {
        return Err(FormatError::EmptyResponse);
    }
    let object = extract_object(raw)?;
    let mut warnings = Vec::new();
    let findings = match object.get("findings") {
        Some(Value::Array(items)) => items.iter().filter_map(|v| finding(v, &mut warnings)).collect(),
        Some(Value::Null) | None => {
            warnings.push("reply has no findings list".to_string());
            Vec::new()
        }
        Some(_) => return Err(FormatError::MalformedJson("findings is not a list".into())),
    };
    for key in object.keys() {
        if key != "findings" && key != "maintainability_narrative" {
            warnings.push(format!("ignored model-supplied field \"{key}\""));
        }
    }
    let narrative = object
        .get("maintainability_narrative")
        .and_then(Value::as_str)
        .unwrap_or("")
        .trim()
        .to_string();
    Ok(ChunkResponse { index, count, findings, narrative, warnings })
}

/// Single-chunk form of [`merge_chunk_findings`].
pub fn parse_quality(raw: &str, base: &QualityReport) -> Result<FeatureResponse, FormatError> {
    merge_chunk_findings(base, vec![parse_quality_chunk(raw, 1, 1)?])
}

/// The base report alone, when the model's reply could not be used.
pub fn degraded_quality(base: &QualityReport, warning: impl Into<String>) -> FeatureResponse {
    let mut report = base.clone();
    report.vulnerability_findings.clear();
    FeatureResponse {
        task: TaskKind::QualityAttributes,
        body_markdown: render_quality_markdown(&report, ""),
        refactored_code: None,
        quality: Some(report),
        warnings: vec![warning.into()],
        session_id: None,
    }
}

fn overlaps(a: Option<LineRange>, b: Option<LineRange>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.start_line <= b.end_line && b.start_line <= a.end_line,
        _ => false,
    }
}

/// Combines chunk replies into one response over `base`. Findings with the
/// same category and overlapping location collapse into the most
/// confident one.
pub fn merge_chunk_findings(base: &QualityReport, mut parts: Vec<ChunkResponse>) -> Result<FeatureResponse, FormatError> {
    let expected = parts.first().map_or(0, |p| p.count);
    parts.sort_by_key(|p| p.index);
    let got: Vec<usize> = parts.iter().map(|p| p.index).collect();
    let complete = expected > 0
        && parts.iter().all(|p| p.count == expected)
        && got.iter().copied().eq(1..=expected);
    if !complete {
        return Err(FormatError::ChunkSetIncomplete { expected, got });
    }
    let mut merged: Vec<VulnerabilityFinding> = Vec::new();
    let mut warnings = Vec::new();
    let mut narratives: Vec<String> = Vec::new();
    for part in parts {
        for f in part.findings {
            match merged.iter_mut().find(|m| m.category == f.category && overlaps(m.location_hint, f.location_hint)) {
                Some(existing) if f.confidence > existing.confidence => *existing = f,
                Some(_) => {}
                None => merged.push(f),
            }
        }
        warnings.extend(part.warnings.into_iter().map(|w| {
            if expected > 1 {
                format!("chunk {}/{expected}: {w}", part.index)
            } else {
                w
            }
        }));
        if !part.narrative.is_empty() && !narratives.contains(&part.narrative) {
            narratives.push(part.narrative);
        }
    }
    let mut report = base.clone();
    report.vulnerability_findings = merged;
    Ok(FeatureResponse {
        task: TaskKind::QualityAttributes,
        body_markdown: render_quality_markdown(&report, &narratives.join("\n\n")),
        refactored_code: None,
        quality: Some(report),
        warnings,
        session_id: None,
    })
}

pub fn render_quality_markdown(report: &QualityReport, narrative: &str) -> String {
    let h = &report.halstead;
    let language = if report.unsupported_language {
        format!("{} (no language profile; complexity is a lower bound)", report.language)
    } else {
        report.language.to_string()
    };
    let mut out = format!(
        "## Code Quality: `{}`\n\n| Metric | Value |\n|---|---|\n| Language | {language} |\n| SLOC | {} |\n\
         | Cyclomatic complexity | {} |\n| Halstead counts (η1, η2, N1, N2) | {}, {}, {}, {} |\n\
         | Halstead volume | {:.2} |\n| Maintainability index | {:.2} ({}) |\n\n## Vulnerability Findings\n\n",
        report.path,
        report.sloc,
        report.cyclomatic_complexity,
        h.distinct_operators,
        h.distinct_operands,
        h.total_operators,
        h.total_operands,
        report.halstead_volume,
        report.maintainability_index,
        report.mi_band,
    );
    if report.vulnerability_findings.is_empty() {
        out.push_str("No vulnerability findings reported.\n");
    }
    for f in &report.vulnerability_findings {
        let confidence = format!("{:?}", f.confidence).to_lowercase();
        let at = match f.location_hint {
            Some(r) if r.start_line == r.end_line => format!(", line {}", r.start_line),
            Some(r) => format!(", lines {}-{}", r.start_line, r.end_line),
            None => String::new(),
        };
        out.push_str(&format!("- **{}** ({confidence}{at}): {}\n", f.category, f.rationale));
    }
    if !narrative.trim().is_empty() {
        out.push_str("\n## Maintainability\n\n");
        out.push_str(narrative.trim());
        out.push('\n');
    }
    out.truncate(out.trim_end().len());
    out
}
