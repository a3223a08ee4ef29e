//! Deterministic code-quality metrics: SLOC, cyclomatic complexity,
//! Halstead counts and volume, and the maintainability index.
//!
//! Everything here is a pure function of the source text and its language
//! profile, so repeated analyses of the same bytes always agree. The only
//! model-assessed attribute, vulnerability findings, is filled in later by
//! the response formatter.

mod lexer;
mod profile;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::language::Language;
use crate::repo::{CodeFile, LineRange};

pub use self::lexer::{strip_comments_and_strings, tokenize, Token, TokenKind};
pub use self::profile::{LanguageProfile, ProfileSet};

/// Identifies the formula behind `maintainability_index`.
pub const MI_VARIANT: &str = "oman-hagemeister-3-term-raw";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no language profile for {0}")]
    UnsupportedLanguage(Language),
    #[error("invalid language profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalsteadCounts {
    pub distinct_operators: usize,
    pub distinct_operands: usize,
    pub total_operators: usize,
    pub total_operands: usize,
}

impl HalsteadCounts {
    pub fn vocabulary(&self) -> usize {
        self.distinct_operators + self.distinct_operands
    }

    pub fn length(&self) -> usize {
        self.total_operators + self.total_operands
    }

    /// `N * log2(eta)`, or 0 when the vocabulary has fewer than two entries.
    pub fn volume(&self) -> f64 {
        let vocabulary = self.vocabulary();
        if vocabulary < 2 {
            0.0
        } else {
            self.length() as f64 * (vocabulary as f64).log2()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiBand {
    High,
    Moderate,
    Low,
}

impl fmt::Display for MiBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiBand::High => "high",
            MiBand::Moderate => "moderate",
            MiBand::Low => "low",
        })
    }
}

/// Band cut-offs on the raw MI scale: `mi >= high` is High,
/// `moderate <= mi < high` is Moderate, anything lower is Low.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiThresholds {
    pub high: f64,
    pub moderate: f64,
}

impl Default for MiThresholds {
    fn default() -> Self {
        Self { high: 85.0, moderate: 65.0 }
    }
}

impl MiThresholds {
    pub fn band(&self, mi: f64) -> MiBand {
        if mi >= self.high {
            MiBand::High
        } else if mi >= self.moderate {
            MiBand::Moderate
        } else {
            MiBand::Low
        }
    }
}

/// Closed vulnerability-type vocabulary, after the public CVE type taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VulnerabilityCategory {
    Overflow,
    #[serde(rename = "Memory Corruption")]
    MemoryCorruption,
    #[serde(rename = "SQL Injection")]
    SqlInjection,
    #[serde(rename = "XSS")]
    Xss,
    #[serde(rename = "Directory Traversal")]
    DirectoryTraversal,
    #[serde(rename = "File Inclusion")]
    FileInclusion,
    #[serde(rename = "CSRF")]
    Csrf,
    #[serde(rename = "XXE")]
    Xxe,
    #[serde(rename = "SSRF")]
    Ssrf,
    #[serde(rename = "Open Redirect")]
    OpenRedirect,
    #[serde(rename = "Input Validation")]
    InputValidation,
    #[serde(rename = "Execute Code")]
    ExecuteCode,
    Bypass,
    #[serde(rename = "Privilege Escalation")]
    PrivilegeEscalation,
    #[serde(rename = "Denial of Service")]
    DenialOfService,
    #[serde(rename = "Information Leak")]
    InformationLeak,
    Other,
}

impl VulnerabilityCategory {
    pub const ALL: [VulnerabilityCategory; 17] = [
        Self::Overflow,
        Self::MemoryCorruption,
        Self::SqlInjection,
        Self::Xss,
        Self::DirectoryTraversal,
        Self::FileInclusion,
        Self::Csrf,
        Self::Xxe,
        Self::Ssrf,
        Self::OpenRedirect,
        Self::InputValidation,
        Self::ExecuteCode,
        Self::Bypass,
        Self::PrivilegeEscalation,
        Self::DenialOfService,
        Self::InformationLeak,
        Self::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Overflow => "Overflow",
            Self::MemoryCorruption => "Memory Corruption",
            Self::SqlInjection => "SQL Injection",
            Self::Xss => "XSS",
            Self::DirectoryTraversal => "Directory Traversal",
            Self::FileInclusion => "File Inclusion",
            Self::Csrf => "CSRF",
            Self::Xxe => "XXE",
            Self::Ssrf => "SSRF",
            Self::OpenRedirect => "Open Redirect",
            Self::InputValidation => "Input Validation",
            Self::ExecuteCode => "Execute Code",
            Self::Bypass => "Bypass",
            Self::PrivilegeEscalation => "Privilege Escalation",
            Self::DenialOfService => "Denial of Service",
            Self::InformationLeak => "Information Leak",
            Self::Other => "Other",
        }
    }
}

impl fmt::Display for VulnerabilityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VulnerabilityCategory {
    type Err = ();

    /// Case-, space-, dash- and underscore-insensitive match on the names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = |s: &str| {
            s.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        };
        let wanted = key(s);
        Self::ALL.into_iter().find(|c| key(c.name()) == wanted).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl FromStr for Confidence {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "medium" | "moderate" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityFinding {
    pub category: VulnerabilityCategory,
    pub location_hint: Option<LineRange>,
    pub rationale: String,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub path: String,
    pub language: Language,
    pub sloc: usize,
    pub cyclomatic_complexity: usize,
    pub halstead: HalsteadCounts,
    pub halstead_volume: f64,
    pub maintainability_index: f64,
    pub mi_band: MiBand,
    pub mi_variant: String,
    /// Set when no profile exists for the language and the fallback was used.
    pub unsupported_language: bool,
    pub vulnerability_findings: Vec<VulnerabilityFinding>,
}

/// Lines that are non-blank after comment and string masking.
pub fn count_sloc(content: &str, profile: &LanguageProfile) -> usize {
    strip_comments_and_strings(content, profile)
        .lines()
        .filter(|line| !line.trim().is_empty())
        .count()
}

/// `1 + decision tokens + short-circuit operators`, counted on the masked
/// token stream so comments, strings and partial words never match.
pub fn cyclomatic_complexity(content: &str, profile: &LanguageProfile) -> usize {
    let stripped = strip_comments_and_strings(content, profile);
    1 + tokenize(&stripped, profile)
        .iter()
        .filter(|t| profile.is_decision_token(&t.text))
        .count()
}

/// Operators are operator lexemes and keywords; operands are identifiers
/// and numeric literals.
pub fn halstead_metrics(content: &str, profile: &LanguageProfile) -> (HalsteadCounts, f64) {
    let stripped = strip_comments_and_strings(content, profile);
    let mut operators = HashSet::new();
    let mut operands = HashSet::new();
    let mut counts = HalsteadCounts::default();
    for token in tokenize(&stripped, profile) {
        let is_operator = match token.kind {
            TokenKind::Operator => true,
            TokenKind::Word => profile.keywords.contains(&token.text),
            TokenKind::Number => false,
        };
        if is_operator {
            counts.total_operators += 1;
            operators.insert(token.text);
        } else {
            counts.total_operands += 1;
            operands.insert(token.text);
        }
    }
    counts.distinct_operators = operators.len();
    counts.distinct_operands = operands.len();
    (counts, counts.volume())
}

/// `171 - 5.2 ln(V) - 0.23 CC - 16.2 ln(SLOC)` with `V` and `SLOC` floored
/// at 1. The result is not normalized or clamped.
pub fn maintainability_index(volume: f64, cc: usize, sloc: usize) -> f64 {
    171.0 - 5.2 * volume.max(1.0).ln() - 0.23 * cc as f64 - 16.2 * (sloc.max(1) as f64).ln()
}

/// Pure composition of the metrics above into a report with no findings.
#[derive(Debug, Clone)]
pub struct Analyzer {
    profiles: ProfileSet,
    thresholds: MiThresholds,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self::new(ProfileSet::builtin(), MiThresholds::default())
    }
}

impl Analyzer {
    pub fn new(profiles: ProfileSet, thresholds: MiThresholds) -> Self {
        Self { profiles, thresholds }
    }

    pub fn profiles(&self) -> &ProfileSet {
        &self.profiles
    }

    pub fn analyze_file(&self, file: &CodeFile) -> QualityReport {
        self.analyze(&file.path, file.language, &file.content)
    }

    pub fn analyze(&self, path: &str, language: Language, content: &str) -> QualityReport {
        let (profile, supported) = self.profiles.resolve(language);
        let sloc = count_sloc(content, profile);
        let cc = cyclomatic_complexity(content, profile);
        let (halstead, volume) = halstead_metrics(content, profile);
        let mi = maintainability_index(volume, cc, sloc);
        QualityReport {
            path: path.to_string(),
            language,
            sloc,
            cyclomatic_complexity: cc,
            halstead,
            halstead_volume: volume,
            maintainability_index: mi,
            mi_band: self.thresholds.band(mi),
            mi_variant: MI_VARIANT.to_string(),
            unsupported_language: !supported,
            vulnerability_findings: Vec::new(),
        }
    }
}
