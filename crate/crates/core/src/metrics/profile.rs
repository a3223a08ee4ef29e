use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::MetricsError;
use crate::language::Language;

/// Per-language counting rules, loaded from one TOML document per language.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct LanguageProfile {
    pub language: Language,
    /// Every reserved word; counted as Halstead operators.
    #[serde(default)]
    pub keywords: BTreeSet<String>,
    /// Tokens that open a branch (keywords, and punctuation such as `?`).
    #[serde(default)]
    pub decision_keywords: BTreeSet<String>,
    /// Short-circuit operators.
    #[serde(default)]
    pub boolean_operators: BTreeSet<String>,
    /// Multi-character operator lexemes, matched longest first.
    #[serde(default)]
    pub operators: Vec<String>,
    #[serde(default)]
    pub line_comment: Vec<String>,
    #[serde(default)]
    pub block_comment: Vec<(String, String)>,
    /// Quote sequences with backslash escapes.
    #[serde(default)]
    pub string_delimiters: Vec<String>,
    /// Quote characters of short character literals (`'a'`, `'\n'`); a lone
    /// quote that does not close one is ordinary code (e.g. a lifetime).
    #[serde(default)]
    pub char_delimiters: Vec<char>,
    /// Quote sequences without escapes.
    #[serde(default)]
    pub raw_string_delimiters: Vec<String>,
}

impl LanguageProfile {
    /// The fallback profile: no comments, strings or decision tokens.
    pub fn unknown() -> Self {
        Self {
            language: Language::Unknown,
            keywords: BTreeSet::new(),
            decision_keywords: BTreeSet::new(),
            boolean_operators: BTreeSet::new(),
            operators: Vec::new(),
            line_comment: Vec::new(),
            block_comment: Vec::new(),
            string_delimiters: Vec::new(),
            char_delimiters: Vec::new(),
            raw_string_delimiters: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, MetricsError> {
        let mut profile: LanguageProfile =
            toml::from_str(text).map_err(|e| MetricsError::InvalidProfile(e.to_string()))?;
        profile.operators.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then(a.cmp(b)));
        profile.operators.dedup();
        profile.validate()?;
        Ok(profile)
    }

    fn validate(&self) -> Result<(), MetricsError> {
        let invalid = |why: String| Err(MetricsError::InvalidProfile(format!("{}: {why}", self.language)));
        if let Some(shared) = self.decision_keywords.intersection(&self.boolean_operators).next() {
            return invalid(format!("{shared:?} is both a decision keyword and a boolean operator"));
        }
        if self.operators.iter().any(|op| op.chars().count() < 2) {
            return invalid("operator lexemes must be at least two characters".into());
        }
        let empty = |s: &String| s.is_empty();
        if self.line_comment.iter().any(empty)
            || self.string_delimiters.iter().any(empty)
            || self.raw_string_delimiters.iter().any(empty)
            || self.block_comment.iter().any(|(a, b)| a.is_empty() || b.is_empty())
        {
            return invalid("empty comment or string delimiter".into());
        }
        Ok(())
    }

    pub fn is_decision_token(&self, token: &str) -> bool {
        self.decision_keywords.contains(token) || self.boolean_operators.contains(token)
    }
}

const BUILTIN: [&str; 8] = [
    include_str!("../../profiles/c.toml"),
    include_str!("../../profiles/cpp.toml"),
    include_str!("../../profiles/java.toml"),
    include_str!("../../profiles/python.toml"),
    include_str!("../../profiles/javascript.toml"),
    include_str!("../../profiles/typescript.toml"),
    include_str!("../../profiles/rust.toml"),
    include_str!("../../profiles/go.toml"),
];

/// Immutable table of language profiles, one per supported language.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    profiles: HashMap<Language, LanguageProfile>,
    unknown: LanguageProfile,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        Self::from_documents(BUILTIN.iter().copied()).expect("built-in language profiles are valid")
    }

    /// Loads every `*.toml` file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, MetricsError> {
        let mut docs = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| MetricsError::InvalidProfile(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| MetricsError::InvalidProfile(e.to_string()))?.path();
            if path.extension().is_some_and(|e| e == "toml") {
                docs.push(std::fs::read_to_string(&path).map_err(|e| MetricsError::InvalidProfile(e.to_string()))?);
            }
        }
        Self::from_documents(docs.iter().map(String::as_str))
    }

    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a str>) -> Result<Self, MetricsError> {
        let mut profiles = HashMap::new();
        for doc in docs {
            let profile = LanguageProfile::from_toml(doc)?;
            if profile.language == Language::Unknown {
                return Err(MetricsError::InvalidProfile("the unknown profile is built in".into()));
            }
            if profiles.insert(profile.language, profile).is_some() {
                return Err(MetricsError::InvalidProfile("duplicate profile for one language".into()));
            }
        }
        Ok(Self { profiles, unknown: LanguageProfile::unknown() })
    }

    pub fn get(&self, language: Language) -> Result<&LanguageProfile, MetricsError> {
        self.profiles.get(&language).ok_or(MetricsError::UnsupportedLanguage(language))
    }

    /// The language's profile, or the unknown fallback with a flag.
    pub fn resolve(&self, language: Language) -> (&LanguageProfile, bool) {
        match self.get(language) {
            Ok(profile) => (profile, true),
            Err(_) => (&self.unknown, false),
        }
    }
}
