//! Language tags and the file-extension table used to infer them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Source language of a file, inferred from its extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    C,
    Cpp,
    Java,
    Python,
    JavaScript,
    TypeScript,
    Rust,
    Go,
    Unknown,
}

impl Language {
    pub const SUPPORTED: [Language; 8] = [
        Language::C,
        Language::Cpp,
        Language::Java,
        Language::Python,
        Language::JavaScript,
        Language::TypeScript,
        Language::Rust,
        Language::Go,
    ];

    pub fn from_path(path: &str) -> Self {
        let ext = Path::new(path)
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("c" | "h") => Language::C,
            Some("cc" | "cpp" | "cxx" | "c++" | "hpp" | "hh" | "hxx") => Language::Cpp,
            Some("java") => Language::Java,
            Some("py" | "pyw" | "pyi") => Language::Python,
            Some("js" | "mjs" | "cjs" | "jsx") => Language::JavaScript,
            Some("ts" | "tsx" | "mts" | "cts") => Language::TypeScript,
            Some("rs") => Language::Rust,
            Some("go") => Language::Go,
            _ => Language::Unknown,
        }
    }

    /// Stable lowercase identifier, also used as the profile file stem.
    pub fn as_str(self) -> &'static str {
        match self {
            Language::C => "c",
            Language::Cpp => "cpp",
            Language::Java => "java",
            Language::Python => "python",
            Language::JavaScript => "javascript",
            Language::TypeScript => "typescript",
            Language::Rust => "rust",
            Language::Go => "go",
            Language::Unknown => "unknown",
        }
    }

    /// Parses a language name or a common fence alias (`py`, `c++`, `ts`, ...).
    pub fn from_alias(tag: &str) -> Option<Self> {
        let lang = match tag.trim().to_ascii_lowercase().as_str() {
            "c" | "h" => Language::C,
            "cpp" | "c++" | "cc" | "cxx" | "hpp" => Language::Cpp,
            "java" => Language::Java,
            "python" | "py" | "python3" => Language::Python,
            "javascript" | "js" | "jsx" | "mjs" | "node" => Language::JavaScript,
            "typescript" | "ts" | "tsx" => Language::TypeScript,
            "rust" | "rs" => Language::Rust,
            "go" | "golang" => Language::Go,
            "unknown" => Language::Unknown,
            _ => return None,
        };
        Some(lang)
    }

    pub fn is_supported(self) -> bool {
        self != Language::Unknown
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
