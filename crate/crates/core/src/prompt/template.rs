use std::collections::HashMap;
use std::path::Path;

use super::{PromptError, TaskKind};

/// Every placeholder a template may reference.
pub const PLACEHOLDERS: &[&str] = &[
    "repo_title",
    "description",
    "topics",
    "readme",
    "file_tree",
    "context",
    "path",
    "language",
    "line_count",
    "fence",
    "source",
    "selection",
    "selection_note",
    "start_line",
    "end_line",
    "window",
    "headings",
    "metrics_json",
    "categories",
    "history",
    "chunk_index",
    "chunk_count",
    "task",
    "feature_digest",
];

const PERSONA_FILE: &str = "persona.txt";

/// The parsed template directory: one body per task plus the persona file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    personas: HashMap<TaskKind, String>,
    bodies: HashMap<TaskKind, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let files = [
            (PERSONA_FILE, include_str!("../../templates/persona.txt")),
            ("explain_file.txt", include_str!("../../templates/explain_file.txt")),
            ("explain_selection.txt", include_str!("../../templates/explain_selection.txt")),
            ("refactor.txt", include_str!("../../templates/refactor.txt")),
            ("quality.txt", include_str!("../../templates/quality.txt")),
            ("chat.txt", include_str!("../../templates/chat.txt")),
        ];
        Self::from_files(|name| {
            files
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| PromptError::Template(format!("missing {name}")))
        })
        .expect("built-in templates are valid")
    }

    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        Self::from_files(|name| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| PromptError::Template(format!("{}: {e}", dir.join(name).display())))
        })
    }

    fn from_files(mut read: impl FnMut(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let persona = normalize(&read(PERSONA_FILE)?);
        let personas = parse_personas(&persona)?;
        let mut bodies = HashMap::new();
        for task in TaskKind::ALL {
            let name = format!("{}.txt", task.template_name());
            let body = normalize(&read(&name)?);
            check_placeholders(&name, &body)?;
            bodies.insert(task, body);
        }
        Ok(Self { personas, bodies })
    }

    pub fn persona(&self, task: TaskKind) -> &str {
        &self.personas[&task]
    }

    pub fn body(&self, task: TaskKind) -> &str {
        &self.bodies[&task]
    }
}

fn normalize(text: &str) -> String {
    text.replace("\r\n", "\n")
}

/// `[task_name]` header lines split the persona file into sections.
fn parse_personas(text: &str) -> Result<HashMap<TaskKind, String>, PromptError> {
    let mut sections: HashMap<TaskKind, String> = HashMap::new();
    let mut current: Option<TaskKind> = None;
    for line in text.lines() {
        let header = line.trim();
        if let Some(name) = header.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            let task = TaskKind::ALL
                .into_iter()
                .find(|t| t.template_name() == name)
                .ok_or_else(|| PromptError::Template(format!("{PERSONA_FILE}: unknown section [{name}]")))?;
            if sections.insert(task, String::new()).is_some() {
                return Err(PromptError::Template(format!("{PERSONA_FILE}: duplicate section [{name}]")));
            }
            current = Some(task);
            continue;
        }
        match current {
            Some(task) => {
                let body = sections.get_mut(&task).expect("section exists");
                body.push_str(line);
                body.push('\n');
            }
            None if header.is_empty() || header.starts_with('#') => {}
            None => return Err(PromptError::Template(format!("{PERSONA_FILE}: text before the first section"))),
        }
    }
    for task in TaskKind::ALL {
        match sections.get_mut(&task) {
            Some(body) => {
                let trimmed = body.trim().to_string();
                if trimmed.is_empty() {
                    return Err(PromptError::Template(format!("{PERSONA_FILE}: empty section [{}]", task.template_name())));
                }
                check_placeholders(PERSONA_FILE, &trimmed)?;
                *body = trimmed;
            }
            None => {
                return Err(PromptError::Template(format!("{PERSONA_FILE}: missing section [{}]", task.template_name())))
            }
        }
    }
    Ok(sections)
}

fn placeholders(template: &str) -> impl Iterator<Item = Result<&str, usize>> {
    let mut rest = template;
    let mut offset = 0;
    std::iter::from_fn(move || {
        let open = rest.find("{{")?;
        let after = &rest[open + 2..];
        let item = match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                let consumed = open + 2 + close + 2;
                offset += consumed;
                rest = &rest[consumed..];
                Ok(name)
            }
            None => {
                let at = offset + open;
                rest = "";
                Err(at)
            }
        };
        Some(item)
    })
}

fn check_placeholders(file: &str, template: &str) -> Result<(), PromptError> {
    for found in placeholders(template) {
        match found {
            Ok(name) if PLACEHOLDERS.contains(&name) => {}
            Ok(name) => return Err(PromptError::Template(format!("{file}: unknown placeholder {{{{{name}}}}}"))),
            Err(at) => return Err(PromptError::Template(format!("{file}: unclosed placeholder at byte {at}"))),
        }
    }
    Ok(())
}

/// Substitutes `{{name}}` in one pass; substituted text is never rescanned.
/// Placeholders without a value render as the empty string. The result
/// has trailing whitespace removed.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else { break };
        let name = &rest[open + 2..open + 2 + close];
        out.push_str(&rest[..open]);
        if let Some((_, value)) = values.iter().find(|(k, _)| *k == name) {
            out.push_str(value);
        }
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    out.truncate(out.trim_end().len());
    out
}
