//! Persona-style prompt construction for the five tasks.
//!
//! Wording lives in plain-text templates (see [`TemplateSet`]); the code
//! here only assembles sections, enforces the token budget and applies the
//! truncation ladder: shrink the file tree, then the README, then elide the
//! middle of the source, then give up.

mod context;
mod source;
mod template;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::metrics::{QualityReport, VulnerabilityCategory};
use crate::repo::{CodeFile, RepoContext, SelectionError, SelectionSpan};

pub use self::context::ContextPack;
pub use self::source::{chunk_lines, fence_for, normalize_source, numbered, SourceChunk};
pub use self::template::{render, TemplateSet, PLACEHOLDERS};

pub const TOKEN_BUDGET: usize = 24_000;
pub const CONTEXT_CHAR_BUDGET: usize = 6000;
pub const SELECTION_WINDOW: usize = 20;
/// Chat exchanges (one user turn plus one assistant turn) kept in prompts.
pub const CHAT_EXCHANGES: usize = 20;
pub const DIGEST_CHAR_MAX: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ExplainFile,
    ExplainSelection,
    Refactor,
    QualityAttributes,
    ChatTurn,
}

pub const EXPLAIN_FILE_HEADINGS: [&str; 4] = ["Overview", "Attributes", "Methods", "Context in Project"];
pub const EXPLAIN_SELECTION_HEADINGS: [&str; 3] = ["Purpose", "How It Works", "Context in Project"];

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::ExplainFile,
        TaskKind::ExplainSelection,
        TaskKind::Refactor,
        TaskKind::QualityAttributes,
        TaskKind::ChatTurn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ExplainFile => "explain_file",
            TaskKind::ExplainSelection => "explain_selection",
            TaskKind::Refactor => "refactor",
            TaskKind::QualityAttributes => "quality_attributes",
            TaskKind::ChatTurn => "chat_turn",
        }
    }

    /// Stem of the task's template file and persona section.
    pub fn template_name(self) -> &'static str {
        match self {
            TaskKind::QualityAttributes => "quality",
            TaskKind::ChatTurn => "chat",
            other => other.as_str(),
        }
    }

    /// Level-two headings the answer is directed to use.
    pub fn headings(self) -> &'static [&'static str] {
        match self {
            TaskKind::ExplainFile => &EXPLAIN_FILE_HEADINGS,
            TaskKind::ExplainSelection => &EXPLAIN_SELECTION_HEADINGS,
            _ => &[],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptMessage {
    pub role: Role,
    pub content: String,
}

impl PromptMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub messages: Vec<PromptMessage>,
    pub task: TaskKind,
    pub estimated_tokens: usize,
}

/// Tokens estimated as characters / 4, rounded up.
pub fn estimate_tokens(messages: &[PromptMessage]) -> usize {
    let chars: usize = messages.iter().map(|m| m.content.chars().count()).sum();
    chars.div_ceil(4)
}

impl Prompt {
    pub fn new(task: TaskKind, messages: Vec<PromptMessage>) -> Self {
        let estimated_tokens = estimate_tokens(&messages);
        Self { messages, task, estimated_tokens }
    }

    /// Readable dump used by golden files.
    pub fn transcript(&self) -> String {
        let mut out = format!("task: {}\nestimated_tokens: {}\n", self.task, self.estimated_tokens);
        for m in &self.messages {
            out.push_str(&format!("--- {} ---\n{}\n", m.role.as_str(), m.content));
        }
        out
    }

    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0} is empty")]
    EmptyInput(String),
    #[error("chat message is empty")]
    EmptyMessage,
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("{task} prompt needs about {estimated} tokens, budget is {budget}")]
    OverBudget { task: TaskKind, estimated: usize, budget: usize },
    #[error("template error: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptLimits {
    pub token_budget: usize,
    pub context_char_budget: usize,
    pub selection_window: usize,
    pub chat_exchanges: usize,
    pub digest_char_max: usize,
}

impl Default for PromptLimits {
    fn default() -> Self {
        Self {
            token_budget: TOKEN_BUDGET,
            context_char_budget: CONTEXT_CHAR_BUDGET,
            selection_window: SELECTION_WINDOW,
            chat_exchanges: CHAT_EXCHANGES,
            digest_char_max: DIGEST_CHAR_MAX,
        }
    }
}

/// The last feature result a chat builds on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDigest {
    pub task: TaskKind,
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    pub at: DateTime<Utc>,
}

/// Inputs of a chat prompt apart from the new message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChatContext {
    pub pack: Option<ContextPack>,
    pub digest: Option<FeatureDigest>,
    pub turns: Vec<ChatTurn>,
}

type Vars = Vec<(&'static str, String)>;

#[derive(Debug, Clone)]
pub struct PromptFactory {
    templates: TemplateSet,
    limits: PromptLimits,
}

impl Default for PromptFactory {
    fn default() -> Self {
        Self::new(TemplateSet::builtin(), PromptLimits::default())
    }
}

impl PromptFactory {
    pub fn new(templates: TemplateSet, limits: PromptLimits) -> Self {
        Self { templates, limits }
    }

    pub fn limits(&self) -> &PromptLimits {
        &self.limits
    }

    fn max_chars(&self) -> usize {
        self.limits.token_budget * 4
    }

    pub fn build_context_pack(&self, ctx: &RepoContext, focus: &str) -> ContextPack {
        ContextPack::build(ctx, focus, self.limits.context_char_budget)
    }

    fn messages(&self, task: TaskKind, vars: &Vars) -> Vec<PromptMessage> {
        let values: Vec<(&str, &str)> = vars.iter().map(|(k, v)| (*k, v.as_str())).collect();
        vec![
            PromptMessage::new(Role::System, render(self.templates.persona(task), &values)),
            PromptMessage::new(Role::User, render(self.templates.body(task), &values)),
        ]
    }

    /// Walks the truncation ladder until the rendered prompt fits.
    /// `elidable` is the number of source lines that may be dropped; the
    /// render callback gets the count of lines to keep, or `None` for all.
    fn ladder(
        &self,
        task: TaskKind,
        pack: &ContextPack,
        elidable: usize,
        render_with: impl Fn(&ContextPack, Option<usize>) -> Vec<PromptMessage>,
    ) -> Result<Prompt, PromptError> {
        let budget = self.limits.token_budget;
        let attempt = |pack: &ContextPack, keep: Option<usize>| Prompt::new(task, render_with(pack, keep));

        let mut pack = pack.clone();
        let mut prompt = attempt(&pack, None);
        if prompt.estimated_tokens <= budget {
            return Ok(prompt);
        }
        while !pack.file_tree_excerpt.is_empty() {
            pack.shrink_tree(pack.file_tree_excerpt.len() / 2);
            prompt = attempt(&pack, None);
            if prompt.estimated_tokens <= budget {
                return Ok(prompt);
            }
        }
        while !pack.readme_excerpt.is_empty() {
            pack.shrink_readme(pack.readme_excerpt.chars().count() / 2);
            prompt = attempt(&pack, None);
            if prompt.estimated_tokens <= budget {
                return Ok(prompt);
            }
        }
        if elidable > 0 {
            let fits = |keep: usize| {
                let p = attempt(&pack, Some(keep));
                (p.estimated_tokens <= budget).then_some(p)
            };
            if let Some(mut best) = fits(0) {
                let (mut lo, mut hi) = (0, elidable);
                while lo + 1 < hi {
                    let mid = lo + (hi - lo) / 2;
                    match fits(mid) {
                        Some(p) => {
                            lo = mid;
                            best = p;
                        }
                        None => hi = mid,
                    }
                }
                return Ok(best);
            }
            prompt = attempt(&pack, Some(0));
        }
        Err(PromptError::OverBudget { task, estimated: prompt.estimated_tokens, budget })
    }

    fn base_vars(pack: &ContextPack, file: &CodeFile) -> Vars {
        vec![
            ("repo_title", pack.repo_title.clone()),
            ("description", pack.description.clone()),
            ("topics", pack.topics_line()),
            ("readme", pack.readme_excerpt.clone()),
            ("file_tree", pack.tree_lines()),
            ("context", pack.render()),
            ("path", file.path.clone()),
            ("language", file.language.as_str().to_string()),
            ("line_count", file.line_count.to_string()),
        ]
    }

    fn headings(task: TaskKind) -> String {
        task.headings().iter().map(|h| format!("## {h}")).collect::<Vec<_>>().join("\n")
    }

    pub fn build_explain_file(&self, pack: &ContextPack, file: &CodeFile) -> Result<Prompt, PromptError> {
        let task = TaskKind::ExplainFile;
        let content = normalize_source(&file.content);
        let lines: Vec<&str> = content.lines().collect();
        let fence = fence_for(&[&content]);
        self.ladder(task, pack, lines.len(), |pack, keep| {
            let source = match keep {
                None => numbered(&lines, 1, lines.len()),
                Some(k) => source::numbered_elided(&lines, k - k / 2, k / 2),
            };
            let mut vars = Self::base_vars(pack, file);
            vars.extend([("fence", fence.clone()), ("source", source), ("headings", Self::headings(task))]);
            self.messages(task, &vars)
        })
    }

    pub fn build_explain_selection(
        &self,
        pack: &ContextPack,
        file: &CodeFile,
        sel: &SelectionSpan,
    ) -> Result<Prompt, PromptError> {
        let task = TaskKind::ExplainSelection;
        sel.validate(file.line_count)?;
        let content = normalize_source(&file.content);
        let lines: Vec<&str> = content.lines().collect();
        let selection = normalize_source(&sel.text);
        let fence = fence_for(&[&content, &selection]);
        let (start, end) = (sel.start_line as usize, sel.end_line as usize);
        let whole = start == 1 && end == lines.len();
        let w = self.limits.selection_window;
        let (from, to) = (start.saturating_sub(w).max(1), (end + w).min(lines.len()));
        let language = file.language.as_str();
        let window = format!(
            "\n\nSurrounding lines {from}-{to} of `{}` (numbered):\n{fence}{language}\n{}\n{fence}",
            file.path,
            numbered(&lines[from - 1..to], from, lines.len())
        );
        let note = if whole {
            "\n\nThe selection covers the entire file, so no surrounding lines are shown.".to_string()
        } else {
            String::new()
        };
        // Dropping the window is this prompt's last resort before failing.
        self.ladder(task, pack, 1, |pack, keep| {
            let mut vars = Self::base_vars(pack, file);
            let window = if whole || keep.is_some() { String::new() } else { window.clone() };
            vars.extend([
                ("fence", fence.clone()),
                ("selection", selection.clone()),
                ("selection_note", note.clone()),
                ("window", window),
                ("start_line", start.to_string()),
                ("end_line", end.to_string()),
                ("headings", Self::headings(task)),
            ]);
            self.messages(task, &vars)
        })
    }

    pub fn build_refactor(&self, pack: &ContextPack, file: &CodeFile) -> Result<Prompt, PromptError> {
        let task = TaskKind::Refactor;
        if file.content.trim().is_empty() {
            return Err(PromptError::EmptyInput(file.path.clone()));
        }
        let content = normalize_source(&file.content);
        let source = content.trim_end_matches('\n').to_string();
        let fence = fence_for(&[&content]);
        // A refactor needs the whole file, so the source is never elided.
        self.ladder(task, pack, 0, |pack, _| {
            let mut vars = Self::base_vars(pack, file);
            vars.extend([("fence", fence.clone()), ("source", source.clone())]);
            self.messages(task, &vars)
        })
    }

    /// Chunks of the file's source sized so each quality prompt fits.
    pub fn quality_chunks(&self, file: &CodeFile, report: &QualityReport) -> Result<Vec<SourceChunk>, PromptError> {
        let task = TaskKind::QualityAttributes;
        let content = normalize_source(&file.content);
        let fence = fence_for(&[&content]);
        let probe = self.quality_messages(file, report, &fence, "", "1", "1");
        let overhead: usize = probe.iter().map(|m| m.content.chars().count()).sum();
        // Room for wider chunk counters in the real render.
        let room = self.max_chars().saturating_sub(overhead + 16);
        chunk_lines(&content, room).map_err(|_| PromptError::OverBudget {
            task,
            estimated: (overhead + content.lines().map(|l| l.chars().count()).max().unwrap_or(0)).div_ceil(4),
            budget: self.limits.token_budget,
        })
    }

    fn quality_messages(
        &self,
        file: &CodeFile,
        report: &QualityReport,
        fence: &str,
        source: &str,
        index: &str,
        count: &str,
    ) -> Vec<PromptMessage> {
        let vars: Vars = vec![
            ("path", file.path.clone()),
            ("language", file.language.as_str().to_string()),
            ("line_count", file.line_count.to_string()),
            ("metrics_json", metrics_json(report)),
            ("categories", categories_list()),
            ("fence", fence.to_string()),
            ("source", source.to_string()),
            ("chunk_index", index.to_string()),
            ("chunk_count", count.to_string()),
        ];
        self.messages(TaskKind::QualityAttributes, &vars)
    }

    /// One prompt per chunk, in order.
    pub fn build_quality(&self, file: &CodeFile, report: &QualityReport) -> Result<Vec<Prompt>, PromptError> {
        let task = TaskKind::QualityAttributes;
        let chunks = self.quality_chunks(file, report)?;
        let fence = fence_for(&[&normalize_source(&file.content)]);
        let total_lines = file.line_count;
        chunks
            .iter()
            .map(|chunk| {
                let source = if chunk.text.is_empty() { "(empty file)".to_string() } else { chunk.numbered(total_lines) };
                let messages = self.quality_messages(
                    file,
                    report,
                    &fence,
                    &source,
                    &chunk.index.to_string(),
                    &chunk.count.to_string(),
                );
                let prompt = Prompt::new(task, messages);
                if prompt.estimated_tokens > self.limits.token_budget {
                    return Err(PromptError::OverBudget {
                        task,
                        estimated: prompt.estimated_tokens,
                        budget: self.limits.token_budget,
                    });
                }
                Ok(prompt)
            })
            .collect()
    }

    pub fn build_chat(&self, chat: &ChatContext, user_msg: &str) -> Result<Prompt, PromptError> {
        let task = TaskKind::ChatTurn;
        let user_msg = normalize_source(user_msg);
        if user_msg.trim().is_empty() {
            return Err(PromptError::EmptyMessage);
        }
        let keep = self.limits.chat_exchanges * 2;
        let mut turns: &[ChatTurn] = &chat.turns[chat.turns.len().saturating_sub(keep)..];
        while turns.first().is_some_and(|t| t.role != Role::User) {
            turns = &turns[1..];
        }
        let mut digest_text = chat
            .digest
            .as_ref()
            .map(|d| context::cut_at_line(&d.text, self.limits.digest_char_max).trim_end().to_string())
            .unwrap_or_else(|| "No analysis has been run yet.".to_string());
        let budget = self.limits.token_budget;
        loop {
            let prompt = self.chat_prompt(chat, &digest_text, turns, &user_msg);
            if prompt.estimated_tokens <= budget {
                return Ok(prompt);
            }
            if turns.len() >= 2 {
                turns = &turns[2..];
            } else if !turns.is_empty() {
                turns = &[];
            } else if !digest_text.is_empty() {
                let half = digest_text.chars().count() / 2;
                digest_text = context::cut_at_line(&digest_text, half).trim_end().to_string();
            } else {
                return Err(PromptError::OverBudget { task, estimated: prompt.estimated_tokens, budget });
            }
        }
    }

    fn chat_prompt(&self, chat: &ChatContext, digest: &str, turns: &[ChatTurn], user_msg: &str) -> Prompt {
        let task = TaskKind::ChatTurn;
        let (context, title) = match &chat.pack {
            Some(pack) => (pack.render(), pack.repo_title.clone()),
            None => (String::new(), String::new()),
        };
        let path = chat
            .digest
            .as_ref()
            .map(|d| d.path.clone())
            .or_else(|| chat.pack.as_ref().map(|p| p.focus_path.clone()))
            .unwrap_or_default();
        let history: String = turns
            .iter()
            .map(|t| format!("{}: {}\n", t.role.as_str(), t.text))
            .collect();
        let vars: Vars = vec![
            ("repo_title", title),
            ("context", context),
            ("path", path),
            ("task", chat.digest.as_ref().map_or("none", |d| d.task.as_str()).to_string()),
            ("feature_digest", digest.to_string()),
            ("history", history),
        ];
        let mut messages = self.messages(task, &vars);
        messages[1].role = Role::System;
        for t in turns {
            messages.push(PromptMessage::new(t.role, t.text.clone()));
        }
        messages.push(PromptMessage::new(Role::User, user_msg));
        Prompt::new(task, messages)
    }
}

/// The report's deterministic metrics as pretty JSON, reals with 2 decimals.
pub fn metrics_json(report: &QualityReport) -> String {
    let s = |v: &str| serde_json::to_string(v).expect("strings serialize");
    let h = &report.halstead;
    format!(
        "{{\n  \"path\": {},\n  \"language\": {},\n  \"sloc\": {},\n  \"cyclomatic_complexity\": {},\n  \
         \"halstead\": {{\"distinct_operators\": {}, \"distinct_operands\": {}, \"total_operators\": {}, \"total_operands\": {}}},\n  \
         \"halstead_volume\": {:.2},\n  \"maintainability_index\": {:.2},\n  \"mi_band\": {},\n  \"mi_variant\": {}\n}}",
        s(&report.path),
        s(report.language.as_str()),
        report.sloc,
        report.cyclomatic_complexity,
        h.distinct_operators,
        h.distinct_operands,
        h.total_operators,
        h.total_operands,
        report.halstead_volume,
        report.maintainability_index,
        s(&report.mi_band.to_string()),
        s(&report.mi_variant),
    )
}

fn categories_list() -> String {
    VulnerabilityCategory::ALL
        .iter()
        .map(|c| format!("- {}", c.name()))
        .collect::<Vec<_>>()
        .join("\n")
}
