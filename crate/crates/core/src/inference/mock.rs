use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{fingerprint, Completion, CompletionEndpoint, EndpointError, FinishReason, ModelConfig};
use crate::prompt::{Prompt, TaskKind};

pub const FALLBACK_REPLY: &str = "[mock] no scripted reply for this prompt";

/// A canned reply. Every condition that is set must hold; `contains` is
/// matched against the last user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub reply: String,
}

impl MockRule {
    fn matches(&self, prompt: &Prompt, print: &str) -> bool {
        self.task.is_none_or(|t| t == prompt.task)
            && self.fingerprint.as_deref().is_none_or(|f| f == print)
            && self.contains.as_deref().is_none_or(|c| prompt.last_user_text().contains(c))
    }
}

/// Scheduled failure, consumed one per call before any reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    RateLimited,
    ServerError,
    BadRequest,
    /// Never answers; the gateway's timeout ends the attempt.
    Hang,
}

/// Serializable mock configuration, as used by `--mock-script`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub failures: Vec<MockFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub always_fail: Option<MockFailure>,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Deterministic scripted endpoint: identical prompts get identical text.
#[derive(Debug)]
pub struct MockEndpoint {
    rules: Vec<MockRule>,
    fallback: String,
    delay: Duration,
    failures: Mutex<VecDeque<MockFailure>>,
    always_fail: Option<MockFailure>,
    calls: AtomicUsize,
    seen: Mutex<Vec<Prompt>>,
}

impl Default for MockEndpoint {
    fn default() -> Self {
        Self::new()
    }
}

impl MockEndpoint {
    pub fn new() -> Self {
        Self {
            rules: Vec::new(),
            fallback: FALLBACK_REPLY.to_string(),
            delay: Duration::ZERO,
            failures: Mutex::new(VecDeque::new()),
            always_fail: None,
            calls: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn from_script(script: MockScript) -> Self {
        let mut mock = Self::new().with_delay(Duration::from_millis(script.delay_ms));
        mock.rules = script.rules;
        if let Some(f) = script.fallback {
            mock.fallback = f;
        }
        mock.failures = Mutex::new(script.failures.into());
        mock.always_fail = script.always_fail;
        mock
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_task_reply(self, task: TaskKind, reply: impl Into<String>) -> Self {
        self.with_rule(MockRule { task: Some(task), fingerprint: None, contains: None, reply: reply.into() })
    }

    pub fn with_contains_reply(self, needle: impl Into<String>, reply: impl Into<String>) -> Self {
        self.with_rule(MockRule { task: None, fingerprint: None, contains: Some(needle.into()), reply: reply.into() })
    }

    pub fn with_fingerprint_reply(self, print: impl Into<String>, reply: impl Into<String>) -> Self {
        self.with_rule(MockRule { task: None, fingerprint: Some(print.into()), contains: None, reply: reply.into() })
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = text.into();
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_failures(self, schedule: impl IntoIterator<Item = MockFailure>) -> Self {
        self.failures.lock().expect("mock poisoned").extend(schedule);
        self
    }

    pub fn failing_always(mut self, failure: MockFailure) -> Self {
        self.always_fail = Some(failure);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received, in arrival order.
    pub fn prompts(&self) -> Vec<Prompt> {
        self.seen.lock().expect("mock poisoned").clone()
    }

    pub fn reply_for(&self, prompt: &Prompt) -> &str {
        let print = fingerprint(prompt);
        self.rules
            .iter()
            .find(|r| r.matches(prompt, &print))
            .map_or(self.fallback.as_str(), |r| r.reply.as_str())
    }
}

fn status(status: u16, message: &str) -> EndpointError {
    EndpointError::Status { status, message: message.to_string(), retry_after: None }
}

#[async_trait]
impl CompletionEndpoint for MockEndpoint {
    async fn send(&self, prompt: &Prompt, _config: &ModelConfig) -> Result<Completion, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().expect("mock poisoned").push(prompt.clone());
        let failure = self.failures.lock().expect("mock poisoned").pop_front().or(self.always_fail);
        match failure {
            Some(MockFailure::RateLimited) => return Err(status(429, "rate limited")),
            Some(MockFailure::ServerError) => return Err(status(500, "internal error")),
            Some(MockFailure::BadRequest) => return Err(status(400, "bad request")),
            Some(MockFailure::Hang) => std::future::pending::<()>().await,
            None => {}
        }
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        Ok(Completion { text: self.reply_for(prompt).to_string(), finish_reason: FinishReason::Stop })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{PromptMessage, Role};

    fn prompt(task: TaskKind, text: &str) -> Prompt {
        Prompt::new(task, vec![PromptMessage::new(Role::System, "s"), PromptMessage::new(Role::User, text)])
    }

    #[test]
    fn first_matching_rule_wins() {
        let target = prompt(TaskKind::Refactor, "refactor src/a.c");
        let mock = MockEndpoint::new()
            .with_fingerprint_reply(fingerprint(&target), "exact")
            .with_contains_reply("src/b.c", "by path")
            .with_task_reply(TaskKind::Refactor, "by task");
        assert_eq!(mock.reply_for(&target), "exact");
        assert_eq!(mock.reply_for(&prompt(TaskKind::Refactor, "refactor src/b.c")), "by path");
        assert_eq!(mock.reply_for(&prompt(TaskKind::Refactor, "other")), "by task");
        assert_eq!(mock.reply_for(&prompt(TaskKind::ChatTurn, "other")), FALLBACK_REPLY);
    }

    #[test]
    fn combined_conditions() {
        let rule = MockRule { task: Some(TaskKind::ChatTurn), fingerprint: None, contains: Some("x".into()), reply: "r".into() };
        let mock = MockEndpoint::new().with_rule(rule);
        assert_eq!(mock.reply_for(&prompt(TaskKind::ChatTurn, "x")), "r");
        assert_eq!(mock.reply_for(&prompt(TaskKind::Refactor, "x")), FALLBACK_REPLY);
    }

    #[test]
    fn script_roundtrip() {
        let text = r#"{"rules":[{"task":"refactor","reply":"```c\nint x;\n```"}],"delay_ms":5,"failures":["rate_limited","hang"]}"#;
        let script = MockScript::from_json(text).unwrap();
        assert_eq!(script.failures, [MockFailure::RateLimited, MockFailure::Hang]);
        let again = MockScript::from_json(&serde_json::to_string(&script).unwrap()).unwrap();
        assert_eq!(again, script);
        let mock = MockEndpoint::from_script(script);
        assert_eq!(mock.reply_for(&prompt(TaskKind::Refactor, "")), "```c\nint x;\n```");
    }
}
