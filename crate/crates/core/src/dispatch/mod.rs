//! Routes feature and chat requests through the pipeline and owns chat
//! sessions.

mod config;
mod error;
mod session;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use chrono::Utc;
use futures::future::join_all;
use serde::{Deserialize, Serialize};

use crate::inference::{FinishReason, Gateway, InferenceResult};
use crate::metrics::{Analyzer, QualityReport};
use crate::prompt::{ChatContext, ChatTurn, FeatureDigest, Prompt, PromptError, PromptFactory, PromptMessage, Role, TaskKind};
use crate::repo::{parse_repo_url, CodeFile, RepoRef, RepoService, SelectionSpan};
use crate::response::{
    degraded_quality, merge_chunk_findings, parse_explanation, parse_quality_chunk, parse_refactor, ChunkResponse,
    FeatureResponse, FormatError,
};

pub use self::config::{ConfigError, ServiceConfig, DEFAULT_LISTEN};
pub use self::error::{ApiError, ApiErrorCode};
pub use self::session::{new_session_id, ChatSession, SessionEntry, SessionStore, SESSION_TTL};

const PATH_MAX: usize = 1024;
const CHAT_MESSAGE_MAX: usize = 16 * 1024;

const FENCE_CORRECTION: &str = "Your reply did not contain a fenced code block. Reply again with the complete \
refactored file in a single fenced code block, followed by a `## Changes` list.";
const JSON_CORRECTION: &str = "Your reply was not the requested JSON object. Reply again with only that JSON \
object, no prose and no code fence.";
const EMPTY_CORRECTION: &str = "Your reply was empty. Please answer the previous request.";
const CUT_OFF_WARNING: &str = "the model's reply was cut off at the output token limit";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRequest {
    pub task: TaskKind,
    pub repo_url: String,
    #[serde(default)]
    pub file_path: Option<String>,
    #[serde(default)]
    pub selection: Option<SelectionSpan>,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub session_id: String,
    pub message: String,
}

/// A request that passed shape validation.
struct Checked {
    repo: RepoRef,
    path: String,
}

fn check_path(path: &str) -> Result<String, ApiError> {
    let path = path.trim().trim_matches('/');
    let bad = |why: &str| Err(ApiError::malformed(format!("file_path {why}")));
    if path.is_empty() {
        return bad("is empty");
    }
    if path.len() > PATH_MAX {
        return bad("is too long");
    }
    if path.chars().any(|c| c.is_control() || c == '\\') {
        return bad("contains control characters or backslashes");
    }
    if path.split('/').any(|s| s.is_empty() || s == "." || s == "..") {
        return bad("must be a plain repository-relative path");
    }
    Ok(path.to_string())
}

impl FeatureRequest {
    fn check(&self) -> Result<Checked, ApiError> {
        if self.task == TaskKind::ChatTurn {
            return Err(ApiError::malformed("chat messages go to the chat endpoint"));
        }
        let parsed = parse_repo_url(&self.repo_url)?;
        let path = match (&self.file_path, &parsed.path) {
            (Some(p), _) => p.as_str(),
            (None, Some(p)) => p.as_str(),
            (None, None) => return Err(ApiError::malformed("file_path is required")),
        };
        let path = check_path(path)?;
        match (self.task, &self.selection) {
            (TaskKind::ExplainSelection, None) => return Err(ApiError::malformed("selection is required")),
            (TaskKind::ExplainSelection, Some(sel)) => sel.check_shape()?,
            (_, Some(_)) => return Err(ApiError::malformed("selection is only accepted by explain_selection")),
            (_, None) => {}
        }
        Ok(Checked { repo: parsed.repo, path })
    }
}

struct Timer {
    request_id: u64,
    task: TaskKind,
    started: Instant,
    stage: Instant,
}

impl Timer {
    fn new(request_id: u64, task: TaskKind) -> Self {
        let now = Instant::now();
        Self { request_id, task, started: now, stage: now }
    }

    fn lap(&mut self, stage: &'static str) {
        let ms = self.stage.elapsed().as_secs_f64() * 1000.0;
        tracing::info!(request_id = self.request_id, task = %self.task, stage, ms, "stage done");
        self.stage = Instant::now();
    }

    fn total(&self) -> Duration {
        self.started.elapsed()
    }
}

pub struct Dispatcher {
    repos: RepoService,
    prompts: PromptFactory,
    analyzer: Analyzer,
    gateway: Gateway,
    sessions: SessionStore,
    next_request: AtomicU64,
}

impl Dispatcher {
    pub fn new(repos: RepoService, prompts: PromptFactory, analyzer: Analyzer, gateway: Gateway, session_ttl: Duration) -> Self {
        Self { repos, prompts, analyzer, gateway, sessions: SessionStore::new(session_ttl), next_request: AtomicU64::new(1) }
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn repos(&self) -> &RepoService {
        &self.repos
    }

    pub fn session_gc(&self, now: chrono::DateTime<Utc>) -> usize {
        let evicted = self.sessions.gc(now);
        if evicted > 0 {
            tracing::info!(evicted, remaining = self.sessions.len(), "session sweep");
        }
        evicted
    }

    pub async fn handle_feature(&self, req: FeatureRequest) -> Result<FeatureResponse, ApiError> {
        let request_id = self.next_request.fetch_add(1, Ordering::Relaxed);
        let mut timer = Timer::new(request_id, req.task);
        let result = self.feature(&req, &mut timer).await;
        match &result {
            Ok(r) => tracing::info!(request_id, task = %req.task, ms = timer.total().as_secs_f64() * 1000.0, warnings = r.warnings.len(), "feature done"),
            Err(e) => tracing::warn!(request_id, task = %req.task, code = %e.code, "feature failed"),
        }
        result
    }

    async fn feature(&self, req: &FeatureRequest, timer: &mut Timer) -> Result<FeatureResponse, ApiError> {
        let checked = req.check()?;
        let session = match &req.session_id {
            Some(id) => Some(self.sessions.get(id).ok_or_else(ApiError::session_not_found)?),
            None => None,
        };
        let (ctx, file) = tokio::try_join!(
            self.repos.fetch_repo_context(&checked.repo),
            self.repos.fetch_file(&checked.repo, &checked.path)
        )?;
        timer.lap("fetch");

        let pack = self.prompts.build_context_pack(&ctx, &file.path);
        let mut response = match req.task {
            TaskKind::ExplainFile => {
                let prompt = self.prompts.build_explain_file(&pack, &file)?;
                timer.lap("prompt");
                self.explain(prompt, req.task, timer).await?
            }
            TaskKind::ExplainSelection => {
                let sel = req.selection.as_ref().expect("checked");
                let prompt = self.prompts.build_explain_selection(&pack, &file, sel)?;
                timer.lap("prompt");
                self.explain(prompt, req.task, timer).await?
            }
            TaskKind::Refactor => {
                let prompt = self.prompts.build_refactor(&pack, &file)?;
                timer.lap("prompt");
                self.refactor(prompt, &file, timer).await?
            }
            TaskKind::QualityAttributes => self.quality(&file, timer).await?,
            TaskKind::ChatTurn => unreachable!("rejected by check"),
        };

        let digest = FeatureDigest { task: req.task, path: file.path.clone(), text: response.body_markdown.clone() };
        let now = Utc::now();
        let (id, entry) = match session {
            Some(entry) => (req.session_id.clone().expect("looked up"), entry),
            None => self.sessions.create(ctx.repo.clone(), now),
        };
        {
            let mut s = entry.lock().await;
            s.last_feature = Some(digest);
            s.repo = ctx.repo.clone();
            s.pack = Some(pack);
        }
        entry.touch(now);
        response.session_id = Some(id);
        Ok(response)
    }

    async fn complete(&self, prompt: &Prompt, timer: &mut Timer) -> Result<InferenceResult, ApiError> {
        let result = self.gateway.complete(prompt).await?;
        timer.lap("inference");
        Ok(result)
    }

    fn corrected(prompt: &Prompt, reply: &str, correction: &str) -> Prompt {
        let mut messages = prompt.messages.clone();
        messages.push(PromptMessage::new(Role::Assistant, reply));
        messages.push(PromptMessage::new(Role::User, correction));
        Prompt::new(prompt.task, messages)
    }

    fn cut_off(result: &InferenceResult, response: &mut FeatureResponse) {
        if result.finish_reason == FinishReason::Length {
            response.warnings.push(CUT_OFF_WARNING.to_string());
        }
    }

    async fn explain(&self, prompt: Prompt, task: TaskKind, timer: &mut Timer) -> Result<FeatureResponse, ApiError> {
        let mut result = self.complete(&prompt, timer).await?;
        let mut parsed = parse_explanation(&result.text, task);
        if parsed == Err(FormatError::EmptyResponse) {
            result = self.complete(&Self::corrected(&prompt, "", EMPTY_CORRECTION), timer).await?;
            parsed = parse_explanation(&result.text, task);
        }
        let mut response = parsed.map_err(|_| no_usable_reply("an explanation"))?;
        timer.lap("parse");
        Self::cut_off(&result, &mut response);
        Ok(response)
    }

    async fn refactor(&self, prompt: Prompt, file: &CodeFile, timer: &mut Timer) -> Result<FeatureResponse, ApiError> {
        let mut result = self.complete(&prompt, timer).await?;
        let mut parsed = parse_refactor(&result.text, file.language);
        if parsed.is_err() {
            let correction = if result.text.trim().is_empty() { EMPTY_CORRECTION } else { FENCE_CORRECTION };
            result = self.complete(&Self::corrected(&prompt, &result.text, correction), timer).await?;
            parsed = parse_refactor(&result.text, file.language);
        }
        let mut response = parsed.map_err(|_| no_usable_reply("a fenced code block"))?;
        timer.lap("parse");
        Self::cut_off(&result, &mut response);
        Ok(response)
    }

    async fn quality(&self, file: &CodeFile, timer: &mut Timer) -> Result<FeatureResponse, ApiError> {
        let report = self.analyzer.analyze_file(file);
        timer.lap("analyze");
        let prompts = self.prompts.build_quality(file, &report)?;
        timer.lap("prompt");
        let count = prompts.len();
        let started = Instant::now();
        let parts = join_all(prompts.iter().enumerate().map(|(i, p)| self.quality_chunk(p, i + 1, count))).await;
        tracing::info!(request_id = timer.request_id, chunks = count, ms = started.elapsed().as_secs_f64() * 1000.0, "quality chunks done");
        timer.stage = Instant::now();
        let parts: Vec<ChunkOutcome> = parts.into_iter().collect::<Result<_, _>>()?;
        let response = merge_quality(&report, parts);
        timer.lap("parse");
        Ok(response)
    }

    async fn quality_chunk(&self, prompt: &Prompt, index: usize, count: usize) -> Result<ChunkOutcome, ApiError> {
        let first = self.gateway.complete(prompt).await?;
        let mut cut = first.finish_reason == FinishReason::Length;
        let parsed = match parse_quality_chunk(&first.text, index, count) {
            Ok(c) => Ok(c),
            Err(_) => {
                let retry = self.gateway.complete(&Self::corrected(prompt, &first.text, JSON_CORRECTION)).await?;
                cut = retry.finish_reason == FinishReason::Length;
                parse_quality_chunk(&retry.text, index, count)
            }
        };
        Ok(match parsed {
            Ok(mut chunk) => {
                if cut {
                    chunk.warnings.push(CUT_OFF_WARNING.to_string());
                }
                ChunkOutcome::Parsed(chunk)
            }
            Err(e) => ChunkOutcome::Failed(index, count, e),
        })
    }

    pub async fn handle_chat(&self, req: ChatRequest) -> Result<FeatureResponse, ApiError> {
        let request_id = self.next_request.fetch_add(1, Ordering::Relaxed);
        let mut timer = Timer::new(request_id, TaskKind::ChatTurn);
        let result = self.chat(&req, &mut timer).await;
        if let Err(e) = &result {
            tracing::warn!(request_id, code = %e.code, "chat failed");
        }
        result
    }

    async fn chat(&self, req: &ChatRequest, timer: &mut Timer) -> Result<FeatureResponse, ApiError> {
        let message = req.message.trim();
        if message.is_empty() {
            return Err(ApiError::malformed("message is empty"));
        }
        if message.chars().count() > CHAT_MESSAGE_MAX {
            return Err(ApiError::malformed(format!("message exceeds {CHAT_MESSAGE_MAX} characters")));
        }
        let entry = self.sessions.get(&req.session_id).ok_or_else(ApiError::session_not_found)?;
        entry.touch(Utc::now());
        // Held until the assistant turn is stored: turns of one session never interleave.
        let mut session = entry.lock().await;
        let ctx = ChatContext { pack: session.pack.clone(), digest: session.last_feature.clone(), turns: session.turns.clone() };
        let prompt = self.prompts.build_chat(&ctx, message).map_err(|e| match e {
            PromptError::OverBudget { .. } => ApiError::malformed("message does not fit the prompt budget"),
            other => other.into(),
        })?;
        let asked = Utc::now();
        timer.lap("prompt");
        let mut result = self.complete(&prompt, timer).await?;
        if result.text.trim().is_empty() {
            result = self.complete(&Self::corrected(&prompt, "", EMPTY_CORRECTION), timer).await?;
        }
        let answer = result.text.trim().to_string();
        if answer.is_empty() {
            return Err(no_usable_reply("an answer"));
        }
        let max_turns = self.prompts.limits().chat_exchanges * 2;
        session.push_exchange(
            ChatTurn { role: Role::User, text: message.to_string(), at: asked },
            ChatTurn { role: Role::Assistant, text: answer.clone(), at: Utc::now() },
            max_turns,
        );
        drop(session);
        entry.touch(Utc::now());
        let mut response = FeatureResponse::text(TaskKind::ChatTurn, answer);
        Self::cut_off(&result, &mut response);
        response.session_id = Some(req.session_id.clone());
        Ok(response)
    }
}

enum ChunkOutcome {
    Parsed(ChunkResponse),
    Failed(usize, usize, FormatError),
}

fn merge_quality(report: &QualityReport, parts: Vec<ChunkOutcome>) -> FeatureResponse {
    let count = parts.len();
    let failed = parts.iter().filter(|p| matches!(p, ChunkOutcome::Failed(..))).count();
    if failed == count {
        let why = match parts.first() {
            Some(ChunkOutcome::Failed(_, _, e)) => e.to_string(),
            _ => String::new(),
        };
        return degraded_quality(report, format!("vulnerability findings unavailable: {why}"));
    }
    let chunks = parts
        .into_iter()
        .map(|p| match p {
            ChunkOutcome::Parsed(c) => c,
            ChunkOutcome::Failed(index, count, e) => ChunkResponse {
                index,
                count,
                findings: Vec::new(),
                narrative: String::new(),
                warnings: vec![format!("findings for this chunk are unavailable: {e}")],
            },
        })
        .collect();
    merge_chunk_findings(report, chunks).unwrap_or_else(|e| degraded_quality(report, e.to_string()))
}

fn no_usable_reply(what: &str) -> ApiError {
    ApiError::new(ApiErrorCode::RetriesExhausted, format!("the model did not return {what}, even after a corrective retry"))
}
