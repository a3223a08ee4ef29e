//! Chat-completions inference behind one interface, with retries, backoff
//! and a global in-flight limit. [`MockEndpoint`] makes everything testable
//! without a provider.

mod http;
mod mock;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::prompt::Prompt;

pub use self::http::HttpEndpoint;
pub use self::mock::{MockEndpoint, MockFailure, MockRule, MockScript, FALLBACK_REPLY};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const MAX_RETRIES_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; each retry doubles it.
    pub retry_base_delay: Duration,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".to_string(),
            model_name: "gpt-4o".to_string(),
            api_key: None,
            temperature: 0.2,
            max_output_tokens: 4096,
            request_timeout: Duration::from_secs(30),
            max_retries: 2,
            retry_base_delay: Duration::from_secs(1),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.to_string()));
        if self.request_timeout.is_zero() {
            return bad("request_timeout must be positive");
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return bad("max_retries must be at most 3");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must be within [0, 2]");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency: Duration,
    pub attempt_count: u32,
}

/// One failed attempt as reported by an endpoint.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndpointError {
    #[error("request timed out")]
    Timeout,
    #[error("provider answered HTTP {status}")]
    Status { status: u16, message: String, retry_after: Option<Duration> },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed provider reply: {0}")]
    Malformed(String),
}

impl EndpointError {
    pub fn is_transient(&self) -> bool {
        match self {
            EndpointError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferenceError {
    #[error("inference timed out")]
    Timeout,
    #[error("provider rejected the request (HTTP {status}): {message}")]
    ProviderRejected { status: u16, message: String },
    #[error("inference failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: EndpointError },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}

#[async_trait]
pub trait CompletionEndpoint: Send + Sync {
    async fn send(&self, prompt: &Prompt, config: &ModelConfig) -> Result<Completion, EndpointError>;
}

/// Stable hex digest of a prompt's messages.
pub fn fingerprint(prompt: &Prompt) -> String {
    let mut hasher = Sha256::new();
    for m in &prompt.messages {
        hasher.update(m.role.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(m.content.as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}

/// Retrying, rate-limited front of a [`CompletionEndpoint`].
pub struct Gateway {
    endpoint: Arc<dyn CompletionEndpoint>,
    config: ModelConfig,
    limiter: Arc<Semaphore>,
}

impl Gateway {
    pub fn new(endpoint: Arc<dyn CompletionEndpoint>, config: ModelConfig, max_in_flight: usize) -> Result<Self, InferenceError> {
        config.validate()?;
        if max_in_flight == 0 {
            return Err(InferenceError::InvalidConfig("max_in_flight must be positive".into()));
        }
        Ok(Self { endpoint, config, limiter: Arc::new(Semaphore::new(max_in_flight)) })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn backoff(&self, retry: u32, hint: Option<Duration>) -> Duration {
        let base = self.config.retry_base_delay.saturating_mul(1 << retry.min(16));
        let jitter = rand::rng().random_range(1.0..1.25);
        let delay = base.mul_f64(jitter);
        match hint {
            Some(h) => delay.max(h.min(Duration::from_secs(60))),
            None => delay,
        }
    }

    pub async fn complete(&self, prompt: &Prompt) -> Result<InferenceResult, InferenceError> {
        let started = Instant::now();
        let attempts_allowed = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.limiter.acquire().await.expect("limiter is never closed");
                tokio::time::timeout(self.config.request_timeout, self.endpoint.send(prompt, &self.config))
                    .await
                    .unwrap_or(Err(EndpointError::Timeout))
            };
            let err = match outcome {
                Ok(c) => {
                    tracing::debug!(task = %prompt.task, attempt, "inference succeeded");
                    return Ok(InferenceResult {
                        text: c.text,
                        finish_reason: c.finish_reason,
                        latency: started.elapsed(),
                        attempt_count: attempt,
                    });
                }
                Err(e) => e,
            };
            tracing::warn!(task = %prompt.task, attempt, error = %err, "inference attempt failed");
            if !err.is_transient() {
                let EndpointError::Status { status, message, .. } = err else { unreachable!("only statuses are final") };
                return Err(InferenceError::ProviderRejected { status, message });
            }
            if attempt >= attempts_allowed {
                return Err(match err {
                    EndpointError::Timeout if attempts_allowed == 1 => InferenceError::Timeout,
                    last => InferenceError::RetriesExhausted { attempts: attempt, last },
                });
            }
            let hint = match &err {
                EndpointError::Status { retry_after, .. } => *retry_after,
                _ => None,
            };
            tokio::time::sleep(self.backoff(attempt - 1, hint)).await;
        }
    }
}
