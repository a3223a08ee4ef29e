use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{Completion, CompletionEndpoint, EndpointError, FinishReason, ModelConfig};
use crate::prompt::{Prompt, PromptMessage};

/// OpenAI-compatible `POST {base_url}/chat/completions`.
pub struct HttpEndpoint {
    client: reqwest::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [PromptMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: Option<WireMessage>,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireError {
    error: Option<WireErrorBody>,
}

#[derive(Deserialize)]
struct WireErrorBody {
    message: Option<String>,
}

const MESSAGE_MAX: usize = 300;

impl HttpEndpoint {
    pub fn new() -> Result<Self, EndpointError> {
        let client = reqwest::Client::builder()
            .user_agent(concat!("repolens/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| EndpointError::Transport(e.to_string()))?;
        Ok(Self { client })
    }

    pub fn url(base_url: &str) -> String {
        format!("{}/chat/completions", base_url.trim_end_matches('/'))
    }
}

fn error_message(body: &[u8]) -> String {
    let message = serde_json::from_slice::<WireError>(body)
        .ok()
        .and_then(|e| e.error)
        .and_then(|e| e.message)
        .unwrap_or_else(|| String::from_utf8_lossy(body).into_owned());
    message.chars().take(MESSAGE_MAX).collect()
}

/// Parses a reply body into a completion.
pub(crate) fn parse_reply(body: &[u8]) -> Result<Completion, EndpointError> {
    let reply: WireReply = serde_json::from_slice(body).map_err(|e| EndpointError::Malformed(e.to_string()))?;
    let choice = reply.choices.into_iter().next().ok_or_else(|| EndpointError::Malformed("no choices".into()))?;
    let text = choice.message.and_then(|m| m.content).unwrap_or_default();
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    if finish_reason == FinishReason::Stop && text.is_empty() {
        return Err(EndpointError::Malformed("empty completion".into()));
    }
    Ok(Completion { text, finish_reason })
}

#[async_trait]
impl CompletionEndpoint for HttpEndpoint {
    async fn send(&self, prompt: &Prompt, config: &ModelConfig) -> Result<Completion, EndpointError> {
        let body = WireRequest {
            model: &config.model_name,
            messages: &prompt.messages,
            temperature: config.temperature,
            max_tokens: config.max_output_tokens,
        };
        let mut request = self.client.post(Self::url(&config.base_url)).timeout(config.request_timeout).json(&body);
        if let Some(key) = &config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| {
            if e.is_timeout() {
                EndpointError::Timeout
            } else {
                EndpointError::Transport(e.without_url().to_string())
            }
        })?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let bytes = response.bytes().await.map_err(|e| {
            if e.is_timeout() {
                EndpointError::Timeout
            } else {
                EndpointError::Transport(e.without_url().to_string())
            }
        })?;
        if !(200..300).contains(&status) {
            return Err(EndpointError::Status { status, message: error_message(&bytes), retry_after });
        }
        parse_reply(&bytes)
    }
}
