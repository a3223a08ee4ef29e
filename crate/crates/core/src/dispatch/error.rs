use std::fmt;

use serde::{Deserialize, Serialize};

use crate::inference::{EndpointError, InferenceError};
use crate::prompt::PromptError;
use crate::repo::{RepoError, SelectionError};

/// Stable error codes of the HTTP API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiErrorCode {
    UrlNotRecognized,
    RepoNotFound,
    FileNotFound,
    FileTooLarge,
    RateLimited,
    InferenceTimeout,
    RetriesExhausted,
    SelectionOutOfRange,
    SessionNotFound,
    MalformedRequest,
    /// The code host or inference provider failed in a way no retry fixes.
    UpstreamUnavailable,
    InternalError,
}

impl ApiErrorCode {
    pub const ALL: [ApiErrorCode; 12] = [
        Self::UrlNotRecognized,
        Self::RepoNotFound,
        Self::FileNotFound,
        Self::FileTooLarge,
        Self::RateLimited,
        Self::InferenceTimeout,
        Self::RetriesExhausted,
        Self::SelectionOutOfRange,
        Self::SessionNotFound,
        Self::MalformedRequest,
        Self::UpstreamUnavailable,
        Self::InternalError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::UrlNotRecognized => "url_not_recognized",
            Self::RepoNotFound => "repo_not_found",
            Self::FileNotFound => "file_not_found",
            Self::FileTooLarge => "file_too_large",
            Self::RateLimited => "rate_limited",
            Self::InferenceTimeout => "inference_timeout",
            Self::RetriesExhausted => "retries_exhausted",
            Self::SelectionOutOfRange => "selection_out_of_range",
            Self::SessionNotFound => "session_not_found",
            Self::MalformedRequest => "malformed_request",
            Self::UpstreamUnavailable => "upstream_unavailable",
            Self::InternalError => "internal_error",
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            Self::UrlNotRecognized | Self::MalformedRequest => 400,
            Self::RepoNotFound | Self::FileNotFound | Self::SessionNotFound => 404,
            Self::FileTooLarge => 413,
            Self::SelectionOutOfRange => 422,
            Self::RateLimited => 429,
            Self::InternalError => 500,
            Self::RetriesExhausted | Self::UpstreamUnavailable => 502,
            Self::InferenceTimeout => 504,
        }
    }

    pub fn retryable(self) -> bool {
        matches!(self, Self::RateLimited | Self::InferenceTimeout | Self::RetriesExhausted | Self::UpstreamUnavailable)
    }
}

impl fmt::Display for ApiErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: ApiErrorCode,
    pub message: String,
    pub retryable: bool,
}

impl ApiError {
    pub fn new(code: ApiErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), retryable: code.retryable() }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(ApiErrorCode::MalformedRequest, message)
    }

    pub fn session_not_found() -> Self {
        Self::new(ApiErrorCode::SessionNotFound, "no such chat session; run a feature first to start one")
    }

    pub fn http_status(&self) -> u16 {
        self.code.http_status()
    }
}

impl From<RepoError> for ApiError {
    fn from(e: RepoError) -> Self {
        use ApiErrorCode as C;
        let code = match &e {
            RepoError::UrlNotRecognized(_) | RepoError::InvalidRef(_) => C::UrlNotRecognized,
            RepoError::RepoNotFound(_) => C::RepoNotFound,
            RepoError::FileNotFound(_) => C::FileNotFound,
            RepoError::FileTooLarge { .. } => C::FileTooLarge,
            RepoError::BinaryFile(_) => C::MalformedRequest,
            RepoError::RateLimited { .. } => C::RateLimited,
            RepoError::Transport(_) => return Self::new(C::UpstreamUnavailable, "the code host could not be reached"),
        };
        Self::new(code, e.to_string())
    }
}

impl From<SelectionError> for ApiError {
    fn from(e: SelectionError) -> Self {
        let code = match e {
            SelectionError::Malformed => ApiErrorCode::MalformedRequest,
            SelectionError::OutOfRange { .. } => ApiErrorCode::SelectionOutOfRange,
        };
        Self::new(code, e.to_string())
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Selection(s) => s.into(),
            PromptError::EmptyInput(_) | PromptError::EmptyMessage => Self::malformed(e.to_string()),
            PromptError::OverBudget { .. } => Self::new(ApiErrorCode::FileTooLarge, e.to_string()),
            PromptError::Template(_) => Self::new(ApiErrorCode::InternalError, "prompt templates are misconfigured"),
        }
    }
}

impl From<InferenceError> for ApiError {
    /// Provider messages are summarized, never passed through.
    fn from(e: InferenceError) -> Self {
        use ApiErrorCode as C;
        match e {
            InferenceError::Timeout => Self::new(C::InferenceTimeout, "the inference provider did not answer in time"),
            InferenceError::RetriesExhausted { attempts, last } => {
                let why = match last {
                    EndpointError::Timeout => "timed out".to_string(),
                    EndpointError::Status { status, .. } => format!("answered HTTP {status}"),
                    EndpointError::Transport(_) => "could not be reached".to_string(),
                    EndpointError::Malformed(_) => "sent an unusable reply".to_string(),
                };
                Self::new(C::RetriesExhausted, format!("inference failed after {attempts} attempts; the provider {why}"))
            }
            InferenceError::ProviderRejected { status, .. } => {
                Self::new(C::UpstreamUnavailable, format!("the inference provider rejected the request (HTTP {status})"))
            }
            InferenceError::InvalidConfig(_) => Self::new(C::InternalError, "inference is misconfigured"),
        }
    }
}
