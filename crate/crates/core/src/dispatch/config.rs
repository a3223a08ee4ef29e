use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use crate::inference::{CompletionEndpoint, Gateway, HttpEndpoint, MockEndpoint, MockScript, ModelConfig, DEFAULT_MAX_IN_FLIGHT};
use crate::metrics::Analyzer;
use crate::prompt::{PromptFactory, PromptLimits, TemplateSet};
use crate::repo::{FixtureTransport, HttpTransport, RepoConfig, RepoService, Transport};

use super::session::SESSION_TTL;
use super::Dispatcher;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8787";

/// Everything needed to assemble a [`Dispatcher`], usually read from the
/// `REPOLENS_*` environment variables.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: String,
    pub cors_origins: Vec<String>,
    pub session_ttl: Duration,
    pub repo: RepoConfig,
    /// Serve repository data from recorded fixtures instead of the network.
    pub fixtures_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub max_in_flight: usize,
    pub mock_inference: bool,
    pub mock_script: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.to_string(),
            cors_origins: Vec::new(),
            session_ttl: SESSION_TTL,
            repo: RepoConfig::default(),
            fixtures_dir: None,
            model: ModelConfig::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            mock_inference: false,
            mock_script: None,
            templates_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError(format!("{key}={value:?} is not valid")))
}

fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" | "" => Ok(false),
        _ => Err(ConfigError(format!("{key}={value:?} is not a boolean"))),
    }
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Reads the configuration through `get`; unset keys keep their defaults.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let mut c = Self::default();
        if let Some(v) = get("REPOLENS_LISTEN") {
            c.listen = v.trim().to_string();
        }
        if let Some(v) = get("REPOLENS_CORS_ORIGINS") {
            c.cors_origins = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        }
        if let Some(v) = get("REPOLENS_SESSION_TTL_SECS") {
            c.session_ttl = Duration::from_secs(parse("REPOLENS_SESSION_TTL_SECS", &v)?);
        }
        if let Some(v) = get("REPOLENS_GITHUB_API_URL") {
            c.repo.api_base_url = v.trim().to_string();
        }
        c.repo.token = get("REPOLENS_GITHUB_TOKEN").or_else(|| get("GITHUB_TOKEN"));
        if let Some(v) = get("REPOLENS_REPO_CACHE_TTL_SECS") {
            c.repo.cache_ttl = Duration::from_secs(parse("REPOLENS_REPO_CACHE_TTL_SECS", &v)?);
        }
        c.fixtures_dir = get("REPOLENS_FIXTURES").map(PathBuf::from);
        if let Some(v) = get("REPOLENS_INFERENCE_BASE_URL") {
            c.model.base_url = v.trim().to_string();
        }
        c.model.api_key = get("REPOLENS_INFERENCE_API_KEY").or_else(|| get("OPENAI_API_KEY"));
        if let Some(v) = get("REPOLENS_MODEL") {
            c.model.model_name = v.trim().to_string();
        }
        if let Some(v) = get("REPOLENS_TEMPERATURE") {
            c.model.temperature = parse("REPOLENS_TEMPERATURE", &v)?;
        }
        if let Some(v) = get("REPOLENS_MAX_OUTPUT_TOKENS") {
            c.model.max_output_tokens = parse("REPOLENS_MAX_OUTPUT_TOKENS", &v)?;
        }
        if let Some(v) = get("REPOLENS_INFERENCE_TIMEOUT_SECS") {
            c.model.request_timeout = Duration::from_secs_f64(parse("REPOLENS_INFERENCE_TIMEOUT_SECS", &v)?);
        }
        if let Some(v) = get("REPOLENS_MAX_RETRIES") {
            c.model.max_retries = parse("REPOLENS_MAX_RETRIES", &v)?;
        }
        if let Some(v) = get("REPOLENS_MAX_IN_FLIGHT") {
            c.max_in_flight = parse("REPOLENS_MAX_IN_FLIGHT", &v)?;
        }
        if let Some(v) = get("REPOLENS_MOCK_INFERENCE") {
            c.mock_inference = flag("REPOLENS_MOCK_INFERENCE", &v)?;
        }
        c.mock_script = get("REPOLENS_MOCK_SCRIPT").map(PathBuf::from);
        if c.mock_script.is_some() {
            c.mock_inference = true;
        }
        c.templates_dir = get("REPOLENS_TEMPLATES_DIR").map(PathBuf::from);
        c.model.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(c)
    }

    pub fn endpoint(&self) -> Result<Arc<dyn CompletionEndpoint>, ConfigError> {
        if !self.mock_inference {
            let http = HttpEndpoint::new().map_err(|e| ConfigError(e.to_string()))?;
            return Ok(Arc::new(http));
        }
        let mock = match &self.mock_script {
            Some(path) => MockEndpoint::from_script(MockScript::load(path).map_err(|e| ConfigError(e.to_string()))?),
            None => MockEndpoint::new(),
        };
        Ok(Arc::new(mock))
    }

    pub fn transport(&self) -> Result<Arc<dyn Transport>, ConfigError> {
        Ok(match &self.fixtures_dir {
            Some(dir) => Arc::new(FixtureTransport::new(dir)),
            None => Arc::new(
                HttpTransport::new(&self.repo.api_base_url, self.repo.token.clone(), Duration::from_secs(20))
                    .map_err(|e| ConfigError(e.to_string()))?,
            ),
        })
    }

    pub fn build(&self) -> Result<Dispatcher, ConfigError> {
        self.build_with(self.endpoint()?)
    }

    /// Like [`build`](Self::build) with a caller-supplied inference endpoint.
    pub fn build_with(&self, endpoint: Arc<dyn CompletionEndpoint>) -> Result<Dispatcher, ConfigError> {
        let templates = match &self.templates_dir {
            Some(dir) => TemplateSet::from_dir(dir).map_err(|e| ConfigError(e.to_string()))?,
            None => TemplateSet::builtin(),
        };
        let gateway = Gateway::new(endpoint, self.model.clone(), self.max_in_flight).map_err(|e| ConfigError(e.to_string()))?;
        Ok(Dispatcher::new(
            RepoService::new(self.transport()?, self.repo.clone()),
            PromptFactory::new(templates, PromptLimits::default()),
            Analyzer::default(),
            gateway,
            self.session_ttl,
        ))
    }
}
