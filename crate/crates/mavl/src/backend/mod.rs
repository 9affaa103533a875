//! Uniform completion interface over language models: a scripted mock for
//! offline tests and an HTTP client for OpenAI-compatible completion
//! servers, with an optional append-only response cache.

mod cache;
mod http;
mod mock;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheRecord, CachedBackend, ResponseCache};
pub use http::HttpBackend;
pub use mock::{MockBackend, PromptMatcher, ScriptFile, ScriptRule};

/// Env var holding the bearer token for HTTP backends.
pub const API_KEY_ENV: &str = "MAVL_API_KEY";

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_RETRY_BACKOFF_MS: u64 = 500;

/// Decoding defaults per request purpose.
pub const ANSWER_MAX_TOKENS: u32 = 16;
pub const KNOWLEDGE_MAX_TOKENS: u32 = 256;
pub const PLAN_MAX_TOKENS: u32 = 32;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("max_tokens must be at least 1")]
    ZeroMaxTokens,
    #[error("temperature must be non-negative")]
    NegativeTemperature,
    #[error("no script rule matches request {digest}")]
    NoScript { digest: String },
    #[error("multiple script rules match request {digest} in strict mode")]
    AmbiguousScript { digest: String },
    #[error("backend unreachable for request {digest}: {reason}")]
    Unreachable { digest: String, reason: String },
    #[error("server returned status {status} for request {digest}")]
    Server { digest: String, status: u16 },
    #[error("request {digest} timed out")]
    Timeout { digest: String },
    #[error("malformed server response for request {digest}: {reason}")]
    MalformedResponse { digest: String, reason: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("cache i/o failure: {0}")]
    Cache(#[from] std::io::Error),
    #[error("cannot parse script file: {0}")]
    Script(String),
}

/// One completion request. Construct through the per-purpose profiles so
/// decoding defaults stay consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    pub fn new(
        prompt: impl Into<String>,
        max_tokens: u32,
        temperature: f64,
        stop_sequences: Vec<String>,
    ) -> Result<Self, BackendError> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        if max_tokens == 0 {
            return Err(BackendError::ZeroMaxTokens);
        }
        if temperature < 0.0 {
            return Err(BackendError::NegativeTemperature);
        }
        Ok(Self {
            prompt,
            max_tokens,
            temperature,
            stop_sequences,
        })
    }

    /// One-line answer continuation: short, greedy, stops at a newline or
    /// a block separator.
    pub fn answer(prompt: impl Into<String>) -> Result<Self, BackendError> {
        Self::new(
            prompt,
            ANSWER_MAX_TOKENS,
            0.0,
            vec!["\n".to_string(), "=====".to_string()],
        )
    }

    /// Multi-line knowledge generation: stops only at a block separator.
    pub fn knowledge(prompt: impl Into<String>) -> Result<Self, BackendError> {
        Self::new(prompt, KNOWLEDGE_MAX_TOKENS, 0.0, vec!["=====".to_string()])
    }

    /// Planner output: a single action list line.
    pub fn plan(prompt: impl Into<String>) -> Result<Self, BackendError> {
        Self::new(
            prompt,
            PLAN_MAX_TOKENS,
            0.0,
            vec!["\n".to_string(), "=====".to_string()],
        )
    }

    /// Stable digest over all request fields, used as the cache key and for
    /// error correlation.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("request serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Digest over a bare prompt string; script files use this for exact rules.
pub fn prompt_digest(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    /// Continuation text, stop sequence excluded, whitespace-trimmed.
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
}

/// A shareable completion backend. Implementations must be safe to call
/// from many threads at once.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;

    /// Model identifier recorded in cache entries.
    fn model_name(&self) -> &str;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }

    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

/// Truncate `text` at the earliest occurrence of any stop sequence.
pub(crate) fn apply_stop_sequences(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min();
    match cut {
        Some(idx) => text[..idx].to_string(),
        None => text.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// Backend selection and transport settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Append-only response cache file; enables resumable runs.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    /// Script file for the mock kind.
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_max_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_retry_backoff_ms() -> u64 {
    DEFAULT_RETRY_BACKOFF_MS
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_retries: DEFAULT_MAX_RETRIES,
            retry_backoff_ms: DEFAULT_RETRY_BACKOFF_MS,
            cache: None,
            mock_script: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http
            && (self.endpoint_url.is_none() || self.model_name.is_none())
        {
            return Err(BackendError::Config(
                "http backend requires endpoint_url and model_name".into(),
            ));
        }
        if self.timeout_ms == 0 || self.retry_backoff_ms == 0 {
            return Err(BackendError::Config(
                "timeout_ms and retry_backoff_ms must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Build the configured backend, wrapped in the response cache when a
    /// cache path is set.
    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, BackendError> {
        self.validate()?;
        let inner: Arc<dyn CompletionBackend> = match self.kind {
            BackendKind::Mock => match &self.mock_script {
                Some(path) => Arc::new(MockBackend::from_script_file(path)?),
                None => Arc::new(MockBackend::new()),
            },
            BackendKind::Http => Arc::new(HttpBackend::new(self)?),
        };
        match &self.cache {
            Some(path) => Ok(Arc::new(CachedBackend::open(inner, path)?)),
            None => Ok(inner),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_invariants() {
        assert!(matches!(
            CompletionRequest::new("", 16, 0.0, vec![]),
            Err(BackendError::EmptyPrompt)
        ));
        assert!(matches!(
            CompletionRequest::new("p", 0, 0.0, vec![]),
            Err(BackendError::ZeroMaxTokens)
        ));
        assert!(matches!(
            CompletionRequest::new("p", 1, -0.5, vec![]),
            Err(BackendError::NegativeTemperature)
        ));
    }

    #[test]
    fn profiles_carry_documented_defaults() {
        let answer = CompletionRequest::answer("p").unwrap();
        assert_eq!(answer.max_tokens, 16);
        assert_eq!(answer.stop_sequences, vec!["\n", "====="]);
        let knowledge = CompletionRequest::knowledge("p").unwrap();
        assert_eq!(knowledge.max_tokens, 256);
        assert_eq!(knowledge.stop_sequences, vec!["====="]);
        let plan = CompletionRequest::plan("p").unwrap();
        assert_eq!(plan.max_tokens, 32);
        assert_eq!(plan.temperature, 0.0);
    }

    #[test]
    fn digest_distinguishes_profiles_over_same_prompt() {
        let a = CompletionRequest::answer("p").unwrap();
        let k = CompletionRequest::knowledge("p").unwrap();
        assert_ne!(a.digest(), k.digest());
        assert_eq!(a.digest(), CompletionRequest::answer("p").unwrap().digest());
    }

    #[test]
    fn stop_truncation_picks_earliest_hit() {
        let stops = vec!["\n".to_string(), "=====".to_string()];
        assert_eq!(apply_stop_sequences("elephant\nmore", &stops), "elephant");
        assert_eq!(apply_stop_sequences("a=====b\nc", &stops), "a");
        assert_eq!(apply_stop_sequences("clean", &stops), "clean");
    }

    #[test]
    fn http_config_requires_endpoint_and_model() {
        let mut config = BackendConfig::mock();
        config.kind = BackendKind::Http;
        assert!(config.validate().is_err());
        config.endpoint_url = Some("http://localhost:1".into());
        config.model_name = Some("m".into());
        assert!(config.validate().is_ok());
    }
}
