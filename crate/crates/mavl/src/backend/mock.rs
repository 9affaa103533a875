//! Deterministic scripted backend for offline pipeline tests.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    apply_stop_sequences, prompt_digest, BackendError, CompletionBackend, CompletionRequest,
    CompletionResult, FinishReason,
};

/// How a script rule decides whether it applies to a request's prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "pattern", rename_all = "snake_case")]
pub enum PromptMatcher {
    /// Matches when the sha-256 hex digest of the prompt equals `pattern`.
    ExactDigest(String),
    Prefix(String),
    Substring(String),
}

impl PromptMatcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            PromptMatcher::ExactDigest(digest) => prompt_digest(prompt) == *digest,
            PromptMatcher::Prefix(prefix) => prompt.starts_with(prefix.as_str()),
            PromptMatcher::Substring(needle) => prompt.contains(needle.as_str()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: PromptMatcher,
    pub response: String,
}

/// On-disk script format consumed by `BackendConfig::mock_script`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub fallback: Option<String>,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

/// Scripted completion backend. Requests resolve to the first matching rule
/// in insertion order; unmatched requests use the fallback or fail. In
/// strict mode a request matching more than one rule is a configuration
/// error.
pub struct MockBackend {
    rules: Vec<ScriptRule>,
    fallback: Option<String>,
    strict: bool,
    calls: AtomicU64,
    log: Mutex<Vec<String>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self {
            rules: Vec::new(),
            fallback: None,
            strict: false,
            calls: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::new()
        }
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    pub fn add_rule(&mut self, matcher: PromptMatcher, response: impl Into<String>) {
        self.rules.push(ScriptRule {
            matcher,
            response: response.into(),
        });
    }

    /// Script an exact-digest rule computed from the full prompt text.
    pub fn script_prompt(&mut self, prompt: &str, response: impl Into<String>) {
        self.add_rule(PromptMatcher::ExactDigest(prompt_digest(prompt)), response);
    }

    pub fn script_substring(&mut self, needle: impl Into<String>, response: impl Into<String>) {
        self.add_rule(PromptMatcher::Substring(needle.into()), response);
    }

    pub fn script_prefix(&mut self, prefix: impl Into<String>, response: impl Into<String>) {
        self.add_rule(PromptMatcher::Prefix(prefix.into()), response);
    }

    pub fn from_script_file(path: &Path) -> Result<Self, BackendError> {
        let raw = std::fs::read_to_string(path)?;
        let script: ScriptFile = serde_json::from_str(&raw)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
        Ok(Self::from_script(script))
    }

    pub fn from_script(script: ScriptFile) -> Self {
        Self {
            rules: script.rules,
            fallback: script.fallback,
            strict: script.strict,
            calls: AtomicU64::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Total completions served, cache hits excluded by construction.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received so far, in arrival order.
    pub fn requests(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl CompletionBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().unwrap().push(request.prompt.clone());

        let mut matching = self
            .rules
            .iter()
            .filter(|rule| rule.matcher.matches(&request.prompt));
        let first = matching.next();
        if self.strict && matching.next().is_some() {
            return Err(BackendError::AmbiguousScript {
                digest: request.digest(),
            });
        }
        let raw = match first {
            Some(rule) => rule.response.as_str(),
            None => self
                .fallback
                .as_deref()
                .ok_or_else(|| BackendError::NoScript {
                    digest: request.digest(),
                })?,
        };
        let text = apply_stop_sequences(raw, &request.stop_sequences)
            .trim()
            .to_string();
        Ok(CompletionResult {
            text,
            finish_reason: FinishReason::Stop,
            latency_ms: 0,
        })
    }

    fn model_name(&self) -> &str {
        "mock"
    }
}
