//! Blocking HTTP client for OpenAI-compatible completion servers.
//!
//! Speaks `POST {endpoint_url}/v1/completions` with body fields `model`,
//! `prompt`, `max_tokens`, `temperature`, `stop`; the completion is
//! `choices[0].text`. Retries transport failures and 429/5xx responses.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    apply_stop_sequences, BackendConfig, BackendError, CompletionBackend, CompletionRequest,
    CompletionResult, FinishReason, API_KEY_ENV,
};

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

pub struct HttpBackend {
    completions_url: String,
    model: String,
    max_retries: u32,
    backoff: Duration,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let endpoint = config
            .endpoint_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("endpoint_url missing".into()))?
            .trim_end_matches('/')
            .to_string();
        let model = config
            .model_name
            .clone()
            .ok_or_else(|| BackendError::Config("model_name missing".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self {
            completions_url: format!("{endpoint}/v1/completions"),
            model,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(config.retry_backoff_ms),
            api_key: std::env::var(API_KEY_ENV).ok(),
            client,
        })
    }

    fn send_once(
        &self,
        request: &CompletionRequest,
        digest: &str,
    ) -> Result<CompletionResult, BackendError> {
        let body = WireRequest {
            model: &self.model,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            stop: &request.stop_sequences,
        };
        let started = Instant::now();
        let mut builder = self.client.post(&self.completions_url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    digest: digest.to_string(),
                }
            } else {
                BackendError::Unreachable {
                    digest: digest.to_string(),
                    reason: e.to_string(),
                }
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Server {
                digest: digest.to_string(),
                status: status.as_u16(),
            });
        }
        let parsed: WireResponse =
            response
                .json()
                .map_err(|e| BackendError::MalformedResponse {
                    digest: digest.to_string(),
                    reason: e.to_string(),
                })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse {
                digest: digest.to_string(),
                reason: "empty choices".into(),
            })?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("error") => FinishReason::Error,
            _ => FinishReason::Stop,
        };
        // Servers exclude the stop sequence; enforce it anyway.
        let text = apply_stop_sequences(&choice.text, &request.stop_sequences)
            .trim()
            .to_string();
        Ok(CompletionResult {
            text,
            finish_reason,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn retryable(error: &BackendError) -> bool {
        match error {
            BackendError::Unreachable { .. } | BackendError::Timeout { .. } => true,
            BackendError::Server { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let digest = request.digest();
        let mut last_error = None;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff);
            }
            match self.send_once(request, &digest) {
                Ok(result) => return Ok(result),
                Err(e) if Self::retryable(&e) => last_error = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_error.expect("at least one attempt ran"))
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}
