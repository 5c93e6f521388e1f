//! Client for OpenAI-style `chat/completions` endpoints.

use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FinishReason;
use crate::parser::ParserConfig;
use crate::sampler::backend::{BackendError, GenerationBackend, GenerationRequest, GenerationResult};
use crate::sampler::prompt::ChatMessage;

#[derive(Debug, Error)]
pub enum HttpSetupError {
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingApiKey(String),
    #[error("cannot build HTTP client: {0}")]
    Client(#[from] reqwest::Error),
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub url: String,
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    /// Used to re-join a separately returned reasoning field with the answer.
    pub markers: ParserConfig,
}

pub struct HttpBackend {
    client: Client,
    url: String,
    api_key: Option<String>,
    markers: ParserConfig,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
    reasoning_content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    completion_tokens: Option<i64>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, HttpSetupError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| HttpSetupError::MissingApiKey(var.clone()))?,
            ),
            None => None,
        };
        let client = Client::builder().timeout(config.timeout).build()?;
        Ok(Self {
            client,
            url: config.url,
            api_key,
            markers: config.markers,
        })
    }

    fn post(
        &self,
        request: &GenerationRequest<'_>,
        n: Option<u32>,
    ) -> Result<(ChatResponse, u64), BackendError> {
        let body = ChatRequest {
            model: request.model,
            messages: request.messages,
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
            seed: request.seed,
            n,
        };
        let started = Instant::now();
        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                BackendError::Transient(format!("{}: {e}", self.url))
            } else {
                BackendError::Rejected(format!("{}: {e}", self.url))
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            let detail = response.text().unwrap_or_default();
            let msg = format!("{} returned {status}: {}", self.url, detail.trim());
            return Err(if is_transient_status(status) {
                BackendError::Transient(msg)
            } else {
                BackendError::Rejected(msg)
            });
        }
        let text = response
            .text()
            .map_err(|e| BackendError::Transient(format!("{}: reading body: {e}", self.url)))?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Malformed(format!("{}: {e}", self.url)))?;
        if parsed.choices.is_empty() {
            return Err(BackendError::Malformed(format!("{}: no choices", self.url)));
        }
        Ok((parsed, started.elapsed().as_millis() as u64))
    }

    fn to_result(&self, choice: Choice, tokens: Option<i64>, latency_ms: u64) -> GenerationResult {
        let content = choice.message.content.unwrap_or_default();
        let raw_text = match choice.message.reasoning_content {
            Some(reasoning) => format!(
                "{}{reasoning}{}{content}",
                self.markers.think_open, self.markers.think_close
            ),
            None => content,
        };
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("stop") | Some("eos") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        };
        GenerationResult {
            raw_text,
            endpoint_token_count: tokens,
            finish_reason,
            latency_ms,
        }
    }
}

fn is_transient_status(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
}

impl GenerationBackend for HttpBackend {
    fn describe(&self) -> String {
        self.url.clone()
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, BackendError> {
        let (mut resp, latency) = self.post(request, None)?;
        let tokens = resp.usage.and_then(|u| u.completion_tokens);
        Ok(self.to_result(resp.choices.swap_remove(0), tokens, latency))
    }

    fn generate_n(
        &self,
        request: &GenerationRequest<'_>,
        n: u32,
    ) -> Result<Vec<GenerationResult>, BackendError> {
        let (resp, latency) = self.post(request, Some(n))?;
        if resp.choices.len() != n as usize {
            return Err(BackendError::Malformed(format!(
                "{}: asked for {n} choices, got {}",
                self.url,
                resp.choices.len()
            )));
        }
        // usage covers all choices together, so per-choice counts are unknown
        // unless there is only one.
        let tokens = if n == 1 {
            resp.usage.and_then(|u| u.completion_tokens)
        } else {
            None
        };
        Ok(resp
            .choices
            .into_iter()
            .map(|c| self.to_result(c, tokens, latency))
            .collect())
    }
}
