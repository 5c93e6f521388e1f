use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CandidateSet, FinishReason};
use crate::sampler::prompt::ChatMessage;

/// Everything a backend may need to produce one generation. Remote backends
/// use the messages and decoding parameters; the mock uses the identity
/// fields.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub query_id: &'a str,
    pub sample_index: u32,
    pub candidates: &'a CandidateSet,
    pub messages: &'a [ChatMessage],
    pub model: &'a str,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub raw_text: String,
    /// `usage.completion_tokens` as reported by the server.
    pub endpoint_token_count: Option<i64>,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Rate limits, 5xx responses, timeouts, refused connections.
    #[error("transient failure: {0}")]
    Transient(String),
    /// The server refused the request (auth, bad parameters).
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

pub trait GenerationBackend: Sync {
    /// Human-readable endpoint name used in error messages.
    fn describe(&self) -> String;

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationResult, BackendError>;

    /// `n` choices for the same prompt. Results are in choice order and
    /// receive sample indices `request.sample_index ..`.
    fn generate_n(
        &self,
        request: &GenerationRequest<'_>,
        n: u32,
    ) -> Result<Vec<GenerationResult>, BackendError> {
        (0..n)
            .map(|i| {
                self.generate(&GenerationRequest {
                    sample_index: request.sample_index + i,
                    ..request.clone()
                })
            })
            .collect()
    }
}

/// Exponential backoff for transient failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.max(1.0).powi(retry as i32);
        Duration::from_millis(ms.min(self.max_backoff_ms as f64) as u64)
    }

    /// Runs `op`, retrying transient errors. Returns the final result and the
    /// number of retries spent.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> (Result<T, BackendError>, u32) {
        let mut retries = 0;
        loop {
            match op() {
                Err(e) if e.is_transient() && retries < self.max_retries => {
                    log::debug!("retrying after {e}");
                    std::thread::sleep(self.backoff(retries));
                    retries += 1;
                }
                other => return (other, retries),
            }
        }
    }
}
