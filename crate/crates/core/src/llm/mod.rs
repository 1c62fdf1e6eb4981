//! Uniform, rate-limited, cached access to chat/vision model backends.
//!
//! Every stage that needs a model goes through [`Client`], which layers a
//! persistent content-addressed response cache, a token-bucket admission
//! limiter, and retry-with-backoff over a pluggable [`ChatBackend`]. With the
//! deterministic mock backends, any pipeline run is a pure function of its
//! inputs, config, and seed.

mod cache;
mod hash;
mod http;
mod limiter;
mod mock;
mod scripted;

pub use cache::ResponseCache;
pub use hash::request_hash;
pub use http::{HttpBackend, Transport, TransportResponse, UreqTransport};
pub use limiter::{RateLimiter, TokenBucket};
pub use mock::MockBackend;
pub use scripted::ScriptedBackend;

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

/// Message author within a chat request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    User,
    Assistant,
}

/// One request message: text plus optional image references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user_with_images(text: impl Into<String>, images: Vec<String>) -> Self {
        ChatMessage {
            role: ChatRole::User,
            text: text.into(),
            images,
        }
    }
}

/// Sampling parameters. Part of the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        // temperature 0 suits judging and scoring; generation stages override
        GenParams {
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }
}

impl GenParams {
    pub fn creative() -> Self {
        GenParams {
            temperature: 0.7,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// A complete chat request. Hashing covers every field, so distinct models or
/// parameters never share cache entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub params: GenParams,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, params: GenParams) -> Self {
        ChatRequest {
            model: model.into(),
            system: None,
            messages,
            params,
        }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest(
                "messages must be nonempty".into(),
            ));
        }
        if !self.params.temperature.is_finite() || self.params.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.params.temperature
            )));
        }
        if self.params.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Retry policy for transient failures (timeout / 5xx / 429).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1000,
        }
    }
}

/// Connection settings for a remote backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the credential.
    pub credential_env: String,
    pub model: String,
    pub max_in_flight: usize,
    pub requests_per_second: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Send images inline as base64 instead of by URI.
    #[serde(default)]
    pub images_as_base64: bool,
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.retry.max_attempts < 1 {
            return Err(BackendError::InvalidRequest(
                "retry.max_attempts must be >= 1".into(),
            ));
        }
        if self.max_in_flight < 1 {
            return Err(BackendError::InvalidRequest(
                "max_in_flight must be >= 1".into(),
            ));
        }
        if self.requests_per_second.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(BackendError::InvalidRequest(
                "requests_per_second must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("transient failures exhausted after {attempts} attempts: {last}")]
    TransientExhausted { attempts: u32, last: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("mock backend has no fixture for request {digest}")]
    MockMiss { digest: String },
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
    #[error("backend error: {0}")]
    Other(String),
}

/// A chat completion backend. Implementations must be safe to share across
/// worker threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
    fn name(&self) -> &str;
}

/// Sleep hook so retry backoff is testable without wall-clock delays.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// The client every stage uses: cache, admission control, retry, backend.
pub struct Client {
    backend: Box<dyn ChatBackend>,
    cache: Option<ResponseCache>,
    limiter: Option<RateLimiter>,
    retry: RetryPolicy,
    sleeper: Box<dyn Sleeper>,
}

impl Client {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Client {
            backend,
            cache: None,
            limiter: None,
            retry: RetryPolicy::default(),
            sleeper: Box::new(ThreadSleeper),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    #[cfg(test)]
    fn with_sleeper(mut self, sleeper: Box<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Complete a request. Identical requests are served byte-identically
    /// from the cache; transient failures are retried with exponential
    /// backoff and full jitter up to `retry.max_attempts`.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let digest = request_hash(request);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&digest)? {
                return Ok(text);
            }
        }
        let _permit = self.limiter.as_ref().map(|l| l.admit());
        let text = self.complete_with_retry(request, &digest)?;
        if let Some(cache) = &self.cache {
            cache.put(&digest, &text)?;
        }
        Ok(text)
    }

    fn complete_with_retry(
        &self,
        request: &ChatRequest,
        digest: &str,
    ) -> Result<String, BackendError> {
        use rand::Rng;
        let mut last = String::new();
        for attempt in 0..self.retry.max_attempts {
            match self.backend.complete(request) {
                Ok(text) => return Ok(text),
                Err(BackendError::Transient(msg)) => {
                    last = msg;
                    if attempt + 1 < self.retry.max_attempts {
                        // full jitter over the exponential envelope; jitter
                        // affects timing only, never output bytes
                        let cap = self.retry.base_delay_ms.saturating_mul(1 << attempt);
                        let mut rng = crate::util::derive_rng(attempt as u64, digest);
                        let delay = rng.gen_range(0..=cap);
                        self.sleeper.sleep(Duration::from_millis(delay));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(BackendError::TransientExhausted {
            attempts: self.retry.max_attempts,
            last,
        })
    }
}
