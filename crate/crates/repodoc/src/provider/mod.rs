//! Text-generation providers: a common trait with usage accounting, a
//! deterministic mock for tests and offline runs, and an HTTP backend.

mod http;
mod mock;
pub mod prompts;

pub use http::{HttpConfig, HttpProvider};
pub use mock::{embed_text, MockProvider};

use crate::util::whitespace_tokens;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use std::time::Duration;
use thiserror::Error;

/// Operation labels recorded in the usage ledger and used for routing in the
/// mock provider.
pub mod ops {
    pub const COMPONENT_DOC: &str = "component_doc";
    pub const MODULE_DOC: &str = "module_doc";
    pub const README: &str = "readme";
    pub const CLUSTER: &str = "cluster";
    pub const CONCEPT: &str = "concept";
    pub const JUDGE: &str = "judge";
    pub const EMBED: &str = "embed";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    Network,
    RateLimit,
    MalformedResponse,
    Precondition,
}

#[derive(Debug, Clone, Error)]
#[error("{kind:?} error: {message}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        ProviderError {
            kind,
            message: message.into(),
        }
    }

    /// Network and rate-limit failures are transient and worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(
            self.kind,
            ProviderErrorKind::Network | ProviderErrorKind::RateLimit
        )
    }
}

/// A completion request. Defaults follow the generation settings used
/// throughout: temperature 0.7, max_tokens 4096.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.7,
            max_tokens: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::new(
                ProviderErrorKind::Precondition,
                "empty prompt",
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::new(
                ProviderErrorKind::Precondition,
                format!("temperature {} out of range", self.temperature),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One provider call, as recorded in the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub operation: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub wall_time_ms: u64,
}

/// Aggregate usage for a run: per-call records plus totals and cost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub records: Vec<UsageRecord>,
}

impl UsageLedger {
    pub fn calls(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.completion_tokens).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens() + self.completion_tokens()
    }

    /// Dollar cost at a flat per-million-token rate.
    pub fn cost(&self, price_per_million_tokens: f64) -> f64 {
        self.total_tokens() as f64 / 1_000_000.0 * price_per_million_tokens
    }

    pub fn record(&mut self, record: UsageRecord) {
        self.records.push(record);
    }
}

/// A pluggable text-generation backend.
pub trait Provider: Send + Sync {
    fn name(&self) -> &'static str;
    fn complete(
        &self,
        operation: &str,
        request: &CompletionRequest,
    ) -> Result<Completion, ProviderError>;
    /// Embed texts into fixed-dimension vectors (one per input).
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
    /// Snapshot of the usage ledger so far.
    fn usage(&self) -> UsageLedger;
}

/// Retry policy for transient provider failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    /// Total attempts, including the first (so at most N-1 retries).
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    /// No-sleep policy for tests.
    pub fn immediate() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::ZERO,
        }
    }
}

/// Run `call` with exponential backoff on transient errors. Non-transient
/// errors and exhausted attempts propagate.
pub fn call_with_retry<T>(
    policy: RetryPolicy,
    mut call: impl FnMut() -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match call() {
            Ok(value) => return Ok(value),
            Err(err) if err.is_transient() && attempt < policy.max_attempts => {
                let delay = policy.base_delay * 2u32.saturating_pow(attempt - 1);
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                log::debug!("retrying after {:?} error (attempt {attempt})", err.kind);
            }
            Err(err) => return Err(err),
        }
    }
}

/// Wraps any provider with transparent retries on transient failures.
pub struct RetryingProvider<P> {
    inner: P,
    policy: RetryPolicy,
}

impl<P: Provider> RetryingProvider<P> {
    pub fn new(inner: P, policy: RetryPolicy) -> Self {
        RetryingProvider { inner, policy }
    }

    pub fn into_inner(self) -> P {
        self.inner
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Provider> Provider for RetryingProvider<P> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn complete(
        &self,
        operation: &str,
        request: &CompletionRequest,
    ) -> Result<Completion, ProviderError> {
        call_with_retry(self.policy, || self.inner.complete(operation, request))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        call_with_retry(self.policy, || self.inner.embed(texts))
    }

    fn usage(&self) -> UsageLedger {
        self.inner.usage()
    }
}

/// Shared ledger state for provider implementations.
pub(crate) struct LedgerCell(Mutex<UsageLedger>);

impl LedgerCell {
    pub fn new() -> Self {
        LedgerCell(Mutex::new(UsageLedger::default()))
    }

    pub fn record(&self, operation: &str, prompt_tokens: u64, completion_tokens: u64, ms: u64) {
        self.0.lock().expect("ledger lock").record(UsageRecord {
            operation: operation.to_string(),
            prompt_tokens,
            completion_tokens,
            wall_time_ms: ms,
        });
    }

    pub fn snapshot(&self) -> UsageLedger {
        self.0.lock().expect("ledger lock").clone()
    }
}

/// Token accounting used when a backend does not report usage.
pub(crate) fn counted_tokens(prompt: &str, completion: &str) -> (u64, u64) {
    (whitespace_tokens(prompt), whitespace_tokens(completion))
}
