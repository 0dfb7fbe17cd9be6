//! HTTP provider speaking the OpenAI-compatible chat/embeddings wire format.

use super::{
    counted_tokens, Completion, CompletionRequest, LedgerCell, Provider, ProviderError,
    ProviderErrorKind, UsageLedger,
};
use serde::Deserialize;
use serde_json::json;
use std::time::{Duration, Instant};

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub embed_model: String,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "http://localhost:8080/v1".to_string(),
            api_key: None,
            model: "default".to_string(),
            embed_model: "default-embed".to_string(),
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingRow>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
}

/// Remote provider; errors are classified so the retry layer can
/// distinguish transient failures from permanent ones.
pub struct HttpProvider {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    ledger: LedgerCell,
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Precondition, e.to_string()))?;
        Ok(HttpProvider {
            config,
            client,
            ledger: LedgerCell::new(),
        })
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<String, ProviderError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Network, e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::new(ProviderErrorKind::Network, e.to_string()))?;
        if status.is_success() {
            return Ok(text);
        }
        let kind = match status.as_u16() {
            429 => ProviderErrorKind::RateLimit,
            401 | 403 => ProviderErrorKind::Precondition,
            code if code >= 500 => ProviderErrorKind::Network,
            _ => ProviderErrorKind::MalformedResponse,
        };
        Err(ProviderError::new(
            kind,
            format!("status {status}: {}", text.chars().take(200).collect::<String>()),
        ))
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &'static str {
        "http"
    }

    fn complete(
        &self,
        operation: &str,
        request: &CompletionRequest,
    ) -> Result<Completion, ProviderError> {
        request.validate()?;
        let body = json!({
            "model": self.config.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        let started = Instant::now();
        let text = self.post("chat/completions", body)?;
        let wall_time_ms = started.elapsed().as_millis() as u64;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::new(ProviderErrorKind::MalformedResponse, e.to_string()))?;
        let content = parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| {
                ProviderError::new(ProviderErrorKind::MalformedResponse, "response has no choices")
            })?;
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (
                u.prompt_tokens,
                u.completion_tokens
                    .unwrap_or_else(|| counted_tokens(&request.prompt, &content).1),
            ),
            None => counted_tokens(&request.prompt, &content),
        };
        self.ledger
            .record(operation, prompt_tokens, completion_tokens, wall_time_ms);
        Ok(Completion {
            text: content,
            prompt_tokens,
            completion_tokens,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = json!({
            "model": self.config.embed_model,
            "input": texts,
        });
        let started = Instant::now();
        let text = self.post("embeddings", body)?;
        let wall_time_ms = started.elapsed().as_millis() as u64;
        let parsed: EmbeddingResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::new(ProviderErrorKind::MalformedResponse, e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(ProviderError::new(
                ProviderErrorKind::MalformedResponse,
                format!("expected {} embeddings, got {}", texts.len(), parsed.data.len()),
            ));
        }
        let tokens = parsed.usage.map(|u| u.prompt_tokens).unwrap_or_else(|| {
            texts.iter().map(|t| crate::util::whitespace_tokens(t)).sum()
        });
        self.ledger.record("embed", tokens, 0, wall_time_ms);
        Ok(parsed.data.into_iter().map(|row| row.embedding).collect())
    }

    fn usage(&self) -> UsageLedger {
        self.ledger.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ops, RetryPolicy, RetryingProvider};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Minimal HTTP/1.1 stub: serves the given (status, body) responses in
    /// order, one per connection, then stops.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                let mut content_length = 0usize;
                loop {
                    line.clear();
                    reader.read_line(&mut line).unwrap();
                    let trimmed = line.trim();
                    if trimmed.is_empty() {
                        break;
                    }
                    if let Some(value) = trimmed
                        .to_ascii_lowercase()
                        .strip_prefix("content-length:")
                        .map(str::trim)
                        .and_then(|v| v.parse::<usize>().ok())
                    {
                        content_length = value;
                    }
                }
                let mut request_body = vec![0u8; content_length];
                reader.read_exact(&mut request_body).unwrap();
                bodies.push(String::from_utf8_lossy(&request_body).into_owned());
                let reason = if status == 200 { "OK" } else { "Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn chat_body(content: &str) -> String {
        json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 5},
        })
        .to_string()
    }

    fn provider_for(base_url: String) -> HttpProvider {
        HttpProvider::new(HttpConfig {
            base_url,
            api_key: Some("test-key".into()),
            model: "stub-model".into(),
            embed_model: "stub-embed".into(),
            timeout: Duration::from_secs(5),
        })
        .unwrap()
    }

    #[test]
    fn completion_round_trip_records_server_usage() {
        let (url, handle) = stub_server(vec![(200, chat_body("generated doc"))]);
        let provider = provider_for(url);
        let c = provider
            .complete(ops::COMPONENT_DOC, &CompletionRequest::new("hello world"))
            .unwrap();
        assert_eq!(c.text, "generated doc");
        assert_eq!(c.prompt_tokens, 12);
        assert_eq!(c.completion_tokens, 5);
        let bodies = handle.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "stub-model");
        assert_eq!(sent["messages"][0]["content"], "hello world");
        assert_eq!(sent["max_tokens"], 4096);
        let ledger = provider.usage();
        assert_eq!(ledger.calls(), 1);
        assert_eq!(ledger.total_tokens(), 17);
    }

    #[test]
    fn rate_limit_then_success_is_retried() {
        let (url, handle) = stub_server(vec![
            (429, json!({"error": "slow down"}).to_string()),
            (200, chat_body("after retry")),
        ]);
        let provider = RetryingProvider::new(
            provider_for(url),
            RetryPolicy {
                max_attempts: 3,
                base_delay: Duration::from_millis(1),
            },
        );
        let c = provider
            .complete(ops::README, &CompletionRequest::new("p"))
            .unwrap();
        assert_eq!(c.text, "after retry");
        assert_eq!(handle.join().unwrap().len(), 2);
    }

    #[test]
    fn auth_failure_is_not_transient() {
        let (url, handle) = stub_server(vec![(401, json!({"error": "bad key"}).to_string())]);
        let provider = RetryingProvider::new(
            provider_for(url),
            RetryPolicy {
                max_attempts: 3,
                base_delay: Duration::from_millis(1),
            },
        );
        let err = provider
            .complete(ops::README, &CompletionRequest::new("p"))
            .unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::Precondition);
        // No retry happened: exactly one request reached the stub.
        assert_eq!(handle.join().unwrap().len(), 1);
    }

    #[test]
    fn malformed_json_is_reported() {
        let (url, _handle) = stub_server(vec![(200, "not json".to_string())]);
        let provider = provider_for(url);
        let err = provider
            .complete(ops::README, &CompletionRequest::new("p"))
            .unwrap_err();
        assert_eq!(err.kind, ProviderErrorKind::MalformedResponse);
    }

    #[test]
    fn embeddings_round_trip() {
        let body = json!({
            "data": [
                {"embedding": [0.1, 0.2], "index": 0},
                {"embedding": [0.3, 0.4], "index": 1},
            ],
            "usage": {"prompt_tokens": 7},
        })
        .to_string();
        let (url, handle) = stub_server(vec![(200, body)]);
        let provider = provider_for(url);
        let vectors = provider.embed(&["a".to_string(), "b".to_string()]).unwrap();
        assert_eq!(vectors, vec![vec![0.1, 0.2], vec![0.3, 0.4]]);
        let bodies = handle.join().unwrap();
        let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "stub-embed");
        assert_eq!(provider.usage().prompt_tokens(), 7);
    }
}
