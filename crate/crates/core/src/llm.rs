//! Chat-completion backends with transport retries, an in-flight request
//! bound, and the retry-until-valid assessment loop.
//!
//! Two wire dialects are supported: OpenAI-style `chat/completions` and
//! Gemini-style `generateContent`. A scripted mock backend plays back canned
//! replies for offline, deterministic runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::bundle::{read_jsonl_file, CueBundle, JsonlError};
use crate::prompt::{build_prompt, parse_llm_response, AssessmentResult, PromptConfig, PromptError, ResponseError};

const MAX_BACKOFF_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    OpenaiStyle,
    GeminiStyle,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "openai" | "openai_style" => Ok(Self::OpenaiStyle),
            "gemini" | "gemini_style" => Ok(Self::GeminiStyle),
            "mock" => Ok(Self::Mock),
            other => Err(format!("unknown backend kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub max_attempts: u32,
    pub request_timeout_s: f64,
    pub max_in_flight: usize,
    /// First transport-retry delay; doubles on each further retry.
    pub backoff_base_ms: u64,
    /// JSONL playback script for the mock kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o-mini".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            max_attempts: 3,
            request_timeout_s: 60.0,
            max_in_flight: 4,
            backoff_base_ms: 500,
            mock_script: None,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn gemini() -> Self {
        Self {
            kind: BackendKind::GeminiStyle,
            endpoint_url: "https://generativelanguage.googleapis.com/v1beta/models".into(),
            model_name: "gemini-2.0-flash".into(),
            api_key_env_var: "GEMINI_API_KEY".into(),
            ..Self::default()
        }
    }

    pub fn openai() -> Self {
        Self {
            kind: BackendKind::OpenaiStyle,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts < 1 {
            return Err("max_attempts must be >= 1".into());
        }
        if self.max_in_flight < 1 {
            return Err("max_in_flight must be >= 1".into());
        }
        if self.kind != BackendKind::Mock
            && !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0)
        {
            return Err("request_timeout_s must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("no valid response after {attempts} attempt(s): {last}")]
    InvalidAfterRetries { attempts: u32, last: ResponseError },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("loading mock script: {0}")]
    MockScript(#[from] JsonlError),
}

/// A single request to a backend.
#[derive(Debug, Clone, Default)]
pub struct CompletionRequest {
    pub prompt: String,
    pub utt_id: Option<String>,
    pub config_id: Option<String>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportFailure {
    /// Timeouts, connection resets and 5xx responses.
    Retryable(String),
    RateLimited,
    Auth(String),
    Fatal(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &CompletionRequest) -> Result<String, TransportFailure>;
}

/// Blocks callers once `limit` permits are taken.
struct Semaphore {
    in_use: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(limit: usize) -> Self {
        Self {
            in_use: Mutex::new(0),
            freed: Condvar::new(),
            limit,
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().unwrap();
        while *in_use >= self.limit {
            in_use = self.freed.wait(in_use).unwrap();
        }
        *in_use += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmClient {
    config: BackendConfig,
    transport: Box<dyn Transport>,
    permits: Semaphore,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("config", &self.config).finish()
    }
}

impl LlmClient {
    /// Builds the transport named by `config.kind`. Network kinds read the
    /// API key from the configured environment variable here, before any
    /// request is made.
    pub fn from_config(config: &BackendConfig) -> Result<Self, LlmError> {
        config.validate().map_err(LlmError::Config)?;
        let transport: Box<dyn Transport> = match config.kind {
            BackendKind::Mock => {
                let script = match &config.mock_script {
                    Some(path) => MockScript::load(path)?,
                    None => MockScript::default(),
                };
                Box::new(MockTransport::new(script))
            }
            BackendKind::OpenaiStyle | BackendKind::GeminiStyle => {
                let key = std::env::var(&config.api_key_env_var)
                    .ok()
                    .filter(|k| !k.trim().is_empty())
                    .ok_or_else(|| {
                        LlmError::Auth(format!(
                            "environment variable {} is not set",
                            config.api_key_env_var
                        ))
                    })?;
                Box::new(HttpTransport::new(config, key)?)
            }
        };
        Ok(Self::with_transport(config.clone(), transport))
    }

    pub fn with_transport(config: BackendConfig, transport: Box<dyn Transport>) -> Self {
        let permits = Semaphore::new(config.max_in_flight.max(1));
        Self {
            config,
            transport,
            permits,
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Sends one request, retrying transport failures (timeouts, 5xx, 429)
    /// with exponential backoff up to `max_attempts`.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let max = self.config.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.permits.acquire();
                self.transport.send(request)
            };
            let retry_reason = match outcome {
                Ok(text) => return Ok(text),
                Err(TransportFailure::Auth(m)) => return Err(LlmError::Auth(m)),
                Err(TransportFailure::Fatal(message)) => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(TransportFailure::RateLimited) if attempt >= max => {
                    return Err(LlmError::RateLimited { attempts: attempt })
                }
                Err(TransportFailure::Retryable(message)) if attempt >= max => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(TransportFailure::RateLimited) => "rate limited".to_string(),
                Err(TransportFailure::Retryable(m)) => m,
            };
            let delay = backoff_delay(self.config.backoff_base_ms, attempt);
            warn!(attempt, delay_ms = delay.as_millis() as u64, "retrying request: {retry_reason}");
            std::thread::sleep(delay);
        }
    }
}

fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
    Duration::from_millis(base_ms.saturating_mul(factor).min(MAX_BACKOFF_MS))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssessOutcome {
    pub result: AssessmentResult,
    /// Number of `complete` calls made.
    pub attempts: u32,
    pub latency_ms: u64,
}

/// Builds the prompt, then requests and validates until a reply parses or
/// `max_attempts` replies have been rejected.
pub fn assess_with_retry(
    bundle: &CueBundle,
    config: &PromptConfig,
    client: &LlmClient,
) -> Result<AssessOutcome, LlmError> {
    let prompt = build_prompt(bundle, config)?;
    let request = CompletionRequest {
        prompt,
        utt_id: Some(bundle.utt_id.clone()),
        config_id: Some(config.id()),
    };
    let started = Instant::now();
    let max = client.config.max_attempts.max(1);
    let mut last = ResponseError::NoJsonFound;
    for attempt in 1..=max {
        let raw = client.complete(&request)?;
        match parse_llm_response(&bundle.utt_id, &raw, config) {
            Ok(result) => {
                return Ok(AssessOutcome {
                    result,
                    attempts: attempt,
                    latency_ms: started.elapsed().as_millis() as u64,
                })
            }
            Err(e) => {
                debug!(utt_id = %bundle.utt_id, attempt, "invalid response: {e}");
                last = e;
            }
        }
    }
    Err(LlmError::InvalidAfterRetries {
        attempts: max,
        last,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockResponse {
    Text(String),
    /// Simulated HTTP failure with this status code.
    Failure { http_status: u16 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub key: String,
    pub responses: Vec<MockResponse>,
}

/// Canned replies keyed by, in lookup order: `prompt:<sha256 of prompt>`,
/// `<utt_id>@<config id>`, then `<utt_id>`. Each key plays its list once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    pub responses: HashMap<String, Vec<MockResponse>>,
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, JsonlError> {
        let entries: Vec<MockEntry> = read_jsonl_file(path)?;
        Ok(Self::from_entries(entries))
    }

    pub fn from_entries(entries: impl IntoIterator<Item = MockEntry>) -> Self {
        let mut responses: HashMap<String, Vec<MockResponse>> = HashMap::new();
        for entry in entries {
            responses.entry(entry.key).or_default().extend(entry.responses);
        }
        Self { responses }
    }

    pub fn insert(&mut self, key: impl Into<String>, replies: impl IntoIterator<Item = MockResponse>) {
        self.responses.entry(key.into()).or_default().extend(replies);
    }

    pub fn with_text(mut self, key: impl Into<String>, replies: &[&str]) -> Self {
        self.insert(key, replies.iter().map(|s| MockResponse::Text(s.to_string())));
        self
    }
}

pub fn prompt_key(prompt: &str) -> String {
    format!("prompt:{}", hex::encode(Sha256::digest(prompt.as_bytes())))
}

/// Plays back a [`MockScript`] and records call statistics.
pub struct MockTransport {
    script: MockScript,
    cursors: Mutex<HashMap<String, usize>>,
    stats: Mutex<MockStats>,
    delay: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockStats {
    pub calls: usize,
    pub in_flight: usize,
    pub max_in_flight: usize,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            cursors: Mutex::new(HashMap::new()),
            stats: Mutex::new(MockStats::default()),
            delay: Duration::ZERO,
        }
    }

    /// Holds each call open for `delay`, making overlap observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn stats(&self) -> MockStats {
        *self.stats.lock().unwrap()
    }

    fn resolve_key(&self, request: &CompletionRequest) -> Option<String> {
        let mut candidates = vec![prompt_key(&request.prompt)];
        if let Some(utt) = &request.utt_id {
            if let Some(cfg) = &request.config_id {
                candidates.push(format!("{utt}@{cfg}"));
            }
            candidates.push(utt.clone());
        }
        candidates
            .into_iter()
            .find(|k| self.script.responses.contains_key(k))
    }

    fn next_response(&self, request: &CompletionRequest) -> Result<MockResponse, TransportFailure> {
        let key = self
            .resolve_key(request)
            .ok_or_else(|| TransportFailure::Fatal("mock script has no entry for request".into()))?;
        let list = &self.script.responses[&key];
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(key.clone()).or_insert(0);
        let reply = list.get(*cursor).cloned().ok_or_else(|| {
            TransportFailure::Fatal(format!("mock script exhausted for `{key}`"))
        })?;
        *cursor += 1;
        Ok(reply)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, request: &CompletionRequest) -> Result<String, TransportFailure> {
        (**self).send(request)
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &CompletionRequest) -> Result<String, TransportFailure> {
        {
            let mut stats = self.stats.lock().unwrap();
            stats.calls += 1;
            stats.in_flight += 1;
            stats.max_in_flight = stats.max_in_flight.max(stats.in_flight);
        }
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let reply = self.next_response(request);
        self.stats.lock().unwrap().in_flight -= 1;
        match reply? {
            MockResponse::Text(text) => Ok(text),
            MockResponse::Failure { http_status } => Err(classify_status(http_status, "mock")),
        }
    }
}

fn classify_status(status: u16, body: &str) -> TransportFailure {
    match status {
        401 | 403 => TransportFailure::Auth(format!("HTTP {status}")),
        429 => TransportFailure::RateLimited,
        500..=599 => TransportFailure::Retryable(format!("HTTP {status}")),
        _ => TransportFailure::Fatal(format!("HTTP {status}: {}", truncate(body, 200))),
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    OpenAi,
    Gemini,
}

impl Dialect {
    pub fn url(self, endpoint: &str, model: &str) -> String {
        match self {
            Dialect::OpenAi => endpoint.to_string(),
            Dialect::Gemini => {
                format!("{}/{model}:generateContent", endpoint.trim_end_matches('/'))
            }
        }
    }

    /// Request body. No sampling parameters are set, so backend defaults apply.
    pub fn request_body(self, model: &str, prompt: &str) -> Value {
        match self {
            Dialect::OpenAi => json!({
                "model": model,
                "messages": [{"role": "user", "content": prompt}],
            }),
            Dialect::Gemini => json!({
                "contents": [{"role": "user", "parts": [{"text": prompt}]}],
            }),
        }
    }

    /// Pulls the assistant text out of a response body.
    pub fn extract_text(self, body: &Value) -> Option<String> {
        match self {
            Dialect::OpenAi => body
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
                .map(str::to_string),
            Dialect::Gemini => {
                let parts = body.pointer("/candidates/0/content/parts")?.as_array()?;
                let text: String = parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect();
                Some(text)
            }
        }
    }

    fn log_usage(self, body: &Value) {
        let (prompt, completion) = match self {
            Dialect::OpenAi => (
                body.pointer("/usage/prompt_tokens"),
                body.pointer("/usage/completion_tokens"),
            ),
            Dialect::Gemini => (
                body.pointer("/usageMetadata/promptTokenCount"),
                body.pointer("/usageMetadata/candidatesTokenCount"),
            ),
        };
        let prompt_tokens = prompt.and_then(|v| v.as_u64());
        let completion_tokens = completion.and_then(|v| v.as_u64());
        debug!(?prompt_tokens, ?completion_tokens, "token usage");
    }
}

pub struct HttpTransport {
    http: reqwest::blocking::Client,
    dialect: Dialect,
    url: String,
    model: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(config: &BackendConfig, api_key: String) -> Result<Self, LlmError> {
        let dialect = match config.kind {
            BackendKind::OpenaiStyle => Dialect::OpenAi,
            BackendKind::GeminiStyle => Dialect::Gemini,
            BackendKind::Mock => return Err(LlmError::Config("mock has no HTTP transport".into())),
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_s))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            http,
            dialect,
            url: dialect.url(&config.endpoint_url, &config.model_name),
            model: config.model_name.clone(),
            api_key,
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &CompletionRequest) -> Result<String, TransportFailure> {
        let body = self.dialect.request_body(&self.model, &request.prompt);
        let builder = self.http.post(&self.url).json(&body);
        let builder = match self.dialect {
            Dialect::OpenAi => builder.bearer_auth(&self.api_key),
            Dialect::Gemini => builder.header("x-goog-api-key", &self.api_key),
        };
        let response = builder
            .send()
            .map_err(|e| TransportFailure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| TransportFailure::Retryable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| TransportFailure::Fatal(format!("response is not JSON: {e}")))?;
        self.dialect.log_usage(&value);
        self.dialect
            .extract_text(&value)
            .ok_or_else(|| TransportFailure::Fatal("response has no message text".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::{parse_cmu_with_pauses, tokenize_ipa, IpaMode};
    use std::sync::Arc;

    const VALID: &str = r#"{"accuracy":3,"fluency":4,"reason_accuracy":"ok","reason_fluency":"ok"}"#;

    fn mock_client(script: MockScript, max_attempts: u32) -> LlmClient {
        let config = BackendConfig {
            max_attempts,
            backoff_base_ms: 0,
            ..BackendConfig::mock()
        };
        LlmClient::with_transport(config, Box::new(MockTransport::new(script)))
    }

    fn bundle() -> CueBundle {
        let mut b = CueBundle::new("u1", "maybe");
        b.ipa_recognized = tokenize_ipa("m ɛ m b i", IpaMode::SpaceSeparated);
        b.cmu_recognized = parse_cmu_with_pauses("M EH1 M B IY0").unwrap();
        b
    }

    #[test]
    fn mock_plays_back_text() {
        let client = mock_client(MockScript::default().with_text("u1", &[VALID]), 3);
        let req = CompletionRequest {
            prompt: "p".into(),
            utt_id: Some("u1".into()),
            config_id: None,
        };
        assert_eq!(client.complete(&req).unwrap(), VALID);
        // exhausted list is a transport error
        assert!(matches!(client.complete(&req), Err(LlmError::Transport { .. })));
    }

    #[test]
    fn key_precedence() {
        let script = MockScript::default()
            .with_text("u1", &["by-utt"])
            .with_text("u1@cfg", &["by-config"])
            .with_text(prompt_key("exact prompt"), &["by-prompt"]);
        let client = mock_client(script, 1);
        let mut req = CompletionRequest {
            prompt: "exact prompt".into(),
            utt_id: Some("u1".into()),
            config_id: Some("cfg".into()),
        };
        assert_eq!(client.complete(&req).unwrap(), "by-prompt");
        req.prompt = "other".into();
        assert_eq!(client.complete(&req).unwrap(), "by-config");
        req.config_id = Some("zzz".into());
        assert_eq!(client.complete(&req).unwrap(), "by-utt");
    }

    #[test]
    fn missing_api_key_is_auth_error() {
        let config = BackendConfig {
            api_key_env_var: "PRONASSESS_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..BackendConfig::openai()
        };
        assert!(matches!(LlmClient::from_config(&config), Err(LlmError::Auth(_))));
        let config = BackendConfig {
            api_key_env_var: "PRONASSESS_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..BackendConfig::gemini()
        };
        assert!(matches!(LlmClient::from_config(&config), Err(LlmError::Auth(_))));
    }

    #[test]
    fn transient_failures_are_retried() {
        let mut script = MockScript::default();
        script.insert(
            "u1",
            [
                MockResponse::Failure { http_status: 503 },
                MockResponse::Failure { http_status: 429 },
                MockResponse::Text("ok".into()),
            ],
        );
        let client = mock_client(script, 3);
        let req = CompletionRequest {
            utt_id: Some("u1".into()),
            ..CompletionRequest::new("p")
        };
        assert_eq!(client.complete(&req).unwrap(), "ok");
    }

    #[test]
    fn retries_are_bounded() {
        let mut script = MockScript::default();
        script.insert("a", vec![MockResponse::Failure { http_status: 500 }; 2]);
        script.insert("b", vec![MockResponse::Failure { http_status: 429 }; 2]);
        script.insert("c", vec![MockResponse::Failure { http_status: 401 }]);
        let client = mock_client(script, 2);
        let req = |id: &str| CompletionRequest {
            utt_id: Some(id.into()),
            ..CompletionRequest::new("p")
        };
        assert!(matches!(
            client.complete(&req("a")),
            Err(LlmError::Transport { attempts: 2, .. })
        ));
        assert!(matches!(
            client.complete(&req("b")),
            Err(LlmError::RateLimited { attempts: 2 })
        ));
        assert!(matches!(client.complete(&req("c")), Err(LlmError::Auth(_))));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        assert_eq!(backoff_delay(100, 1), Duration::from_millis(100));
        assert_eq!(backoff_delay(100, 3), Duration::from_millis(400));
        assert_eq!(backoff_delay(100, 64), Duration::from_millis(MAX_BACKOFF_MS));
    }

    #[test]
    fn retry_until_valid() {
        let config = PromptConfig::all_cues();
        let script = MockScript::default().with_text("u1", &["garbage", VALID]);
        let out = assess_with_retry(&bundle(), &config, &mock_client(script, 3)).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!((out.result.accuracy, out.result.fluency), (3, 4));

        let script = MockScript::default().with_text("u1", &[VALID]);
        let out = assess_with_retry(&bundle(), &config, &mock_client(script, 3)).unwrap();
        assert_eq!(out.attempts, 1);

        let script = MockScript::default().with_text("u1", &["garbage"; 3]);
        let err = assess_with_retry(&bundle(), &config, &mock_client(script, 3)).unwrap_err();
        assert!(matches!(
            err,
            LlmError::InvalidAfterRetries {
                attempts: 3,
                last: ResponseError::NoJsonFound
            }
        ));
    }

    #[test]
    fn attempts_equal_complete_calls() {
        let transport = Arc::new(MockTransport::new(
            MockScript::default().with_text("u1", &["{}", "nope", VALID]),
        ));
        let config = BackendConfig {
            max_attempts: 5,
            ..BackendConfig::mock()
        };
        let client = LlmClient::with_transport(config, Box::new(transport.clone()));
        let out = assess_with_retry(&bundle(), &PromptConfig::all_cues(), &client).unwrap();
        assert_eq!(out.attempts as usize, transport.stats().calls);
    }

    #[test]
    fn in_flight_bound_is_enforced() {
        let mut script = MockScript::default();
        for i in 0..16 {
            script.insert(format!("u{i}"), [MockResponse::Text(VALID.into())]);
        }
        let transport = Arc::new(MockTransport::new(script).with_delay(Duration::from_millis(15)));
        let config = BackendConfig {
            max_in_flight: 3,
            ..BackendConfig::mock()
        };
        let client = LlmClient::with_transport(config, Box::new(transport.clone()));
        std::thread::scope(|s| {
            for i in 0..16 {
                let client = &client;
                s.spawn(move || {
                    let req = CompletionRequest {
                        utt_id: Some(format!("u{i}")),
                        ..CompletionRequest::new("p")
                    };
                    client.complete(&req).unwrap();
                });
            }
        });
        let stats = transport.stats();
        assert_eq!(stats.calls, 16);
        assert!(stats.max_in_flight <= 3, "{stats:?}");
        assert!(stats.max_in_flight >= 2, "workers should overlap: {stats:?}");
    }

    #[test]
    fn dialect_wire_shapes() {
        let body = Dialect::OpenAi.request_body("m", "hi");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert!(body.get("temperature").is_none());
        let reply = json!({"choices": [{"message": {"role": "assistant", "content": "X"}}]});
        assert_eq!(Dialect::OpenAi.extract_text(&reply).unwrap(), "X");

        let body = Dialect::Gemini.request_body("m", "hi");
        assert_eq!(body["contents"][0]["parts"][0]["text"], "hi");
        let reply = json!({"candidates": [{"content": {"parts": [{"text": "A"}, {"text": "B"}]}}]});
        assert_eq!(Dialect::Gemini.extract_text(&reply).unwrap(), "AB");
        assert_eq!(
            Dialect::Gemini.url("https://x/v1beta/models/", "gemini-2.0-flash"),
            "https://x/v1beta/models/gemini-2.0-flash:generateContent"
        );
    }

    #[test]
    fn mock_script_jsonl_shape() {
        let line = r#"{"key":"u1","responses":["text",{"http_status":500}]}"#;
        let entry: MockEntry = serde_json::from_str(line).unwrap();
        assert_eq!(
            entry.responses,
            vec![
                MockResponse::Text("text".into()),
                MockResponse::Failure { http_status: 500 }
            ]
        );
    }
}
