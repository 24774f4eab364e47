use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::time::Instant;

/// Environment variable read for the API key unless the config names another.
pub const DEFAULT_API_KEY_VAR: &str = "LATERAL_BENCH_API_KEY";

pub const MAX_TEMPERATURE: f64 = 2.0;

/// Endpoint settings. The API key is deliberately absent: only the name of
/// the environment variable holding it is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub requests_per_minute: Option<u32>,
    /// Extra attempts after a 429, a 5xx or a network failure.
    pub transport_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub jitter_seed: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: DEFAULT_API_KEY_VAR.into(),
            max_tokens: 256,
            timeout_secs: 60.0,
            requests_per_minute: None,
            transport_retries: 4,
            backoff_base_ms: 500,
            backoff_max_ms: 30_000,
            jitter_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// A single-turn request. There is no way to add history: every question is
/// its own session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    model: String,
    temperature: f64,
    max_tokens: u32,
    messages: [ChatMessage; 1],
    #[serde(skip)]
    timeout: Duration,
    /// Free-form label copied into transcripts, usually the instance id.
    #[serde(skip)]
    tag: Option<String>,
}

impl ChatRequest {
    pub fn new(model: &str, prompt: &str, temperature: f64, max_tokens: u32, timeout: Duration) -> Result<Self, ClientError> {
        if !(0.0..=MAX_TEMPERATURE).contains(&temperature) {
            return Err(ClientError::InvalidTemperature(temperature));
        }
        Ok(ChatRequest {
            model: model.to_string(),
            temperature,
            max_tokens,
            messages: [ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            timeout,
            tag: None,
        })
    }

    pub fn tagged(mut self, tag: &str) -> Self {
        self.tag = Some(tag.to_string());
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn prompt(&self) -> &str {
        &self.messages[0].content
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    /// `choices[0].message.content` of the response body.
    pub content: String,
    pub status: u16,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("client misconfigured: {0}")]
    Config(String),
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("endpoint rejected credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited (HTTP 429), retries exhausted")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transport failure: {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("response has no choices[0].message.content: {message}")]
    MalformedResponse { message: String, body: String },
}

impl ClientError {
    pub fn is_auth(&self) -> bool {
        matches!(self, ClientError::Auth { .. })
    }

    fn is_retryable(&self) -> bool {
        matches!(self, ClientError::RateLimited { .. } | ClientError::Transport { .. })
    }
}

/// Sliding-window cap on request starts.
#[derive(Debug)]
pub struct RateLimiter {
    cap: usize,
    window: Duration,
    sent: tokio::sync::Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(cap: u32) -> Self {
        RateLimiter::new(cap as usize, Duration::from_secs(60))
    }

    pub fn new(cap: usize, window: Duration) -> Self {
        RateLimiter {
            cap: cap.max(1),
            window,
            sent: tokio::sync::Mutex::new(VecDeque::new()),
        }
    }

    /// Waits until a request may start and books it. Waiters are served in
    /// arrival order because the lock is held while sleeping.
    pub async fn acquire(&self) {
        let mut sent = self.sent.lock().await;
        loop {
            let now = Instant::now();
            while sent.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                sent.pop_front();
            }
            if sent.len() < self.cap {
                sent.push_back(now);
                return;
            }
            let oldest = *sent.front().unwrap();
            tokio::time::sleep_until(oldest + self.window).await;
        }
    }
}

/// `base * 2^retry`, capped, plus up to half of that again as jitter.
pub fn backoff_delay(base: Duration, max: Duration, retry: u32, rng: &mut impl Rng) -> Duration {
    let exp = base.saturating_mul(2u32.saturating_pow(retry.min(20)));
    let delay = exp.min(max);
    delay + delay.mul_f64(rng.random_range(0.0..=0.5))
}

#[derive(Serialize)]
struct TranscriptEntry<'a> {
    timestamp: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag: Option<&'a str>,
    request: &'a ChatRequest,
    #[serde(skip_serializing_if = "Option::is_none")]
    status: Option<u16>,
    response: &'a str,
}

/// Append-only JSON-lines log of every HTTP exchange.
pub struct TranscriptLog {
    out: Mutex<BufWriter<File>>,
}

impl TranscriptLog {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = File::options().create(true).append(true).open(path)?;
        Ok(TranscriptLog {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    fn append(&self, request: &ChatRequest, status: Option<u16>, response: &str) -> std::io::Result<()> {
        let entry = TranscriptEntry {
            timestamp: chrono::Utc::now().to_rfc3339(),
            tag: request.tag.as_deref(),
            request,
            status,
            response,
        };
        let line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(out, "{line}")?;
        out.flush()
    }
}

/// Chat-completions client shared by concurrent workers.
pub struct ChatClient {
    http: reqwest::Client,
    config: ClientConfig,
    api_key: Option<String>,
    limiter: Option<RateLimiter>,
    jitter: Mutex<ChaCha8Rng>,
    transcript: Option<TranscriptLog>,
}

impl fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatClient")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

struct Exchange {
    status: Option<u16>,
    body: String,
    result: Result<ChatReply, ClientError>,
}

impl ChatClient {
    pub fn new(config: ClientConfig, api_key: Option<String>) -> Result<Self, ClientError> {
        if config.endpoint.is_empty() {
            return Err(ClientError::Config("endpoint is empty".into()));
        }
        if !(config.timeout_secs > 0.0 && config.timeout_secs.is_finite()) {
            return Err(ClientError::Config("timeout_secs must be positive".into()));
        }
        if config.requests_per_minute == Some(0) {
            return Err(ClientError::Config("requests_per_minute must be positive".into()));
        }
        let http = reqwest::Client::builder()
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(ChatClient {
            http,
            limiter: config.requests_per_minute.map(RateLimiter::per_minute),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(config.jitter_seed)),
            api_key,
            config,
            transcript: None,
        })
    }

    /// Reads the key from the variable named in `config.api_key_env`.
    pub fn from_env(config: ClientConfig) -> Result<Self, ClientError> {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            tracing::warn!(var = %config.api_key_env, "no API key in environment, sending unauthenticated requests");
        }
        ChatClient::new(config, key)
    }

    pub fn with_rate_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_transcript(mut self, log: TranscriptLog) -> Self {
        self.transcript = Some(log);
        self
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn request(&self, prompt: &str, temperature: f64) -> Result<ChatRequest, ClientError> {
        ChatRequest::new(
            &self.config.model,
            prompt,
            temperature,
            self.config.max_tokens,
            Duration::from_secs_f64(self.config.timeout_secs),
        )
    }

    /// Sends `request`, retrying 429s (honoring Retry-After), 5xx responses
    /// and network failures with exponential backoff.
    pub async fn complete(&self, request: &ChatRequest) -> Result<ChatReply, ClientError> {
        let mut retry = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            let exchange = self.send_once(request).await;
            if let Some(log) = &self.transcript {
                let shown = match &exchange.result {
                    Err(e) if exchange.status.is_none() => e.to_string(),
                    _ => exchange.body.clone(),
                };
                if let Err(e) = log.append(request, exchange.status, &shown) {
                    tracing::warn!(error = %e, "could not write transcript entry");
                }
            }
            let err = match exchange.result {
                Ok(reply) => return Ok(reply),
                Err(e) if !e.is_retryable() || retry >= self.config.transport_retries => return Err(e),
                Err(e) => e,
            };
            let delay = match err {
                ClientError::RateLimited {
                    retry_after: Some(after),
                } => after,
                _ => {
                    let mut rng = self.jitter.lock().unwrap_or_else(|e| e.into_inner());
                    backoff_delay(
                        Duration::from_millis(self.config.backoff_base_ms),
                        Duration::from_millis(self.config.backoff_max_ms),
                        retry,
                        &mut *rng,
                    )
                }
            };
            tracing::debug!(retry, ?delay, error = %err, "retrying request");
            retry += 1;
            tokio::time::sleep(delay).await;
        }
    }

    async fn send_once(&self, request: &ChatRequest) -> Exchange {
        let mut builder = self.http.post(&self.config.endpoint).timeout(request.timeout).json(request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send().await {
            Ok(r) => r,
            Err(e) => {
                return Exchange {
                    status: None,
                    body: String::new(),
                    result: Err(ClientError::Transport {
                        status: None,
                        message: e.to_string(),
                    }),
                }
            }
        };
        let status = response.status();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = match response.text().await {
            Ok(b) => b,
            Err(e) => {
                return Exchange {
                    status: Some(status.as_u16()),
                    body: String::new(),
                    result: Err(ClientError::Transport {
                        status: Some(status.as_u16()),
                        message: e.to_string(),
                    }),
                }
            }
        };
        let code = status.as_u16();
        let result = if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            Err(ClientError::Auth { status: code })
        } else if status == StatusCode::TOO_MANY_REQUESTS {
            Err(ClientError::RateLimited { retry_after })
        } else if status.is_server_error() {
            Err(ClientError::Transport {
                status: Some(code),
                message: format!("HTTP {code}"),
            })
        } else if !status.is_success() {
            Err(ClientError::Http {
                status: code,
                body: body.clone(),
            })
        } else {
            reply_content(&body).map(|content| ChatReply { content, status: code })
        };
        Exchange {
            status: Some(code),
            body,
            result,
        }
    }
}

fn reply_content(body: &str) -> Result<String, ClientError> {
    let malformed = |message: &str| ClientError::MalformedResponse {
        message: message.to_string(),
        body: body.to_string(),
    };
    let value: Value = serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| malformed("missing or non-string content"))
}
