//! HTTP completion backend.
//!
//! POSTs `{"prompt", "temperature", "max_output_tokens"}` as JSON and reads
//! `{"text"}` back. Timeouts, connection failures, 429 and 5xx answers are
//! retried with exponential backoff; other statuses fail at once. Requests
//! pass a token bucket first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{CompletionBackend, CompletionRequest, CompletionResult, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, the first one included.
    pub attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Relative jitter, 0.2 means ±20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 500,
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based), with `unit` in [-1, 1]
    /// selecting the jitter.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let base = self.base_delay_ms as f64 * self.factor.powi(retry.saturating_sub(1) as i32);
        let ms = base * (1.0 + self.jitter * unit.clamp(-1.0, 1.0));
        Duration::from_secs_f64(ms.max(0.0) / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub timeout_ms: u64,
    pub max_parallel: usize,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub auth_header: String,
    pub retry: RetryPolicy,
    /// Token bucket refill rate; 0 disables rate limiting.
    pub requests_per_second: f64,
    pub burst: u32,
    pub jitter_seed: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            timeout_ms: 30_000,
            max_parallel: 8,
            api_key_env: "CONTRAST_API_KEY".into(),
            auth_header: "Authorization".into(),
            retry: RetryPolicy::default(),
            requests_per_second: 0.0,
            burst: 8,
            jitter_seed: 0,
        }
    }
}

struct TokenBucket {
    tokens: f64,
    last: Instant,
}

#[derive(Serialize)]
struct Envelope<'a> {
    prompt: &'a str,
    temperature: f64,
    max_output_tokens: usize,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    bucket: Mutex<TokenBucket>,
    rng: Mutex<ChaCha8Rng>,
    sleep: fn(Duration),
}

enum Failure {
    Retry(GatewayError),
    Fatal(GatewayError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        if config.endpoint_url.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("remote backend needs endpoint_url".into()));
        }
        if config.retry.attempts == 0 {
            return Err(GatewayError::InvalidRequest("retry attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Self {
            client,
            api_key,
            bucket: Mutex::new(TokenBucket {
                tokens: f64::from(config.burst.max(1)),
                last: Instant::now(),
            }),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.jitter_seed)),
            sleep: std::thread::sleep,
            config,
        })
    }

    /// Use an explicit key instead of the environment.
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn take_token(&self) {
        let rate = self.config.requests_per_second;
        if rate <= 0.0 {
            return;
        }
        let cap = f64::from(self.config.burst.max(1));
        loop {
            let wait = {
                let mut b = self.bucket.lock().expect("bucket lock");
                let now = Instant::now();
                b.tokens = (b.tokens + now.duration_since(b.last).as_secs_f64() * rate).min(cap);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / rate)
            };
            (self.sleep)(wait);
        }
    }

    fn attempt(&self, req: &CompletionRequest, attempts: u32) -> Result<String, Failure> {
        let mut builder = self.client.post(&self.config.endpoint_url).json(&Envelope {
            prompt: &req.prompt,
            temperature: req.temperature,
            max_output_tokens: req.max_output_tokens,
        });
        if let Some(key) = &self.api_key {
            builder = builder.header(self.config.auth_header.as_str(), format!("Bearer {key}"));
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Err(Failure::Retry(GatewayError::Timeout { attempts })),
            Err(e) => {
                return Err(Failure::Retry(GatewayError::Transport {
                    attempts,
                    message: e.to_string(),
                }))
            }
        };
        let status = resp.status();
        let body = match resp.text() {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return Err(Failure::Retry(GatewayError::Timeout { attempts })),
            Err(e) => {
                return Err(Failure::Retry(GatewayError::Transport {
                    attempts,
                    message: e.to_string(),
                }))
            }
        };
        if !status.is_success() {
            let err = GatewayError::Status {
                status: status.as_u16(),
                attempts,
                body: body.chars().take(500).collect(),
            };
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Failure::Retry(err)
            } else {
                Failure::Fatal(err)
            });
        }
        serde_json::from_str::<Reply>(&body)
            .map(|r| r.text)
            .map_err(|e| Failure::Fatal(GatewayError::MalformedEnvelope(e.to_string())))
    }
}

impl CompletionBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.config.endpoint_url)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let started = Instant::now();
        let mut attempt = 1;
        loop {
            self.take_token();
            match self.attempt(req, attempt) {
                Ok(text) => {
                    return Ok(CompletionResult {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        backend_id: self.id(),
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) if attempt >= self.config.retry.attempts => return Err(e),
                Err(Failure::Retry(e)) => {
                    tracing::warn!(attempt, "transient completion failure, retrying: {e}");
                    let unit = self.rng.lock().expect("rng lock").gen_range(-1.0..=1.0);
                    (self.sleep)(self.config.retry.delay(attempt, unit));
                    attempt += 1;
                }
            }
        }
    }
}
