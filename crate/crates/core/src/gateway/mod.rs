//! Completion gateway: request validation, concurrency limits, prompt
//! templates, output parsing with one format-reminder retry, and the two
//! backends (remote HTTP and the offline rule-based one).

pub mod deterministic;
pub mod grammar;
pub mod payload;
pub mod remote;
pub mod templates;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;
use thiserror::Error;

use crate::tile::{Tokenizer, WhitespaceTokenizer};
pub use deterministic::DeterministicBackend;
pub use grammar::{parse_stage_output, render_stage_output, ParseError, StageOutput};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};
pub use templates::Templates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageTag {
    Extract,
    AttributeMerge,
    ValueMerge,
    Contrast,
    Usefulness,
    Critique,
    Revise,
    Autorate,
}

impl StageTag {
    pub const ALL: [StageTag; 8] = [
        StageTag::Extract,
        StageTag::AttributeMerge,
        StageTag::ValueMerge,
        StageTag::Contrast,
        StageTag::Usefulness,
        StageTag::Critique,
        StageTag::Revise,
        StageTag::Autorate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Extract => "EXTRACT",
            StageTag::AttributeMerge => "ATTRIBUTE_MERGE",
            StageTag::ValueMerge => "VALUE_MERGE",
            StageTag::Contrast => "CONTRAST",
            StageTag::Usefulness => "USEFULNESS",
            StageTag::Critique => "CRITIQUE",
            StageTag::Revise => "REVISE",
            StageTag::Autorate => "AUTORATE",
        }
    }

    pub fn parse(s: &str) -> Option<StageTag> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub stage_tag: StageTag,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request too large: {prompt_tokens} prompt + {max_output_tokens} output tokens exceed the {context_window}-token window")]
    RequestTooLarge {
        prompt_tokens: usize,
        max_output_tokens: usize,
        context_window: usize,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("malformed response envelope: {0}")]
    MalformedEnvelope(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub context_window: usize,
    pub max_output_tokens: usize,
    pub max_parallel: usize,
    /// Sampling temperature for pipeline stages; AUTORATE always uses 0.
    pub temperature: f64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            context_window: 8192,
            max_output_tokens: 1024,
            max_parallel: 8,
            temperature: 0.0,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct PermitGuard<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Outcome of one parsed stage call.
#[derive(Debug, Clone)]
pub struct StageCall {
    pub output: StageOutput,
    pub raw: String,
    pub attempts: u32,
    pub latency_ms: u64,
}

pub const FORMAT_REMINDER: &str = "\n\nREMINDER: answer only with records in the documented line format \
(TAB-separated fields, one record per line), or a single line NONE.";

pub const RATING_REMINDER: &str = "\n\nREMINDER: answer with a single line of the form RATING: <LABEL>.";

pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    tokenizer: Arc<dyn Tokenizer>,
    templates: Templates,
    config: GatewayConfig,
    permits: Permits,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>, config: GatewayConfig) -> Self {
        Self {
            backend,
            tokenizer: Arc::new(WhitespaceTokenizer),
            templates: Templates::bundled(),
            permits: Permits::new(config.max_parallel),
            config,
        }
    }

    pub fn deterministic() -> Self {
        Self::new(Arc::new(DeterministicBackend::default()), GatewayConfig::default())
    }

    pub fn with_templates(mut self, templates: Templates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer.as_ref()
    }

    pub fn max_parallel(&self) -> usize {
        self.config.max_parallel.max(1)
    }

    pub fn validate(&self, req: &CompletionRequest) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&req.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                req.temperature
            )));
        }
        if req.stage_tag == StageTag::Autorate && req.temperature != 0.0 {
            return Err(GatewayError::InvalidRequest(
                "AUTORATE requests must use temperature 0".into(),
            ));
        }
        if req.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        let prompt_tokens = self.tokenizer.count(&req.prompt);
        if prompt_tokens + req.max_output_tokens > self.config.context_window {
            return Err(GatewayError::RequestTooLarge {
                prompt_tokens,
                max_output_tokens: req.max_output_tokens,
                context_window: self.config.context_window,
            });
        }
        Ok(())
    }

    /// Whether `payload` leaves the full output allowance once wrapped in
    /// the stage template.
    pub fn fits(&self, stage: StageTag, payload: &str) -> bool {
        let prompt = self.templates.render(stage, payload);
        self.tokenizer.count(&prompt) + self.config.max_output_tokens <= self.config.context_window
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    /// Validate and send one request, honoring the parallelism limit.
    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        self.validate(req)?;
        let _permit = self.permits.acquire();
        let started = Instant::now();
        let mut result = self.backend.complete(req)?;
        if result.latency_ms == 0 {
            result.latency_ms = started.elapsed().as_millis() as u64;
        }
        Ok(result)
    }

    /// Build a request for `stage` around a rendered payload. The output
    /// allowance is whatever the window leaves, capped by config.
    pub fn request(&self, stage: StageTag, payload: &str) -> Result<CompletionRequest, GatewayError> {
        let prompt = self.templates.render(stage, payload);
        self.request_for_prompt(stage, prompt)
    }

    fn request_for_prompt(&self, stage: StageTag, prompt: String) -> Result<CompletionRequest, GatewayError> {
        let prompt_tokens = self.tokenizer.count(&prompt);
        let room = self.config.context_window.saturating_sub(prompt_tokens);
        if room == 0 {
            return Err(GatewayError::RequestTooLarge {
                prompt_tokens,
                max_output_tokens: 1,
                context_window: self.config.context_window,
            });
        }
        let temperature = if stage == StageTag::Autorate {
            0.0
        } else {
            self.config.temperature
        };
        Ok(CompletionRequest {
            stage_tag: stage,
            prompt,
            temperature,
            max_output_tokens: room.min(self.config.max_output_tokens),
        })
    }

    /// Call `stage` and parse the answer. An unparseable answer is retried
    /// once with a format reminder appended to the prompt.
    pub fn run_stage(&self, stage: StageTag, payload: &str) -> Result<StageCall, GatewayError> {
        let req = self.request(stage, payload)?;
        let first = self.complete(&req)?;
        match parse_stage_output(stage, &first.text) {
            Ok(output) => Ok(StageCall {
                output,
                raw: first.text,
                attempts: 1,
                latency_ms: first.latency_ms,
            }),
            Err(err) => {
                tracing::warn!(%stage, "unparseable output, retrying with format reminder: {}", err.reason);
                let reminder = match stage {
                    StageTag::Usefulness | StageTag::Autorate => RATING_REMINDER,
                    _ => FORMAT_REMINDER,
                };
                let retry = self.request_for_prompt(stage, format!("{}{reminder}", req.prompt))?;
                let second = self.complete(&retry)?;
                let output = parse_stage_output(stage, &second.text)?;
                Ok(StageCall {
                    output,
                    raw: second.text,
                    attempts: 2,
                    latency_ms: first.latency_ms + second.latency_ms,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        answers: Vec<&'static str>,
        calls: AtomicUsize,
        prompts: Mutex<Vec<String>>,
    }

    impl CompletionBackend for Scripted {
        fn id(&self) -> String {
            "scripted".into()
        }

        fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            self.prompts.lock().unwrap().push(req.prompt.clone());
            Ok(CompletionResult {
                text: self.answers[n.min(self.answers.len() - 1)].to_string(),
                latency_ms: 1,
                backend_id: self.id(),
            })
        }
    }

    fn scripted(answers: Vec<&'static str>) -> (Arc<Scripted>, Gateway) {
        let b = Arc::new(Scripted {
            answers,
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(vec![]),
        });
        let g = Gateway::new(b.clone(), GatewayConfig::default());
        (b, g)
    }

    #[test]
    fn oversized_prompt_is_rejected() {
        let g = Gateway::deterministic();
        let req = CompletionRequest {
            stage_tag: StageTag::Extract,
            prompt: "word ".repeat(8192),
            temperature: 0.0,
            max_output_tokens: 1,
        };
        assert!(matches!(g.complete(&req), Err(GatewayError::RequestTooLarge { .. })));
        assert!(matches!(
            g.request(StageTag::Extract, &"word ".repeat(9000)),
            Err(GatewayError::RequestTooLarge { .. })
        ));
    }

    #[test]
    fn autorate_requires_zero_temperature() {
        let g = Gateway::deterministic();
        let mut req = g.request(StageTag::Autorate, "ROW\tx").unwrap();
        assert_eq!(req.temperature, 0.0);
        req.temperature = 0.7;
        assert!(matches!(g.complete(&req), Err(GatewayError::InvalidRequest(_))));
        req.stage_tag = StageTag::Extract;
        req.temperature = 2.5;
        assert!(matches!(g.complete(&req), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn deterministic_backend_is_repeatable() {
        let g = Gateway::deterministic();
        let payload = "ENTITY\tPhoneX\nThe battery life of PhoneX is 10 hours.";
        let req = g.request(StageTag::Extract, payload).unwrap();
        let a = g.complete(&req).unwrap();
        let b = g.complete(&req).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn one_reprompt_on_parse_failure() {
        let (b, g) = scripted(vec!["no idea", "x\ty\tz"]);
        let call = g.run_stage(StageTag::Extract, "ENTITY\tX").unwrap();
        assert_eq!(call.attempts, 2);
        let prompts = b.prompts.lock().unwrap();
        assert!(prompts[1].ends_with(FORMAT_REMINDER));
    }

    #[test]
    fn second_parse_failure_surfaces() {
        let (b, g) = scripted(vec!["no idea"]);
        let err = g.run_stage(StageTag::Extract, "ENTITY\tX").unwrap_err();
        assert!(matches!(err, GatewayError::Parse(ParseError { stage: StageTag::Extract, .. })));
        assert_eq!(b.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn parallelism_is_bounded() {
        struct Slow {
            active: AtomicUsize,
            peak: AtomicUsize,
        }
        impl CompletionBackend for Slow {
            fn id(&self) -> String {
                "slow".into()
            }
            fn complete(&self, _: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
                let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(std::time::Duration::from_millis(5));
                self.active.fetch_sub(1, Ordering::SeqCst);
                Ok(CompletionResult {
                    text: "NONE".into(),
                    latency_ms: 5,
                    backend_id: "slow".into(),
                })
            }
        }
        let b = Arc::new(Slow {
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let g = Gateway::new(
            b.clone(),
            GatewayConfig {
                max_parallel: 3,
                ..GatewayConfig::default()
            },
        );
        std::thread::scope(|s| {
            for _ in 0..12 {
                s.spawn(|| g.run_stage(StageTag::Extract, "ENTITY\tX").unwrap());
            }
        });
        assert!(b.peak.load(Ordering::SeqCst) <= 3);
        assert!(b.peak.load(Ordering::SeqCst) >= 2);
    }
}
