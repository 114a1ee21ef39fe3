use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::PairSource;

/// Environment variable holding the bearer token for [`HttpTeacher`].
pub const API_KEY_ENV: &str = "TEACHER_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl TeacherRequest {
    pub fn validate(&self) -> Result<(), TeacherError> {
        if self.max_tokens == 0 {
            return Err(TeacherError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(TeacherError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherResponse {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("teacher returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("teacher reported an error")]
    Reported,
    #[error("teacher returned empty text with finish_reason=stop")]
    EmptyCompletion,
}

/// Anything that completes prompts. Implementations must be shareable across
/// the collection worker pool.
pub trait Teacher: Send + Sync {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError>;

    /// Provenance recorded on every pair this teacher produces.
    fn source(&self) -> PairSource {
        PairSource::Teacher
    }
}

/// Offline teacher that answers `prefix + prompt`, with an optional scripted
/// number of transient failures per prompt.
#[derive(Debug, Default)]
pub struct MockTeacher {
    prefix: String,
    always_fail: bool,
    failures: HashMap<String, usize>,
    attempts: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    delay: Duration,
}

impl MockTeacher {
    /// Replies `"ok: " + prompt`.
    pub fn echo() -> Self {
        Self::with_prefix("ok: ")
    }

    pub fn with_prefix(prefix: &str) -> Self {
        Self { prefix: prefix.to_string(), ..Default::default() }
    }

    pub fn failing() -> Self {
        Self { always_fail: true, ..Self::echo() }
    }

    /// The first `n` attempts for `prompt` fail.
    pub fn fail_first(mut self, prompt: &str, n: usize) -> Self {
        self.failures.insert(prompt.to_string(), n);
        self
    }

    /// Sleeps inside every call; lets tests observe concurrency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn attempts_for(&self, prompt: &str) -> usize {
        self.attempts.lock().unwrap().get(prompt).copied().unwrap_or(0)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Teacher for MockTeacher {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let attempt = {
            let mut a = self.attempts.lock().unwrap();
            let e = a.entry(request.prompt.clone()).or_default();
            *e += 1;
            *e
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);

        let scripted = self.failures.get(&request.prompt).copied().unwrap_or(0);
        if self.always_fail || attempt <= scripted {
            return Err(TeacherError::Transport(format!("mock failure on attempt {attempt}")));
        }
        Ok(TeacherResponse { text: format!("{}{}", self.prefix, request.prompt), finish_reason: FinishReason::Stop })
    }

    fn source(&self) -> PairSource {
        PairSource::Mock
    }
}

/// Teacher reached over HTTP: `POST url` with a JSON [`TeacherRequest`],
/// answered by a JSON [`TeacherResponse`].
pub struct HttpTeacher {
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTeacher {
    /// Reads the bearer token from `TEACHER_API_KEY` when set.
    pub fn new(url: impl Into<String>) -> Result<Self, TeacherError> {
        Self::with_api_key(url, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    pub fn with_api_key(url: impl Into<String>, api_key: Option<String>) -> Result<Self, TeacherError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| TeacherError::Transport(e.to_string()))?;
        Ok(Self { url: url.into(), api_key, client })
    }
}

impl Teacher for HttpTeacher {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError> {
        request.validate()?;
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TeacherError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(TeacherError::Status { status: status.as_u16(), body });
        }
        let out: TeacherResponse = resp.json().map_err(|e| TeacherError::Transport(e.to_string()))?;
        match out.finish_reason {
            FinishReason::Error => Err(TeacherError::Reported),
            FinishReason::Stop if out.text.is_empty() => Err(TeacherError::EmptyCompletion),
            _ => Ok(out),
        }
    }
}
