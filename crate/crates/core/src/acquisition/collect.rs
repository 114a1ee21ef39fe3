use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use thiserror::Error;
use tracing::{debug, warn};

use super::{GeneratedPrompt, Teacher, TeacherRequest};
use crate::text::PromptResponsePair;

/// Exponential backoff between retries of one prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub initial: Duration,
    pub max: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self { initial: Duration::from_secs(1), max: Duration::from_secs(30) }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Self { initial: Duration::ZERO, max: Duration::ZERO }
    }

    /// Delay before retry number `retry` (0-based): initial·2^retry, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        self.initial.checked_mul(1u32.checked_shl(retry).unwrap_or(u32::MAX)).unwrap_or(self.max).min(self.max)
    }
}

#[derive(Debug, Clone)]
pub struct CollectOptions {
    pub concurrency: usize,
    pub retry_limit: u32,
    pub max_tokens: u32,
    pub temperature: f64,
    pub backoff: Backoff,
    /// Fixed timestamp stamped on every pair; `None` uses the wall clock at
    /// the moment each response arrives.
    pub created_at: Option<DateTime<Utc>>,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            retry_limit: 2,
            max_tokens: 256,
            temperature: 0.8,
            backoff: Backoff::default(),
            created_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectFailure {
    pub index: usize,
    pub prompt: String,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct CollectOutcome {
    /// In input prompt order, skipping failures.
    pub pairs: Vec<PromptResponsePair>,
    pub failures: Vec<CollectFailure>,
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("concurrency must be at least 1")]
    InvalidConcurrency,
    #[error("teacher unreachable: all {attempted} prompts failed (last error: {last_error})")]
    TeacherUnreachable { attempted: usize, last_error: String },
}

/// Queries `teacher` once per prompt with a bounded worker pool, retrying
/// each prompt up to `retry_limit` extra times. Failed prompts are logged and
/// skipped.
pub fn collect_responses(
    prompts: &[GeneratedPrompt],
    teacher: &dyn Teacher,
    options: &CollectOptions,
) -> Result<CollectOutcome, CollectError> {
    if options.concurrency == 0 {
        return Err(CollectError::InvalidConcurrency);
    }
    let slots: Vec<Mutex<Option<Result<PromptResponsePair, CollectFailure>>>> =
        prompts.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.concurrency.min(prompts.len().max(1));

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= prompts.len() {
                    break;
                }
                let result = query_one(i, &prompts[i], teacher, options);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut out = CollectOutcome::default();
    for slot in slots {
        match slot.into_inner().unwrap().expect("every prompt visited") {
            Ok(pair) => out.pairs.push(pair),
            Err(f) => out.failures.push(f),
        }
    }
    if !prompts.is_empty() && out.pairs.is_empty() {
        let last_error = out.failures.last().map(|f| f.error.clone()).unwrap_or_default();
        return Err(CollectError::TeacherUnreachable { attempted: prompts.len(), last_error });
    }
    Ok(out)
}

fn query_one(
    index: usize,
    prompt: &GeneratedPrompt,
    teacher: &dyn Teacher,
    options: &CollectOptions,
) -> Result<PromptResponsePair, CollectFailure> {
    let request = TeacherRequest {
        prompt: prompt.text.clone(),
        max_tokens: options.max_tokens,
        temperature: options.temperature,
    };
    let mut attempts = 0;
    loop {
        attempts += 1;
        match teacher.complete(&request) {
            Ok(resp) if !resp.text.trim().is_empty() => {
                return Ok(PromptResponsePair {
                    prompt: prompt.text.clone(),
                    response: resp.text,
                    source: teacher.source(),
                    template_id: Some(prompt.template_id.clone()),
                    created_at: options.created_at.unwrap_or_else(Utc::now),
                });
            }
            outcome => {
                let error = match outcome {
                    Ok(_) => "empty completion".to_string(),
                    Err(e) => e.to_string(),
                };
                if attempts > options.retry_limit {
                    warn!(index, attempts, %error, "giving up on prompt");
                    return Err(CollectFailure { index, prompt: prompt.text.clone(), attempts, error });
                }
                let wait = options.backoff.delay(attempts - 1);
                debug!(index, attempts, %error, ?wait, "retrying prompt");
                std::thread::sleep(wait);
            }
        }
    }
}
