//! Provider abstraction with retries, transcripts and a scripted replay
//! provider.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Prompt;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("provider unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: Box<ProviderError> },
    #[error("no scripted response left for `{0}`")]
    NotScripted(String),
    #[error("unusable response: {0}")]
    BadResponse(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmRequest {
    /// Stable identifier derived from the tag and prompt contents.
    pub request_id: String,
    /// Call site, e.g. `teapot/identify` or `teapot/refine/2`.
    pub tag: String,
    pub prompt: Prompt,
}

impl VlmRequest {
    pub fn new(tag: impl Into<String>, prompt: Prompt) -> Self {
        let tag = tag.into();
        let mut h = Sha256::new();
        h.update(tag.as_bytes());
        h.update([0u8]);
        h.update(prompt.digest().as_bytes());
        let request_id = hex::encode(&h.finalize()[..8]);
        Self { request_id, tag, prompt }
    }
}

pub trait VlmProvider: Send + Sync {
    fn complete(&self, req: &VlmRequest) -> Result<String, ProviderError>;
}

impl<P: VlmProvider + ?Sized> VlmProvider for Arc<P> {
    fn complete(&self, req: &VlmRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }
}

impl<P: VlmProvider + ?Sized> VlmProvider for Box<P> {
    fn complete(&self, req: &VlmRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Same retry budget without waiting.
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Wait before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }
}

/// Append-only JSON Lines log of provider calls.
pub struct Transcript {
    out: Mutex<BufWriter<File>>,
}

impl Transcript {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(f)),
        })
    }

    fn record(&self, req: &VlmRequest, attempt: u32, result: &Result<String, ProviderError>) {
        let mut line = json!({
            "request_id": req.request_id,
            "tag": req.tag,
            "attempt": attempt,
            "prompt_sha256": req.prompt.digest(),
            "images": req.prompt.images,
        });
        match result {
            Ok(text) => line["response"] = json!(text),
            Err(e) => line["error"] = json!(e.to_string()),
        }
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        if writeln!(out, "{line}").and_then(|_| out.flush()).is_err() {
            tracing::warn!(tag = %req.tag, "failed to write transcript line");
        }
    }
}

/// Send `req`, retrying transport failures and rate limits with exponential
/// backoff. Timeouts and authentication failures are returned immediately.
pub fn query(
    provider: &dyn VlmProvider,
    policy: &RetryPolicy,
    req: &VlmRequest,
    transcript: Option<&Transcript>,
) -> Result<String, ProviderError> {
    let mut attempt = 0;
    loop {
        let result = provider.complete(req);
        if let Some(t) = transcript {
            t.record(req, attempt, &result);
        }
        match result {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < policy.max_retries => {
                tracing::debug!(tag = %req.tag, attempt, error = %e, "retrying provider call");
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(e) if e.is_retryable() => {
                return Err(ProviderError::Unavailable {
                    attempts: attempt + 1,
                    last: Box::new(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Caps the number of concurrent in-flight calls to the wrapped provider.
pub struct BoundedProvider<P> {
    inner: P,
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

pub const DEFAULT_CONCURRENCY: usize = 4;

impl<P: VlmProvider> BoundedProvider<P> {
    pub fn new(inner: P, cap: usize) -> Self {
        Self {
            inner,
            cap: cap.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    /// Highest number of simultaneous calls observed.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: VlmProvider> VlmProvider for BoundedProvider<P> {
    fn complete(&self, req: &VlmRequest) -> Result<String, ProviderError> {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.cap {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
            self.peak.fetch_max(*n, Ordering::SeqCst);
        }
        let result = self.inner.complete(req);
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        result
    }
}

/// One scripted reply: `{"ok": "<text>"}` or `{"error": "<kind>"}` where kind
/// is `transport`, `rate_limit`, `timeout` or `auth`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedReply {
    Ok(String),
    Error(String),
}

impl ScriptedReply {
    fn into_result(self) -> Result<String, ProviderError> {
        match self {
            ScriptedReply::Ok(text) => Ok(text),
            ScriptedReply::Error(kind) => Err(match kind.as_str() {
                "rate_limit" => ProviderError::RateLimited,
                "timeout" => ProviderError::Timeout,
                "auth" => ProviderError::Auth("scripted".into()),
                other => ProviderError::Transport(other.to_string()),
            }),
        }
    }
}

/// Replays per-tag reply queues. Calls for different tags never interfere,
/// so results are the same under any interleaving.
#[derive(Default)]
pub struct ScriptedProvider {
    queues: Mutex<HashMap<String, VecDeque<ScriptedReply>>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a `{"<tag>": [reply, ...]}` script.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let script: HashMap<String, Vec<ScriptedReply>> = serde_json::from_str(text)?;
        Ok(Self {
            queues: Mutex::new(script.into_iter().map(|(k, v)| (k, v.into())).collect()),
            calls: Mutex::default(),
        })
    }

    pub fn push(&self, tag: &str, reply: ScriptedReply) -> &Self {
        self.queues
            .lock()
            .unwrap()
            .entry(tag.to_string())
            .or_default()
            .push_back(reply);
        self
    }

    pub fn push_ok(&self, tag: &str, text: &str) -> &Self {
        self.push(tag, ScriptedReply::Ok(text.to_string()))
    }

    pub fn push_error(&self, tag: &str, kind: &str) -> &Self {
        self.push(tag, ScriptedReply::Error(kind.to_string()))
    }

    /// Tags of all calls received, in arrival order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self, tag: &str) -> usize {
        self.calls.lock().unwrap().iter().filter(|t| *t == tag).count()
    }
}

impl VlmProvider for ScriptedProvider {
    fn complete(&self, req: &VlmRequest) -> Result<String, ProviderError> {
        self.calls.lock().unwrap().push(req.tag.clone());
        let reply = self.queues.lock().unwrap().get_mut(&req.tag).and_then(VecDeque::pop_front);
        reply
            .ok_or_else(|| ProviderError::NotScripted(req.tag.clone()))
            .and_then(ScriptedReply::into_result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str) -> VlmRequest {
        VlmRequest::new(
            tag,
            Prompt {
                text: "p".into(),
                images: vec![],
            },
        )
    }

    #[test]
    fn single_canned_response() {
        let p = ScriptedProvider::new();
        p.push_ok("a", "hello");
        assert_eq!(query(&p, &RetryPolicy::immediate(), &req("a"), None).unwrap(), "hello");
        assert_eq!(p.call_count("a"), 1);
    }

    #[test]
    fn two_failures_then_success() {
        let p = ScriptedProvider::new();
        p.push_error("a", "transport").push_error("a", "rate_limit").push_ok("a", "ok");
        assert_eq!(query(&p, &RetryPolicy::immediate(), &req("a"), None).unwrap(), "ok");
        assert_eq!(p.call_count("a"), 3);
    }

    #[test]
    fn four_failures_exhaust_retries() {
        let p = ScriptedProvider::new();
        for _ in 0..4 {
            p.push_error("a", "transport");
        }
        p.push_ok("a", "too late");
        let err = query(&p, &RetryPolicy::immediate(), &req("a"), None).unwrap_err();
        assert!(matches!(err, ProviderError::Unavailable { attempts: 4, .. }));
        assert_eq!(p.call_count("a"), 4);
    }

    #[test]
    fn auth_and_timeout_are_not_retried() {
        for kind in ["auth", "timeout"] {
            let p = ScriptedProvider::new();
            p.push_error("a", kind).push_ok("a", "never");
            assert!(query(&p, &RetryPolicy::immediate(), &req("a"), None).is_err());
            assert_eq!(p.call_count("a"), 1);
        }
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_secs(1));
        assert_eq!(p.delay(2), Duration::from_secs(4));
    }

    #[test]
    fn request_ids_are_stable() {
        assert_eq!(req("a").request_id, req("a").request_id);
        assert_ne!(req("a").request_id, req("b").request_id);
    }

    #[test]
    fn script_from_json() {
        let p = ScriptedProvider::from_json(r#"{"x/identify": [{"error": "transport"}, {"ok": "fine"}]}"#).unwrap();
        assert_eq!(query(&p, &RetryPolicy::immediate(), &req("x/identify"), None).unwrap(), "fine");
        assert!(matches!(p.complete(&req("x/identify")), Err(ProviderError::NotScripted(_))));
    }
}
