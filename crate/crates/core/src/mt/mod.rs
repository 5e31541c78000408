//! Backtranslation client: cache lookup, batching, rate limiting and retry
//! around a pluggable [`TranslationBackend`].

pub mod backend;
pub mod cache;
pub mod limiter;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Record;
use crate::error::{Error, Result};

pub use backend::{BackendError, FixtureEntry, HttpBackend, HttpFlavor, MockBackend, TranslationBackend};
pub use cache::TranslationCache;
pub use limiter::{Clock, ManualClock, RateLimiter, SystemClock};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source_lang: String,
    pub target_lang: String,
}

impl TranslationRequest {
    pub fn new(
        text: impl Into<String>,
        source_lang: impl Into<String>,
        target_lang: impl Into<String>,
    ) -> Result<Self> {
        let req = TranslationRequest {
            text: text.into(),
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invalid("translation request with empty text"));
        }
        if self.source_lang == self.target_lang {
            return Err(Error::invalid(format!(
                "source and target language are both {:?}",
                self.source_lang
            )));
        }
        Ok(())
    }

    /// Human-readable key used by mock fixtures: `"no>en:Hei"`.
    pub fn key(&self) -> String {
        format!("{}>{}:{}", self.source_lang, self.target_lang, self.text)
    }

    /// Cache key: sha256 over text, languages and backend label.
    pub fn cache_key(&self, backend: &str) -> String {
        let mut h = Sha256::new();
        for part in [&self.text, &self.source_lang, &self.target_lang] {
            h.update(part.as_bytes());
            h.update([0x1f]);
        }
        h.update(backend.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub request: TranslationRequest,
    pub translation: String,
    pub backend: String,
    pub fetched_at: String,
}

impl Record for TranslationRecord {
    fn record_id(&self) -> String {
        self.request.key()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Permanent,
    Transient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationFailure {
    pub request: TranslationRequest,
    pub kind: FailureKind,
    pub message: String,
    pub attempts: u32,
}

impl Record for TranslationFailure {
    fn record_id(&self) -> String {
        self.request.key()
    }
}

pub type TranslationOutcome = std::result::Result<TranslationRecord, TranslationFailure>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Backend calls per second; `0` or non-finite disables limiting.
    pub requests_per_second: f64,
    pub batch_size: usize,
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    /// First backoff delay in milliseconds, doubled on each retry.
    pub backoff_ms: u64,
    /// Batches in flight at once.
    pub concurrency: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            requests_per_second: 5.0,
            batch_size: 32,
            max_retries: 3,
            backoff_ms: 500,
            concurrency: 4,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.concurrency == 0 {
            return Err(Error::invalid("concurrency must be at least 1"));
        }
        if self.requests_per_second < 0.0 || self.requests_per_second.is_nan() {
            return Err(Error::invalid("requests_per_second must be non-negative"));
        }
        Ok(())
    }

    fn limiter(&self) -> RateLimiter {
        if self.requests_per_second > 0.0 && self.requests_per_second.is_finite() {
            RateLimiter::new(self.requests_per_second)
        } else {
            RateLimiter::new(f64::INFINITY)
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << retry.min(20)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub requests: usize,
    pub cache_hits: usize,
    pub backend_calls: usize,
    pub retries: usize,
    pub fetched: usize,
    pub permanent_failures: usize,
    pub transient_failures: usize,
}

pub struct TranslationClient {
    backend: Arc<dyn TranslationBackend>,
    cache: Option<Arc<TranslationCache>>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    config: ClientConfig,
    stats: Mutex<ClientStats>,
}

impl TranslationClient {
    pub fn new(
        backend: Arc<dyn TranslationBackend>,
        cache: Option<Arc<TranslationCache>>,
        config: ClientConfig,
    ) -> Result<Self> {
        Self::with_clock(backend, cache, config, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(
        backend: Arc<dyn TranslationBackend>,
        cache: Option<Arc<TranslationCache>>,
        config: ClientConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(TranslationClient {
            limiter: config.limiter(),
            backend,
            cache,
            clock,
            config,
            stats: Mutex::new(ClientStats::default()),
        })
    }

    pub fn stats(&self) -> ClientStats {
        *self.stats.lock().unwrap()
    }

    pub fn backend_label(&self) -> &str {
        self.backend.label()
    }

    /// Translates `requests`, returning one outcome per request in input
    /// order. Only cache I/O errors are fatal.
    pub fn translate_batch(&self, requests: &[TranslationRequest]) -> Result<Vec<TranslationOutcome>> {
        let label = self.backend.label().to_string();
        let mut out: Vec<Option<TranslationOutcome>> = vec![None; requests.len()];
        let mut pending: Vec<(String, TranslationRequest)> = Vec::new();
        let mut waiting: HashMap<String, Vec<usize>> = HashMap::new();
        let mut hits = 0;

        for (i, req) in requests.iter().enumerate() {
            if let Err(e) = req.validate() {
                out[i] = Some(Err(TranslationFailure {
                    request: req.clone(),
                    kind: FailureKind::Permanent,
                    message: e.to_string(),
                    attempts: 0,
                }));
                continue;
            }
            let key = req.cache_key(&label);
            if let Some(slots) = waiting.get_mut(&key) {
                slots.push(i);
                continue;
            }
            if let Some(cache) = &self.cache {
                if let Some(rec) = cache.get(&key)? {
                    out[i] = Some(Ok(rec));
                    hits += 1;
                    continue;
                }
            }
            waiting.insert(key.clone(), vec![i]);
            pending.push((key, req.clone()));
        }

        let batches: Vec<&[(String, TranslationRequest)]> =
            pending.chunks(self.config.batch_size).collect();
        let results: Vec<Mutex<Vec<TranslationOutcome>>> =
            batches.iter().map(|_| Mutex::new(Vec::new())).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.concurrency.min(batches.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(b) else { break };
                    *results[b].lock().unwrap() = self.run_batch(batch, &label);
                });
            }
        });

        let mut stats = ClientStats {
            requests: requests.len(),
            cache_hits: hits,
            ..ClientStats::default()
        };
        for (outcome, (key, _)) in results
            .into_iter()
            .flat_map(|m| m.into_inner().unwrap())
            .zip(&pending)
        {
            match &outcome {
                Ok(rec) => {
                    stats.fetched += 1;
                    if let Some(cache) = &self.cache {
                        cache.put(key, rec)?;
                    }
                }
                Err(f) if f.kind == FailureKind::Permanent => stats.permanent_failures += 1,
                Err(_) => stats.transient_failures += 1,
            }
            for &i in &waiting[key] {
                out[i] = Some(outcome.clone());
            }
        }

        let mut total = self.stats.lock().unwrap();
        total.requests += stats.requests;
        total.cache_hits += stats.cache_hits;
        total.fetched += stats.fetched;
        total.permanent_failures += stats.permanent_failures;
        total.transient_failures += stats.transient_failures;
        Ok(out.into_iter().map(|o| o.expect("every slot filled")).collect())
    }

    /// Translates one batch with per-item retry of transient failures.
    fn run_batch(&self, batch: &[(String, TranslationRequest)], label: &str) -> Vec<TranslationOutcome> {
        let mut done: Vec<Option<TranslationOutcome>> = vec![None; batch.len()];
        let mut todo: Vec<usize> = (0..batch.len()).collect();
        let mut attempt = 0u32;
        let mut last_error: HashMap<usize, String> = HashMap::new();
        while !todo.is_empty() {
            if attempt > 0 {
                if attempt > self.config.max_retries {
                    break;
                }
                self.stats.lock().unwrap().retries += todo.len();
                self.clock.sleep(self.config.backoff(attempt - 1));
            }
            attempt += 1;
            let reqs: Vec<TranslationRequest> = todo.iter().map(|&i| batch[i].1.clone()).collect();
            self.limiter.acquire(self.clock.as_ref());
            self.stats.lock().unwrap().backend_calls += 1;
            let answers = match self.backend.translate(&reqs) {
                Ok(a) if a.len() == reqs.len() => a,
                Ok(a) => {
                    let msg = format!("backend returned {} results for {} requests", a.len(), reqs.len());
                    vec![Err(BackendError::Transient(msg)); reqs.len()]
                }
                Err(e) => vec![Err(e); reqs.len()],
            };
            let mut retry = Vec::new();
            for (&i, answer) in todo.iter().zip(answers) {
                let request = batch[i].1.clone();
                match answer {
                    Ok(t) if !t.trim().is_empty() => {
                        done[i] = Some(Ok(TranslationRecord {
                            request,
                            translation: t,
                            backend: label.to_string(),
                            fetched_at: chrono::Utc::now()
                                .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                        }))
                    }
                    Ok(_) => {
                        done[i] = Some(Err(TranslationFailure {
                            request,
                            kind: FailureKind::Permanent,
                            message: "empty translation".into(),
                            attempts: attempt,
                        }))
                    }
                    Err(BackendError::Permanent(message)) => {
                        done[i] = Some(Err(TranslationFailure {
                            request,
                            kind: FailureKind::Permanent,
                            message,
                            attempts: attempt,
                        }))
                    }
                    Err(BackendError::Transient(message)) => {
                        last_error.insert(i, message);
                        retry.push(i);
                    }
                }
            }
            todo = retry;
        }
        for i in todo {
            log::warn!("giving up on {:?} after {attempt} attempts", batch[i].1.key());
            done[i] = Some(Err(TranslationFailure {
                request: batch[i].1.clone(),
                kind: FailureKind::Transient,
                message: last_error.remove(&i).unwrap_or_default(),
                attempts: attempt,
            }));
        }
        done.into_iter().map(|o| o.expect("batch slot filled")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> TranslationRequest {
        TranslationRequest::new(text, "no", "en").unwrap()
    }

    fn entry(text: &str, tr: Option<&str>, status: Option<u16>, fail_times: u32) -> FixtureEntry {
        FixtureEntry {
            key: req(text).key(),
            translation: tr.map(str::to_string),
            status,
            fail_times,
        }
    }

    fn fast() -> ClientConfig {
        ClientConfig {
            requests_per_second: 0.0,
            backoff_ms: 10,
            ..ClientConfig::default()
        }
    }

    #[test]
    fn request_invariants() {
        assert!(TranslationRequest::new("", "no", "en").is_err());
        assert!(TranslationRequest::new("  ", "no", "en").is_err());
        assert!(TranslationRequest::new("Hei", "en", "en").is_err());
        assert_eq!(req("Hei").key(), "no>en:Hei");
    }

    #[test]
    fn cache_key_separates_fields() {
        let a = TranslationRequest::new("a", "no", "en").unwrap();
        assert_ne!(a.cache_key("mock"), a.cache_key("http"));
        let b = TranslationRequest::new("a", "es", "en").unwrap();
        assert_ne!(a.cache_key("mock"), b.cache_key("mock"));
        assert_eq!(a.cache_key("mock").len(), 64);
    }

    #[test]
    fn worked_example_backtranslation_and_cache_hit() {
        let dir = tempfile::tempdir().unwrap();
        let r = req("Og det finnes kun en Sannhet.");
        let mock = Arc::new(MockBackend::from_pairs([(&r, "And there is only one truth.")]));
        let cache = Arc::new(TranslationCache::open(dir.path()).unwrap());
        let client = TranslationClient::new(mock.clone(), Some(cache), fast()).unwrap();
        let first = client.translate_batch(std::slice::from_ref(&r)).unwrap();
        assert_eq!(first[0].as_ref().unwrap().translation, "And there is only one truth.");
        assert_eq!(mock.calls(), 1);
        let second = client.translate_batch(std::slice::from_ref(&r)).unwrap();
        assert_eq!(second, first);
        assert_eq!(mock.calls(), 1);
        assert_eq!(client.stats().cache_hits, 1);
    }

    #[test]
    fn permanent_failure_in_middle_keeps_order() {
        let reqs = [req("en"), req("to"), req("tre")];
        let mock = Arc::new(MockBackend::new([
            entry("en", Some("one"), None, 0),
            entry("to", None, Some(404), 0),
            entry("tre", Some("three"), None, 0),
        ]));
        let client = TranslationClient::new(mock.clone(), None, fast()).unwrap();
        let out = client.translate_batch(&reqs).unwrap();
        assert_eq!(out[0].as_ref().unwrap().translation, "one");
        let fail = out[1].as_ref().unwrap_err();
        assert_eq!(fail.kind, FailureKind::Permanent);
        assert_eq!(fail.attempts, 1);
        assert_eq!(out[2].as_ref().unwrap().translation, "three");
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn transient_failures_retry_with_backoff() {
        let clock = Arc::new(ManualClock::default());
        let mock = Arc::new(MockBackend::new([entry("hei", Some("hi"), None, 2)]));
        let config = ClientConfig {
            backoff_ms: 100,
            ..fast()
        };
        let client = TranslationClient::with_clock(mock.clone(), None, config, clock.clone()).unwrap();
        let out = client.translate_batch(&[req("hei")]).unwrap();
        assert_eq!(out[0].as_ref().unwrap().translation, "hi");
        assert_eq!(mock.calls(), 3);
        // 100ms + 200ms
        assert_eq!(clock.now(), Duration::from_millis(300));
        assert_eq!(client.stats().retries, 2);
    }

    #[test]
    fn retry_cap_yields_transient_failure() {
        let clock = Arc::new(ManualClock::default());
        let mock = Arc::new(MockBackend::new([entry("hei", None, Some(503), 0)]));
        let config = ClientConfig {
            max_retries: 2,
            ..fast()
        };
        let client = TranslationClient::with_clock(mock.clone(), None, config, clock).unwrap();
        let out = client.translate_batch(&[req("hei")]).unwrap();
        let fail = out[0].as_ref().unwrap_err();
        assert_eq!(fail.kind, FailureKind::Transient);
        assert_eq!(fail.attempts, 3);
        assert_eq!(mock.calls(), 3);
        assert!(fail.message.contains("503"));
    }

    #[test]
    fn batches_and_rate_limit_on_virtual_clock() {
        let clock = Arc::new(ManualClock::default());
        let texts: Vec<String> = (0..23).map(|i| format!("setning {i}")).collect();
        let reqs: Vec<_> = texts.iter().map(|t| req(t)).collect();
        let pairs: Vec<(TranslationRequest, String)> =
            reqs.iter().map(|r| (r.clone(), format!("sentence {}", &r.text[8..]))).collect();
        let mock = Arc::new(
            MockBackend::from_pairs(pairs.iter().map(|(r, t)| (r, t.as_str())))
                .with_clock(clock.clone()),
        );
        let config = ClientConfig {
            requests_per_second: 4.0,
            batch_size: 5,
            concurrency: 1,
            ..fast()
        };
        let client = TranslationClient::with_clock(mock.clone(), None, config, clock).unwrap();
        let out = client.translate_batch(&reqs).unwrap();
        for (o, (_, t)) in out.iter().zip(&pairs) {
            assert_eq!(&o.as_ref().unwrap().translation, t);
        }
        assert_eq!(mock.batch_sizes(), [5, 5, 5, 5, 3]);
        let times = mock.call_times();
        for w in times.windows(2) {
            assert!(w[1] - w[0] >= Duration::from_millis(250), "{times:?}");
        }
    }

    #[test]
    fn duplicates_fetched_once_and_order_kept_under_concurrency() {
        let texts: Vec<String> = (0..40).map(|i| format!("s{}", i % 17)).collect();
        let reqs: Vec<_> = texts.iter().map(|t| req(t)).collect();
        let mock = Arc::new(MockBackend::new(
            (0..17).map(|i| entry(&format!("s{i}"), Some(&format!("t{i}")), None, 0)),
        ));
        let config = ClientConfig {
            batch_size: 2,
            concurrency: 6,
            ..fast()
        };
        let client = TranslationClient::new(mock.clone(), None, config).unwrap();
        let out = client.translate_batch(&reqs).unwrap();
        for (o, t) in out.iter().zip(&texts) {
            assert_eq!(o.as_ref().unwrap().translation, t.replace('s', "t"));
        }
        assert_eq!(mock.batch_sizes().iter().sum::<usize>(), 17);
    }

    #[test]
    fn missing_fixture_is_permanent() {
        let mock = Arc::new(MockBackend::new([]));
        let client = TranslationClient::new(mock, None, fast()).unwrap();
        let out = client.translate_batch(&[req("ukjent")]).unwrap();
        assert_eq!(out[0].as_ref().unwrap_err().kind, FailureKind::Permanent);
    }

    #[test]
    fn empty_input() {
        let mock = Arc::new(MockBackend::new([]));
        let client = TranslationClient::new(mock.clone(), None, fast()).unwrap();
        assert!(client.translate_batch(&[]).unwrap().is_empty());
        assert_eq!(mock.calls(), 0);
    }
}
