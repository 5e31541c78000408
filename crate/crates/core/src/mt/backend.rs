use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::limiter::Clock;
use super::TranslationRequest;
use crate::corpus::{read_jsonl, Record};
use crate::error::{Error, Result};

/// Failure reported by a backend. Permanent failures (HTTP 4xx, missing
/// fixture) are never retried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendError {
    Permanent(String),
    Transient(String),
}

impl BackendError {
    pub fn message(&self) -> &str {
        match self {
            BackendError::Permanent(m) | BackendError::Transient(m) => m,
        }
    }

    pub fn from_status(status: u16, body: &str) -> Self {
        let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
        if (400..500).contains(&status) && status != 408 && status != 429 {
            BackendError::Permanent(msg)
        } else {
            BackendError::Transient(msg)
        }
    }
}

pub type ItemResult = std::result::Result<String, BackendError>;

/// A translation provider. One call translates one batch; the result has one
/// entry per request in the same order, or a single error for the whole
/// batch.
pub trait TranslationBackend: Send + Sync {
    fn label(&self) -> &str;

    fn translate(
        &self,
        batch: &[TranslationRequest],
    ) -> std::result::Result<Vec<ItemResult>, BackendError>;
}

/// One line of a mock fixture. `status` scripts a failure; `fail_times`
/// makes the first N lookups fail transiently before `translation` is served.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fail_times: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl Record for FixtureEntry {
    fn record_id(&self) -> String {
        self.key.clone()
    }
}

/// Offline backend answering from a fixture map keyed by
/// [`TranslationRequest::key`]. Unknown keys fail permanently, like a 404.
pub struct MockBackend {
    label: String,
    entries: HashMap<String, FixtureEntry>,
    remaining_failures: Mutex<HashMap<String, u32>>,
    calls: AtomicUsize,
    clock: Option<Arc<dyn Clock>>,
    call_times: Mutex<Vec<Duration>>,
    batch_sizes: Mutex<Vec<usize>>,
}

impl MockBackend {
    pub fn new(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let entries: HashMap<String, FixtureEntry> =
            entries.into_iter().map(|e| (e.key.clone(), e)).collect();
        let remaining = entries
            .values()
            .filter(|e| e.fail_times > 0)
            .map(|e| (e.key.clone(), e.fail_times))
            .collect();
        MockBackend {
            label: "mock".to_string(),
            entries,
            remaining_failures: Mutex::new(remaining),
            calls: AtomicUsize::new(0),
            clock: None,
            call_times: Mutex::new(Vec::new()),
            batch_sizes: Mutex::new(Vec::new()),
        }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a TranslationRequest, &'a str)>) -> Self {
        Self::new(pairs.into_iter().map(|(r, t)| FixtureEntry {
            key: r.key(),
            translation: Some(t.to_string()),
            status: None,
            fail_times: 0,
        }))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let entries: Vec<FixtureEntry> = read_jsonl(path)?.collect::<Result<_>>()?;
        Ok(Self::new(entries))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Records each call's timestamp from `clock`.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn call_times(&self) -> Vec<Duration> {
        self.call_times.lock().unwrap().clone()
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batch_sizes.lock().unwrap().clone()
    }

    fn answer(&self, req: &TranslationRequest) -> ItemResult {
        let key = req.key();
        let Some(entry) = self.entries.get(&key) else {
            return Err(BackendError::Permanent(format!("no fixture for {key:?}")));
        };
        {
            let mut remaining = self.remaining_failures.lock().unwrap();
            if let Some(n) = remaining.get_mut(&key).filter(|n| **n > 0) {
                *n -= 1;
                return Err(BackendError::Transient("scripted transient failure".into()));
            }
        }
        if let Some(status) = entry.status {
            return Err(BackendError::from_status(status, "scripted failure"));
        }
        entry
            .translation
            .clone()
            .ok_or_else(|| BackendError::Permanent(format!("fixture for {key:?} has no translation")))
    }
}

impl TranslationBackend for MockBackend {
    fn label(&self) -> &str {
        &self.label
    }

    fn translate(
        &self,
        batch: &[TranslationRequest],
    ) -> std::result::Result<Vec<ItemResult>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(clock) = &self.clock {
            self.call_times.lock().unwrap().push(clock.now());
        }
        self.batch_sizes.lock().unwrap().push(batch.len());
        Ok(batch.iter().map(|r| self.answer(r)).collect())
    }
}

/// Wire format spoken by [`HttpBackend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HttpFlavor {
    /// `POST {"q": [...], "source", "target"}` → `{"translations": [...]}`,
    /// bearer token auth.
    Generic,
    /// Google Cloud Translation v2: key in the query string, response under
    /// `data.translations[].translatedText`.
    GoogleV2,
}

pub const CREDENTIALS_ENV: &str = "AFFIRM_MT_API_KEY";

pub struct HttpBackend {
    label: String,
    url: String,
    flavor: HttpFlavor,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct GenericRequest<'a> {
    q: Vec<&'a str>,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct GenericResponse {
    translations: Vec<String>,
}

#[derive(Serialize)]
struct GoogleRequest<'a> {
    q: Vec<&'a str>,
    source: &'a str,
    target: &'a str,
    format: &'a str,
}

#[derive(Deserialize)]
struct GoogleResponse {
    data: GoogleData,
}

#[derive(Deserialize)]
struct GoogleData {
    translations: Vec<GoogleTranslation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct GoogleTranslation {
    translated_text: String,
}

impl HttpBackend {
    pub fn new(
        url: impl Into<String>,
        flavor: HttpFlavor,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(HttpBackend {
            label: match flavor {
                HttpFlavor::Generic => "http".to_string(),
                HttpFlavor::GoogleV2 => "google-v2".to_string(),
            },
            url: url.into(),
            flavor,
            api_key,
            client,
        })
    }

    /// Reads the API key from [`CREDENTIALS_ENV`].
    pub fn from_env(url: impl Into<String>, flavor: HttpFlavor, timeout: Duration) -> Result<Self> {
        Self::new(url, flavor, std::env::var(CREDENTIALS_ENV).ok(), timeout)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl TranslationBackend for HttpBackend {
    fn label(&self) -> &str {
        &self.label
    }

    fn translate(
        &self,
        batch: &[TranslationRequest],
    ) -> std::result::Result<Vec<ItemResult>, BackendError> {
        let Some(first) = batch.first() else {
            return Ok(Vec::new());
        };
        if batch
            .iter()
            .any(|r| r.source_lang != first.source_lang || r.target_lang != first.target_lang)
        {
            return Err(BackendError::Permanent("mixed language pairs in one batch".into()));
        }
        let texts: Vec<&str> = batch.iter().map(|r| r.text.as_str()).collect();
        let mut req = match (self.flavor, &self.api_key) {
            (HttpFlavor::GoogleV2, Some(key)) => {
                let url = reqwest::Url::parse_with_params(&self.url, [("key", key)])
                    .map_err(|e| BackendError::Permanent(format!("bad url {:?}: {e}", self.url)))?;
                self.client.post(url)
            }
            _ => self.client.post(&self.url),
        };
        req = match self.flavor {
            HttpFlavor::Generic => {
                if let Some(key) = &self.api_key {
                    req = req.bearer_auth(key);
                }
                req.json(&GenericRequest {
                    q: texts,
                    source: &first.source_lang,
                    target: &first.target_lang,
                })
            }
            HttpFlavor::GoogleV2 => req.json(&GoogleRequest {
                    q: texts,
                    source: &first.source_lang,
                    target: &first.target_lang,
                format: "text",
            }),
        };
        let resp = req
            .send()
            .map_err(|e| BackendError::Transient(format!("request failed: {e}")))?;
        let status = resp.status().as_u16();
        let body = resp
            .text()
            .map_err(|e| BackendError::Transient(format!("reading body: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::from_status(status, &body));
        }
        let translations: Vec<String> = match self.flavor {
            HttpFlavor::Generic => serde_json::from_str::<GenericResponse>(&body)
                .map(|r| r.translations),
            HttpFlavor::GoogleV2 => serde_json::from_str::<GoogleResponse>(&body)
                .map(|r| r.data.translations.into_iter().map(|t| t.translated_text).collect()),
        }
        .map_err(|e| BackendError::Transient(format!("malformed response: {e}")))?;
        if translations.len() != batch.len() {
            return Err(BackendError::Transient(format!(
                "expected {} translations, got {}",
                batch.len(),
                translations.len()
            )));
        }
        Ok(translations.into_iter().map(Ok).collect())
    }
}
