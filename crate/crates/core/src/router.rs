//! Routes classifier inputs by negation: negated sentences get an affirmative
//! interpretation appended after a separator, the rest pass through.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Record};
use crate::cue::{Affix, Detector, TaggedSentence};
use crate::error::{Error, Result};
use crate::nli::{write_tsv, ExportFormat};

pub const DEFAULT_SEPARATOR: &str = "[SEP]";

/// Produces an affirmative interpretation for a negated sentence.
pub trait InterpretationGenerator: Send + Sync {
    fn label(&self) -> &str;

    fn generate(&self, text: &str, tagged: &TaggedSentence) -> std::result::Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupEntry {
    pub text: String,
    pub interpretation: String,
}

impl Record for LookupEntry {
    fn record_id(&self) -> String {
        self.text.clone()
    }
}

/// Exact-text lookup table.
#[derive(Debug, Clone, Default)]
pub struct LookupGenerator {
    table: HashMap<String, String>,
}

impl LookupGenerator {
    pub fn new(entries: impl IntoIterator<Item = LookupEntry>) -> Self {
        LookupGenerator {
            table: entries
                .into_iter()
                .map(|e| (e.text, e.interpretation))
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(read_jsonl(path)?.collect::<Result<Vec<LookupEntry>>>()?))
    }
}

impl InterpretationGenerator for LookupGenerator {
    fn label(&self) -> &str {
        "lookup"
    }

    fn generate(&self, text: &str, _: &TaggedSentence) -> std::result::Result<String, String> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| format!("no interpretation for {text:?}"))
    }
}

/// Text-to-text service: `POST {"text"}` answered by `{"interpretation"}`.
pub struct HttpGenerator {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    interpretation: String,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(HttpGenerator {
            url: url.into(),
            client,
        })
    }
}

impl InterpretationGenerator for HttpGenerator {
    fn label(&self) -> &str {
        "http"
    }

    fn generate(&self, text: &str, _: &TaggedSentence) -> std::result::Result<String, String> {
        let resp = self
            .client
            .post(&self.url)
            .json(&GenerateRequest { text })
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {}", status.as_u16()));
        }
        resp.json::<GenerateResponse>()
            .map(|r| r.interpretation)
            .map_err(|e| e.to_string())
    }
}

/// Deletes the detected cues (and negative affixes) from the sentence. The
/// result frequently changes the meaning; it exists as a baseline only.
#[derive(Debug, Clone, Copy, Default)]
pub struct CueDeletionGenerator;

impl InterpretationGenerator for CueDeletionGenerator {
    fn label(&self) -> &str {
        "cue-deletion (meaning-unsafe)"
    }

    fn generate(&self, _: &str, tagged: &TaggedSentence) -> std::result::Result<String, String> {
        let mut texts: Vec<Option<String>> = tagged.tokens.iter().map(|t| Some(t.text.clone())).collect();
        for cue in &tagged.cues {
            match &cue.affix {
                Some(affix) => {
                    for &i in &cue.token_indices {
                        let tok = &tagged.tokens[i].text;
                        texts[i] = Some(strip_affix(tok, affix));
                    }
                }
                None => cue.token_indices.iter().for_each(|&i| texts[i] = None),
            }
        }
        let mut out = String::new();
        let mut prev_end: Option<usize> = None;
        for (tok, text) in tagged.tokens.iter().zip(texts) {
            let Some(text) = text else { continue };
            if prev_end.is_some_and(|e| e < tok.start) {
                out.push(' ');
            }
            out.push_str(&text);
            prev_end = Some(tok.end);
        }
        if out.trim().is_empty() {
            return Err("nothing left after deleting cues".into());
        }
        Ok(out)
    }
}

fn strip_affix(token: &str, affix: &Affix) -> String {
    let lower = token.to_lowercase();
    match affix {
        Affix::Prefix(p) if lower.starts_with(p.as_str()) && token.is_char_boundary(p.len()) => {
            token[p.len()..].to_string()
        }
        Affix::Suffix(s) if lower.ends_with(s.as_str()) && token.len() >= s.len() => {
            token[..token.len() - s.len()].to_string()
        }
        _ => token.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Importance {
    Important,
    Unimportant,
}

impl std::str::FromStr for Importance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "important" => Ok(Importance::Important),
            "unimportant" => Ok(Importance::Unimportant),
            other => Err(Error::invalid(format!("unknown importance label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutedExample {
    pub id: String,
    pub text: String,
    pub has_negation: bool,
    pub interpretation: Option<String>,
    pub combined: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<Importance>,
}

impl Record for RoutedExample {
    fn record_id(&self) -> String {
        self.id.clone()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteStats {
    pub total: usize,
    pub negated: usize,
    /// Negated inputs passed through because the generator failed.
    pub fallbacks: usize,
    /// Generated interpretations that themselves contain negation.
    pub negated_interpretations: usize,
}

pub struct Router<'a> {
    detector: &'a Detector,
    generator: &'a dyn InterpretationGenerator,
    separator: String,
    lang: String,
    max_in_flight: usize,
}

impl<'a> Router<'a> {
    pub fn new(detector: &'a Detector, generator: &'a dyn InterpretationGenerator) -> Self {
        Router {
            detector,
            generator,
            separator: DEFAULT_SEPARATOR.to_string(),
            lang: "en".to_string(),
            max_in_flight: 4,
        }
    }

    pub fn separator(mut self, sep: impl Into<String>) -> Self {
        self.separator = sep.into();
        self
    }

    pub fn lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = lang.into();
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn combine(&self, text: &str, interpretation: &str) -> String {
        format!("{text} {} {interpretation}", self.separator)
    }

    /// Routes `(id, text)` inputs. Output order and cardinality match the input.
    pub fn route(&self, inputs: &[(String, String)]) -> Result<(Vec<RoutedExample>, RouteStats)> {
        self.detector.lexicons().get(&self.lang)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_in_flight)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        let routed: Vec<(RoutedExample, bool, bool)> = pool.install(|| {
            inputs
                .par_iter()
                .map(|(id, text)| self.route_one(id, text))
                .collect::<Result<_>>()
        })?;
        let mut stats = RouteStats {
            total: routed.len(),
            ..RouteStats::default()
        };
        let examples = routed
            .into_iter()
            .map(|(ex, fallback, neg_interp)| {
                stats.negated += ex.has_negation as usize;
                stats.fallbacks += fallback as usize;
                stats.negated_interpretations += neg_interp as usize;
                ex
            })
            .collect();
        if stats.fallbacks > 0 {
            log::warn!("{} negated inputs fell back to pass-through", stats.fallbacks);
        }
        Ok((examples, stats))
    }

    fn route_one(&self, id: &str, text: &str) -> Result<(RoutedExample, bool, bool)> {
        let tagged = self.detector.detect(text, &self.lang)?;
        let mut ex = RoutedExample {
            id: id.to_string(),
            text: text.to_string(),
            has_negation: tagged.has_negation(),
            interpretation: None,
            combined: text.to_string(),
            importance: None,
        };
        if !ex.has_negation {
            return Ok((ex, false, false));
        }
        match self.generator.generate(text, &tagged) {
            Ok(interp) => {
                let negated = self.detector.has_negation(&interp, &self.lang)?;
                if negated {
                    log::debug!("interpretation for {id} contains negation: {interp:?}");
                }
                ex.combined = self.combine(text, &interp);
                ex.interpretation = Some(interp);
                Ok((ex, false, negated))
            }
            Err(msg) => {
                log::debug!("generator failed for {id}: {msg}");
                Ok((ex, true, false))
            }
        }
    }
}

pub fn export_routed<I>(examples: I, format: ExportFormat, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator<Item = RoutedExample>,
{
    let path = path.as_ref();
    match format {
        ExportFormat::Jsonl => write_jsonl(examples, path),
        ExportFormat::Tsv => write_tsv(
            path,
            &["id", "text", "has_negation", "interpretation", "combined"],
            examples.into_iter().map(|e| {
                vec![
                    e.id,
                    e.text,
                    e.has_negation.to_string(),
                    e.interpretation.unwrap_or_default(),
                    e.combined,
                ]
            }),
        ),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportanceAnnotations {
    pub labels: HashMap<String, Importance>,
    /// Duplicate ids whose later label disagreed with an earlier one.
    pub conflicts: usize,
}

impl ImportanceAnnotations {
    /// Parses `id<TAB>label` lines. Later lines win over earlier ones.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut ann = ImportanceAnnotations::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let format_err = |reason: String| Error::Format {
                location: format!("{origin}:{}", n + 1),
                reason,
            };
            let (id, label) = line
                .split_once('\t')
                .ok_or_else(|| format_err("expected id<TAB>label".into()))?;
            let label: Importance = label.parse().map_err(|e: Error| format_err(e.to_string()))?;
            if let Some(prev) = ann.labels.insert(id.to_string(), label) {
                if prev != label {
                    log::warn!("{origin}:{}: conflicting importance for {id:?}; keeping {label:?}", n + 1);
                    ann.conflicts += 1;
                }
            }
        }
        Ok(ann)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportanceSplit {
    pub important: Vec<RoutedExample>,
    pub unimportant: Vec<RoutedExample>,
    pub unannotated: Vec<RoutedExample>,
}

pub fn split_by_importance(
    examples: impl IntoIterator<Item = RoutedExample>,
    annotations: &ImportanceAnnotations,
) -> ImportanceSplit {
    let mut split = ImportanceSplit::default();
    for mut ex in examples {
        ex.importance = annotations.labels.get(&ex.id).copied();
        match ex.importance {
            Some(Importance::Important) => split.important.push(ex),
            Some(Importance::Unimportant) => split.unimportant.push(ex),
            None => split.unannotated.push(ex),
        }
    }
    split
}
