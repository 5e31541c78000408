//! Versioned TOML pipeline configuration.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::blend::DecayLaw;
use crate::corpus::{ingest_moses, ingest_tsv, SentencePair};
use crate::cue::{CrfModel, CueLexicon, Detector, LexiconSet};
use crate::error::{Error, Result};
use crate::mt::{
    ClientConfig, HttpBackend, HttpFlavor, MockBackend, TranslationBackend, TranslationCache,
    TranslationClient,
};
use crate::pipeline::DEFAULT_MAX_TARGET_TOKENS;
use crate::router::{CueDeletionGenerator, HttpGenerator, InterpretationGenerator, LookupGenerator, DEFAULT_SEPARATOR};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_max_tokens")]
    pub max_target_tokens: usize,
    #[serde(default)]
    pub corpora: Vec<CorpusConfig>,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// Per-language lexicon files replacing the bundled ones.
    #[serde(default)]
    pub lexicons: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub translation: TranslationConfig,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub blend: BlendConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_max_tokens() -> usize {
    DEFAULT_MAX_TARGET_TOKENS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Moses,
    Tsv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub label: String,
    pub format: CorpusFormat,
    /// Moses: [source, target]. TSV: [file].
    pub paths: Vec<PathBuf>,
    /// [source, target].
    pub langs: [String; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Rules,
    Crf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default)]
    pub kind: DetectorKind,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
    GoogleV2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslationConfig {
    pub backend: BackendKind,
    /// Mock fixture JSONL.
    pub fixture: Option<PathBuf>,
    pub url: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub timeout_secs: u64,
    #[serde(flatten)]
    pub client: ClientConfig,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        TranslationConfig {
            backend: BackendKind::Mock,
            fixture: None,
            url: None,
            cache_dir: None,
            timeout_secs: 30,
            client: ClientConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    #[default]
    Lookup,
    Http,
    CueDeletion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouterConfig {
    pub generator: GeneratorKind,
    pub lookup: Option<PathBuf>,
    pub url: Option<String>,
    pub separator: String,
    pub lang: String,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            generator: GeneratorKind::Lookup,
            lookup: None,
            url: None,
            separator: DEFAULT_SEPARATOR.to_string(),
            lang: "en".to_string(),
            max_in_flight: 4,
            timeout_secs: 30,
        }
    }
}

impl RouterConfig {
    pub fn build_generator(&self) -> Result<Box<dyn InterpretationGenerator>> {
        Ok(match self.generator {
            GeneratorKind::Lookup => {
                let path = self
                    .lookup
                    .as_ref()
                    .ok_or_else(|| Error::invalid("the lookup generator needs a lookup file"))?;
                Box::new(LookupGenerator::load(path)?)
            }
            GeneratorKind::Http => {
                let url = self
                    .url
                    .clone()
                    .ok_or_else(|| Error::invalid("the HTTP generator needs a url"))?;
                Box::new(HttpGenerator::new(url, Duration::from_secs(self.timeout_secs))?)
            }
            GeneratorKind::CueDeletion => Box::new(CueDeletionGenerator),
        })
    }
}

/// Curriculum defaults. The published work does not report its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub factor: f64,
    pub decay: DecayLaw,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            m: 1,
            n: 3,
            k: 2,
            factor: 0.5,
            decay: DecayLaw::Geometric,
        }
    }
}

/// One validation finding, tied to a config field path such as
/// `corpora[1].paths[0]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

fn diag(field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.into(),
        message: message.into(),
    }
}

impl PipelineConfig {
    /// Parses TOML text; relative paths are joined onto `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Format {
            location: "config".into(),
            reason: e.to_string(),
        })?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                location: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for c in &mut self.corpora {
            c.paths.iter_mut().for_each(fix);
        }
        self.lexicons.values_mut().for_each(fix);
        self.detector.model.iter_mut().for_each(fix);
        self.translation.fixture.iter_mut().for_each(fix);
        self.translation.cache_dir.iter_mut().for_each(fix);
        self.router.lookup.iter_mut().for_each(fix);
    }

    /// Every problem found, each tied to a field path. Empty means valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.version != CONFIG_VERSION {
            out.push(diag("version", format!("unsupported version {} (expected {CONFIG_VERSION})", self.version)));
        }
        if self.max_target_tokens < 1 {
            out.push(diag("max_target_tokens", "must be at least 1"));
        }
        let mut langs: Vec<String> = LexiconSet::bundled().languages();
        for (lang, path) in &self.lexicons {
            let field = format!("lexicons.{lang}");
            if !path.exists() {
                out.push(diag(field, format!("lexicon file {} does not exist", path.display())));
            } else if let Err(e) = CueLexicon::load(path) {
                out.push(diag(field, e.to_string()));
            } else if !langs.contains(lang) {
                langs.push(lang.clone());
            }
        }
        let mut labels = std::collections::HashSet::new();
        for (i, c) in self.corpora.iter().enumerate() {
            let field = |f: &str| format!("corpora[{i}].{f}");
            if c.label.trim().is_empty() {
                out.push(diag(field("label"), "must not be empty"));
            } else if !labels.insert(&c.label) {
                out.push(diag(field("label"), format!("duplicate corpus label {:?}", c.label)));
            }
            let want = match c.format {
                CorpusFormat::Moses => 2,
                CorpusFormat::Tsv => 1,
            };
            if c.paths.len() != want {
                out.push(diag(field("paths"), format!("{:?} corpora need {want} path(s), got {}", c.format, c.paths.len())));
            }
            for (j, p) in c.paths.iter().enumerate() {
                if !p.is_file() {
                    out.push(diag(field(&format!("paths[{j}]")), format!("file {} does not exist", p.display())));
                }
            }
            if c.langs[0] != "en" {
                out.push(diag(field("langs[0]"), format!("source language must be \"en\", got {:?}", c.langs[0])));
            }
            if c.langs[0] == c.langs[1] {
                out.push(diag(field("langs[1]"), "target language equals source language"));
            }
            if !langs.contains(&c.langs[1]) {
                out.push(diag(field("langs[1]"), format!("no lexicon for language {:?} (have {})", c.langs[1], langs.join(", "))));
            }
        }
        if self.detector.kind == DetectorKind::Crf {
            match &self.detector.model {
                None => out.push(diag("detector.model", "required when detector.kind = \"crf\"")),
                Some(p) if !p.is_file() => out.push(diag("detector.model", format!("model file {} does not exist", p.display()))),
                _ => {}
            }
        }
        let t = &self.translation;
        // backend settings only matter once there is something to translate
        let needs_backend = !self.corpora.is_empty();
        match t.backend {
            _ if !needs_backend => {}
            BackendKind::Mock => match &t.fixture {
                None => out.push(diag("translation.fixture", "required for the mock backend")),
                Some(p) if !p.is_file() => out.push(diag("translation.fixture", format!("fixture {} does not exist", p.display()))),
                _ => {}
            },
            BackendKind::Http | BackendKind::GoogleV2 => {
                if t.url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    out.push(diag("translation.url", "required for HTTP backends"));
                }
            }
        }
        if t.client.batch_size == 0 {
            out.push(diag("translation.batch_size", "must be at least 1"));
        }
        if t.client.concurrency == 0 {
            out.push(diag("translation.concurrency", "must be at least 1"));
        }
        if !(t.client.requests_per_second.is_finite() && t.client.requests_per_second >= 0.0) {
            out.push(diag("translation.requests_per_second", "must be non-negative"));
        }
        let r = &self.router;
        match r.generator {
            GeneratorKind::Lookup => {
                if let Some(p) = r.lookup.as_ref().filter(|p| !p.is_file()) {
                    out.push(diag("router.lookup", format!("lookup file {} does not exist", p.display())));
                }
            }
            GeneratorKind::Http => {
                if r.url.is_none() {
                    out.push(diag("router.url", "required for the HTTP generator"));
                }
            }
            GeneratorKind::CueDeletion => {}
        }
        if r.separator.is_empty() {
            out.push(diag("router.separator", "must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.blend.factor) {
            out.push(diag("blend.factor", format!("must be in [0, 1], got {}", self.blend.factor)));
        }
        out
    }

    pub fn lexicon_set(&self) -> Result<LexiconSet> {
        let mut set = LexiconSet::bundled();
        for path in self.lexicons.values() {
            set.insert(CueLexicon::load(path)?);
        }
        Ok(set)
    }

    pub fn build_detector(&self) -> Result<Detector> {
        let lexicons = Arc::new(self.lexicon_set()?);
        match self.detector.kind {
            DetectorKind::Rules => Ok(Detector::rules(lexicons)),
            DetectorKind::Crf => {
                let path = self
                    .detector
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::invalid("detector.model is required for the CRF detector"))?;
                Ok(Detector::crf(Arc::new(CrfModel::load(path)?), lexicons))
            }
        }
    }

    pub fn build_backend(&self) -> Result<Arc<dyn TranslationBackend>> {
        let t = &self.translation;
        let timeout = Duration::from_secs(t.timeout_secs);
        Ok(match t.backend {
            BackendKind::Mock => {
                let path = t
                    .fixture
                    .as_ref()
                    .ok_or_else(|| Error::invalid("translation.fixture is required for the mock backend"))?;
                Arc::new(MockBackend::load(path)?)
            }
            BackendKind::Http | BackendKind::GoogleV2 => {
                let flavor = if t.backend == BackendKind::Http {
                    HttpFlavor::Generic
                } else {
                    HttpFlavor::GoogleV2
                };
                let url = t
                    .url
                    .clone()
                    .ok_or_else(|| Error::invalid("translation.url is required"))?;
                Arc::new(HttpBackend::from_env(url, flavor, timeout)?)
            }
        })
    }

    pub fn build_client(&self) -> Result<TranslationClient> {
        let cache = match &self.translation.cache_dir {
            Some(dir) => Some(Arc::new(TranslationCache::open(dir)?)),
            None => None,
        };
        TranslationClient::new(self.build_backend()?, cache, self.translation.client.clone())
    }

    /// Streams every configured corpus in order.
    pub fn read_corpora(&self) -> Result<Box<dyn Iterator<Item = Result<SentencePair>>>> {
        let mut readers: Vec<Box<dyn Iterator<Item = Result<SentencePair>>>> = Vec::new();
        for c in &self.corpora {
            let [src, tgt] = &c.langs;
            readers.push(match c.format {
                CorpusFormat::Moses => {
                    Box::new(ingest_moses(&c.paths[0], &c.paths[1], src, tgt, &c.label)?)
                }
                CorpusFormat::Tsv => Box::new(ingest_tsv(&c.paths[0], src, tgt, &c.label)?),
            });
        }
        Ok(Box::new(readers.into_iter().flatten()))
    }
}

/// Reads and validates a config file. An unreadable or unparsable file gives
/// a single diagnostic.
pub fn validate_config(path: impl AsRef<Path>) -> Vec<Diagnostic> {
    match PipelineConfig::load(path) {
        Ok(cfg) => cfg.validate(),
        Err(e) => vec![diag("", e.to_string())],
    }
}
