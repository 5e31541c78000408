use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Affix;
use crate::error::{Error, Result};

const BUNDLED_EN: &str = include_str!("../../data/lexicons/en.json");
const BUNDLED_NO: &str = include_str!("../../data/lexicons/no.json");
const BUNDLED_ES: &str = include_str!("../../data/lexicons/es.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffixRule {
    pub affix: String,
    pub min_stem_len: usize,
}

/// Cue inventory for one language. All entries are lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub lang: String,
    pub single_tokens: BTreeSet<String>,
    pub multiword: BTreeSet<Vec<String>>,
    pub lexicalized: BTreeSet<String>,
    pub neg_prefixes: Vec<AffixRule>,
    pub neg_suffixes: Vec<AffixRule>,
    #[serde(default)]
    pub affix_whitelist: BTreeSet<String>,
    #[serde(default)]
    pub affix_stem_vocabulary: BTreeSet<String>,
}

impl CueLexicon {
    pub fn from_json(text: &str) -> Result<Self> {
        let lex: CueLexicon = serde_json::from_str(text).map_err(|e| Error::Lexicon {
            lang: "?".into(),
            reason: e.to_string(),
        })?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::Lexicon {
                lang: self.lang.clone(),
                reason,
            })
        };
        if self.lang.is_empty() {
            return fail("empty language code".into());
        }
        let words = self
            .single_tokens
            .iter()
            .chain(&self.lexicalized)
            .chain(&self.affix_whitelist)
            .chain(&self.affix_stem_vocabulary)
            .chain(self.multiword.iter().flatten());
        for w in words {
            if w.is_empty() || w.to_lowercase() != *w || w.chars().any(char::is_whitespace) {
                return fail(format!("entry {w:?} must be a non-empty lowercase word"));
            }
        }
        if let Some(w) = self.single_tokens.intersection(&self.lexicalized).next() {
            return fail(format!("{w:?} is both a single-token and a lexicalized cue"));
        }
        for set in [&self.single_tokens, &self.lexicalized] {
            if let Some(w) = self.affix_whitelist.intersection(set).next() {
                return fail(format!("{w:?} is both whitelisted and a cue"));
            }
        }
        if let Some(m) = self.multiword.iter().find(|m| m.len() < 2) {
            return fail(format!("multiword entry {m:?} has fewer than two tokens"));
        }
        for rule in self.neg_prefixes.iter().chain(&self.neg_suffixes) {
            if rule.affix.is_empty() || rule.min_stem_len == 0 {
                return fail(format!("affix rule {rule:?} needs an affix and a positive stem length"));
            }
        }
        Ok(())
    }

    /// Stable content hash, used to tie a trained model to its lexicons.
    pub fn content_hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("lexicon serializes");
        hex::encode(Sha256::digest(&canon))
    }

    /// Checks `lower` (an already lowercased token) against the affix rules.
    /// Prefixes are tried before suffixes, longest affix first.
    pub fn match_affix(&self, lower: &str) -> Option<Affix> {
        if self.affix_whitelist.contains(lower) || !lower.chars().all(char::is_alphabetic) {
            return None;
        }
        let stem_ok = |stem: &str, min: usize| {
            stem.chars().count() >= min
                && (self.affix_stem_vocabulary.is_empty()
                    || self.affix_stem_vocabulary.contains(stem))
        };
        let mut prefixes: Vec<&AffixRule> = self.neg_prefixes.iter().collect();
        prefixes.sort_by_key(|r| std::cmp::Reverse(r.affix.len()));
        for r in prefixes {
            if let Some(stem) = lower.strip_prefix(r.affix.as_str()) {
                if stem_ok(stem, r.min_stem_len) {
                    return Some(Affix::Prefix(r.affix.clone()));
                }
            }
        }
        let mut suffixes: Vec<&AffixRule> = self.neg_suffixes.iter().collect();
        suffixes.sort_by_key(|r| std::cmp::Reverse(r.affix.len()));
        for r in suffixes {
            if let Some(stem) = lower.strip_suffix(r.affix.as_str()) {
                if stem_ok(stem, r.min_stem_len) {
                    return Some(Affix::Suffix(r.affix.clone()));
                }
            }
        }
        None
    }

    /// Longest multiword entry matching `lower_tokens` starting at `start`.
    pub fn longest_multiword_at(&self, lower_tokens: &[String], start: usize) -> Option<usize> {
        self.multiword
            .iter()
            .filter(|m| {
                start + m.len() <= lower_tokens.len()
                    && m.iter().zip(&lower_tokens[start..]).all(|(a, b)| a == b)
            })
            .map(Vec::len)
            .max()
    }
}

/// Lexicons keyed by language code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconSet {
    by_lang: BTreeMap<String, CueLexicon>,
}

impl LexiconSet {
    /// The bundled en/no/es lexicons.
    pub fn bundled() -> Self {
        let mut set = LexiconSet::default();
        for text in [BUNDLED_EN, BUNDLED_NO, BUNDLED_ES] {
            set.insert(CueLexicon::from_json(text).expect("bundled lexicon is valid"));
        }
        set
    }

    pub fn from_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut set = LexiconSet::default();
        for p in paths {
            set.insert(CueLexicon::load(p)?);
        }
        Ok(set)
    }

    pub fn insert(&mut self, lexicon: CueLexicon) {
        self.by_lang.insert(lexicon.lang.clone(), lexicon);
    }

    pub fn get(&self, lang: &str) -> Result<&CueLexicon> {
        self.by_lang
            .get(lang)
            .ok_or_else(|| Error::UnsupportedLanguage {
                lang: lang.to_string(),
                supported: self.languages().join(", "),
            })
    }

    pub fn supports(&self, lang: &str) -> bool {
        self.by_lang.contains_key(lang)
    }

    pub fn languages(&self) -> Vec<String> {
        self.by_lang.keys().cloned().collect()
    }

    /// Hash over every lexicon in language order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (lang, lex) in &self.by_lang {
            h.update(lang.as_bytes());
            h.update(lex.content_hash().as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicons_load() {
        let set = LexiconSet::bundled();
        assert_eq!(set.languages(), ["en", "es", "no"]);
        let en = set.get("en").unwrap();
        for w in ["no", "not", "n't", "never", "without", "nothing", "nowhere", "nobody", "none"] {
            assert!(en.single_tokens.contains(w), "{w}");
        }
        assert!(en.lexicalized.contains("lack") && en.lexicalized.contains("prevent"));
        assert!(set.get("no").unwrap().single_tokens.contains("ikke"));
        assert!(set.get("es").unwrap().single_tokens.contains("jamás"));
    }

    #[test]
    fn unsupported_language_names_supported_set() {
        let err = LexiconSet::bundled().get("de").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("de") && msg.contains("en, es, no"), "{msg}");
    }

    #[test]
    fn affix_matching() {
        let set = LexiconSet::bundled();
        let en = set.get("en").unwrap();
        assert_eq!(en.match_affix("untouched"), Some(Affix::Prefix("un".into())));
        assert_eq!(en.match_affix("useless"), Some(Affix::Suffix("less".into())));
        assert_eq!(en.match_affix("impossible"), Some(Affix::Prefix("im".into())));
        assert_eq!(en.match_affix("dishonest"), Some(Affix::Prefix("dis".into())));
        // stem not attested, whitelisted, or too short
        assert_eq!(en.match_affix("until"), None);
        assert_eq!(en.match_affix("integrated"), None);
        assert_eq!(en.match_affix("under"), None);
        assert_eq!(en.match_affix("unless"), None);
        assert_eq!(en.match_affix("discount"), None);
    }

    #[test]
    fn empty_stem_vocabulary_only_checks_length() {
        let mut lex = LexiconSet::bundled().get("en").unwrap().clone();
        lex.affix_stem_vocabulary.clear();
        assert_eq!(lex.match_affix("unfoo"), Some(Affix::Prefix("un".into())));
        assert_eq!(lex.match_affix("unit"), None); // whitelisted
        assert_eq!(lex.match_affix("unzo"), None); // stem "zo" shorter than 3
    }

    #[test]
    fn collisions_rejected() {
        let mut lex = LexiconSet::bundled().get("en").unwrap().clone();
        lex.lexicalized.insert("not".into());
        assert!(lex.validate().is_err());

        let mut lex = LexiconSet::bundled().get("en").unwrap().clone();
        lex.multiword.insert(vec!["alone".into()]);
        assert!(lex.validate().is_err());

        let mut lex = LexiconSet::bundled().get("en").unwrap().clone();
        lex.single_tokens.insert("Never".into());
        assert!(lex.validate().is_err());
    }

    #[test]
    fn multiword_first_token_may_be_single_cue() {
        let en = LexiconSet::bundled().get("en").unwrap().clone();
        assert!(en.single_tokens.contains("no"));
        assert!(en.multiword.contains(&vec!["no".to_string(), "longer".to_string()]));
        en.validate().unwrap();
    }

    #[test]
    fn longest_multiword_wins() {
        let en = LexiconSet::bundled().get("en").unwrap().clone();
        let toks: Vec<String> = ["it", "is", "not", "at", "all", "fine"].map(String::from).into();
        assert_eq!(en.longest_multiword_at(&toks, 2), Some(3));
        assert_eq!(en.longest_multiword_at(&toks, 1), None);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let set = LexiconSet::bundled();
        assert_eq!(set.content_hash(), LexiconSet::bundled().content_hash());
        let mut other = set.clone();
        let mut en = other.get("en").unwrap().clone();
        en.single_tokens.insert("nope".into());
        other.insert(en);
        assert_ne!(set.content_hash(), other.content_hash());
    }
}
