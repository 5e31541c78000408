//! Sparse feature templates for the CRF tagger.
//!
//! | template           | example                |
//! |--------------------|------------------------|
//! | bias               | `bias`                 |
//! | language           | `lang=en`              |
//! | lowercased token   | `lower=not`            |
//! | token shape        | `shape=Xx`             |
//! | 3/4-char prefix    | `prefix3=unt`          |
//! | 3/4-char suffix    | `suffix4=ched`         |
//! | lexicon membership | `lex:single_token`, `lex:lexicalized`, `lex:multiword`, `lex:neg_prefix`, `lex:neg_suffix` |
//! | neighbours         | `prev=<s>`, `next=</s>`, `prev=is` |
//!
//! Prefix and suffix features are only emitted when the token has at least
//! that many characters.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{Affix, LexiconSet};
use crate::error::Result;
use crate::tokenize::Token;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub type FeatureSet = BTreeSet<String>;

/// Featurizes tokens against a set of lexicons.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    lexicons: Arc<LexiconSet>,
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.text
    }
}

/// Collapsed character-class shape: `Truth` → `Xx`, `1999` → `d`, `n't` → `x'x`.
pub fn token_shape(token: &str) -> String {
    let mut shape = String::new();
    let mut last = None;
    for c in token.chars() {
        let class = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() || c.is_alphabetic() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if last != Some(class) {
            shape.push(class);
            last = Some(class);
        }
    }
    shape
}

impl FeatureExtractor {
    pub fn new(lexicons: Arc<LexiconSet>) -> Self {
        FeatureExtractor { lexicons }
    }

    pub fn lexicons(&self) -> &LexiconSet {
        &self.lexicons
    }

    /// Features for the token at `position`.
    pub fn featurize<S: AsRef<str>>(
        &self,
        tokens: &[S],
        lang: &str,
        position: usize,
    ) -> Result<FeatureSet> {
        let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        let multi = self.multiword_mask(&lower, lang)?;
        self.featurize_with(&lower, tokens[position].as_ref(), &multi, lang, position)
    }

    /// Features for every position of a sentence.
    pub fn featurize_sentence<S: AsRef<str>>(
        &self,
        tokens: &[S],
        lang: &str,
    ) -> Result<Vec<FeatureSet>> {
        let lower: Vec<String> = tokens.iter().map(|t| t.as_ref().to_lowercase()).collect();
        let multi = self.multiword_mask(&lower, lang)?;
        (0..tokens.len())
            .map(|i| self.featurize_with(&lower, tokens[i].as_ref(), &multi, lang, i))
            .collect()
    }

    fn multiword_mask(&self, lower: &[String], lang: &str) -> Result<Vec<bool>> {
        let lex = self.lexicons.get(lang)?;
        let mut mask = vec![false; lower.len()];
        for start in 0..lower.len() {
            if let Some(len) = lex.longest_multiword_at(lower, start) {
                mask[start..start + len].iter_mut().for_each(|m| *m = true);
            }
        }
        Ok(mask)
    }

    fn featurize_with(
        &self,
        lower: &[String],
        original: &str,
        multi: &[bool],
        lang: &str,
        i: usize,
    ) -> Result<FeatureSet> {
        let lex = self.lexicons.get(lang)?;
        let w = &lower[i];
        let mut f = FeatureSet::new();
        f.insert("bias".to_string());
        f.insert(format!("lang={lang}"));
        f.insert(format!("lower={w}"));
        f.insert(format!("shape={}", token_shape(original)));

        let chars: Vec<char> = w.chars().collect();
        for n in [3, 4] {
            if chars.len() >= n {
                f.insert(format!("prefix{n}={}", chars[..n].iter().collect::<String>()));
                f.insert(format!(
                    "suffix{n}={}",
                    chars[chars.len() - n..].iter().collect::<String>()
                ));
            }
        }

        if lex.single_tokens.contains(w) {
            f.insert("lex:single_token".into());
        }
        if lex.lexicalized.contains(w) {
            f.insert("lex:lexicalized".into());
        }
        if multi[i] {
            f.insert("lex:multiword".into());
        }
        match lex.match_affix(w) {
            Some(Affix::Prefix(_)) => {
                f.insert("lex:neg_prefix".into());
            }
            Some(Affix::Suffix(_)) => {
                f.insert("lex:neg_suffix".into());
            }
            None => {}
        }

        let prev = if i == 0 { BOS } else { lower[i - 1].as_str() };
        let next = lower.get(i + 1).map_or(EOS, String::as_str);
        f.insert(format!("prev={prev}"));
        f.insert(format!("next={next}"));
        Ok(f)
    }
}
