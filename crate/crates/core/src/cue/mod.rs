//! Negation cue detection: a lexicon/rule detector, a linear-chain CRF
//! tagger over sparse features, CoNLL-style readers and cue-level scoring.
//!
//! Affixal cues ("untouched", "useless") live below the token level. By
//! default they are recorded as [`CueSpan`]s but tagged `O` in the BIO
//! sequence; [`AffixTagging::WholeToken`] tags the whole token `B-CUE`.

pub mod conll;
pub mod crf;
pub mod eval;
pub mod features;
pub mod lexicon;
pub mod rules;
pub mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{tokenize, Token};

pub use crf::CrfModel;
pub use eval::{evaluate_cues, CueScores};
pub use features::FeatureExtractor;
pub use lexicon::{AffixRule, CueLexicon, LexiconSet};
pub use train::{crf_train, TrainConfig, TrainingSentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    SingleToken,
    Affixal,
    Lexicalized,
    Multitoken,
}

impl CueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CueKind::SingleToken => "single_token",
            CueKind::Affixal => "affixal",
            CueKind::Lexicalized => "lexicalized",
            CueKind::Multitoken => "multitoken",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Affix {
    Prefix(String),
    Suffix(String),
}

/// One cue. `affix` is set iff `kind` is affixal; `token_indices` has more
/// than one entry iff `kind` is multitoken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueSpan {
    pub token_indices: Vec<usize>,
    pub surface: String,
    pub kind: CueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affix: Option<Affix>,
}

impl CueSpan {
    pub fn is_well_formed(&self) -> bool {
        !self.token_indices.is_empty()
            && self.token_indices.windows(2).all(|w| w[0] < w[1])
            && (self.kind == CueKind::Multitoken) == (self.token_indices.len() > 1)
            && (self.kind == CueKind::Affixal) == self.affix.is_some()
    }
}

/// BIO label. The discriminant is the label's column in CRF weight matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BioTag {
    #[serde(rename = "O")]
    O = 0,
    #[serde(rename = "B-CUE")]
    B = 1,
    #[serde(rename = "I-CUE")]
    I = 2,
}

pub const NUM_LABELS: usize = 3;

impl BioTag {
    pub const ALL: [BioTag; NUM_LABELS] = [BioTag::O, BioTag::B, BioTag::I];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> BioTag {
        BioTag::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::O => "O",
            BioTag::B => "B-CUE",
            BioTag::I => "I-CUE",
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(BioTag::O),
            "B-CUE" | "B" => Ok(BioTag::B),
            "I-CUE" | "I" => Ok(BioTag::I),
            other => Err(Error::invalid(format!("unknown BIO tag {other:?}"))),
        }
    }
}

/// No `I-CUE` without a preceding `B-CUE`/`I-CUE`.
pub fn is_bio_valid(tags: &[BioTag]) -> bool {
    let mut prev = BioTag::O;
    for &t in tags {
        if t == BioTag::I && prev == BioTag::O {
            return false;
        }
        prev = t;
    }
    true
}

/// Rewrites every `I-CUE` that follows `O` (or starts the sentence) as
/// `B-CUE`. Valid sequences are returned unchanged.
pub fn repair_bio(tags: &mut [BioTag]) {
    let mut prev = BioTag::O;
    for t in tags.iter_mut() {
        if *t == BioTag::I && prev == BioTag::O {
            *t = BioTag::B;
        }
        prev = *t;
    }
}

/// Maximal B/I runs as lists of token indices.
pub fn bio_runs(tags: &[BioTag]) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (i, &t) in tags.iter().enumerate() {
        match t {
            BioTag::B => runs.push(vec![i]),
            BioTag::I => match runs.last_mut() {
                Some(run) if run.last() == Some(&(i - 1)) => run.push(i),
                _ => runs.push(vec![i]),
            },
            BioTag::O => {}
        }
    }
    runs
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffixTagging {
    /// Affixal cues recorded as spans, token tagged `O`.
    #[default]
    Outside,
    /// Affixally negated token tagged `B-CUE`.
    WholeToken,
}

/// A tokenized sentence with BIO tags and the cues derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub sentence: String,
    pub lang: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<BioTag>,
    pub cues: Vec<CueSpan>,
}

impl crate::corpus::Record for TaggedSentence {
    fn record_id(&self) -> String {
        self.sentence.clone()
    }
}

impl TaggedSentence {
    pub fn has_negation(&self) -> bool {
        !self.cues.is_empty()
    }

    /// Builds a sentence from pre-tokenized text: tokens joined by single
    /// spaces so that offsets stay meaningful.
    pub fn from_token_texts(
        lang: &str,
        token_texts: &[String],
        tags: Vec<BioTag>,
        cues: Vec<CueSpan>,
    ) -> Self {
        let sentence = token_texts.join(" ");
        let mut tokens = Vec::with_capacity(token_texts.len());
        let mut start = 0;
        for (index, t) in token_texts.iter().enumerate() {
            tokens.push(Token {
                text: t.clone(),
                start,
                end: start + t.len(),
                index,
            });
            start += t.len() + 1;
        }
        TaggedSentence {
            sentence,
            lang: lang.to_string(),
            tokens,
            tags,
            cues,
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.tags.len() != self.tokens.len() {
            return Err(Error::Invariant(format!(
                "{} tags for {} tokens",
                self.tags.len(),
                self.tokens.len()
            )));
        }
        if !is_bio_valid(&self.tags) {
            return Err(Error::Invariant("tag sequence is not BIO-valid".into()));
        }
        if let Some(c) = self.cues.iter().find(|c| !c.is_well_formed()) {
            return Err(Error::Invariant(format!("malformed cue {c:?}")));
        }
        let runs = bio_runs(&self.tags);
        let mut non_affixal: Vec<&Vec<usize>> = self
            .cues
            .iter()
            .filter(|c| c.kind != CueKind::Affixal)
            .map(|c| &c.token_indices)
            .collect();
        non_affixal.sort();
        let mut tagged: Vec<&Vec<usize>> = runs.iter().collect();
        tagged.retain(|r| {
            // whole-token affixal cues produce a run with an affixal span
            !self
                .cues
                .iter()
                .any(|c| c.kind == CueKind::Affixal && &c.token_indices == *r)
        });
        tagged.sort();
        if non_affixal != tagged {
            return Err(Error::Invariant(
                "non-affixal cues do not match the B/I runs".into(),
            ));
        }
        Ok(())
    }
}

/// Turns tagged runs plus affix matches into cue spans. Single-token runs are
/// classified with the lexicon; tokens left `O` are checked for affixes.
pub(crate) fn cues_from_tags(
    tokens: &[Token],
    tags: &[BioTag],
    lexicon: &CueLexicon,
    affix_tagging: AffixTagging,
) -> Vec<CueSpan> {
    let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut cues = Vec::new();
    let mut covered = vec![false; tokens.len()];
    for run in bio_runs(tags) {
        for &i in &run {
            covered[i] = true;
        }
        let surface = run
            .iter()
            .map(|&i| tokens[i].text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let (kind, affix) = if run.len() > 1 {
            (CueKind::Multitoken, None)
        } else {
            let w = &lower[run[0]];
            if lexicon.single_tokens.contains(w) {
                (CueKind::SingleToken, None)
            } else if lexicon.lexicalized.contains(w) {
                (CueKind::Lexicalized, None)
            } else if let Some(a) = lexicon
                .match_affix(w)
                .filter(|_| affix_tagging == AffixTagging::WholeToken)
            {
                (CueKind::Affixal, Some(a))
            } else {
                (CueKind::SingleToken, None)
            }
        };
        cues.push(CueSpan {
            token_indices: run,
            surface,
            kind,
            affix,
        });
    }
    for (i, w) in lower.iter().enumerate() {
        if covered[i] {
            continue;
        }
        if let Some(affix) = lexicon.match_affix(w) {
            cues.push(CueSpan {
                token_indices: vec![i],
                surface: tokens[i].text.clone(),
                kind: CueKind::Affixal,
                affix: Some(affix),
            });
        }
    }
    cues.sort_by(|a, b| a.token_indices.cmp(&b.token_indices));
    cues
}

/// Which detector the pipeline runs.
#[derive(Debug, Clone)]
pub enum Detector {
    Rules {
        lexicons: Arc<LexiconSet>,
        affix_tagging: AffixTagging,
    },
    Crf {
        model: Arc<CrfModel>,
        extractor: FeatureExtractor,
        affix_tagging: AffixTagging,
    },
}

impl Detector {
    pub fn rules(lexicons: Arc<LexiconSet>) -> Self {
        Detector::Rules {
            lexicons,
            affix_tagging: AffixTagging::Outside,
        }
    }

    pub fn bundled_rules() -> Self {
        Self::rules(Arc::new(LexiconSet::bundled()))
    }

    pub fn crf(model: Arc<CrfModel>, lexicons: Arc<LexiconSet>) -> Self {
        Detector::Crf {
            model,
            extractor: FeatureExtractor::new(lexicons),
            affix_tagging: AffixTagging::Outside,
        }
    }

    pub fn with_affix_tagging(mut self, mode: AffixTagging) -> Self {
        match &mut self {
            Detector::Rules { affix_tagging, .. } | Detector::Crf { affix_tagging, .. } => {
                *affix_tagging = mode
            }
        }
        self
    }

    pub fn lexicons(&self) -> &LexiconSet {
        match self {
            Detector::Rules { lexicons, .. } => lexicons,
            Detector::Crf { extractor, .. } => extractor.lexicons(),
        }
    }

    pub fn supports(&self, lang: &str) -> bool {
        self.lexicons().supports(lang)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Rules { .. } => "rules",
            Detector::Crf { .. } => "crf",
        }
    }

    pub fn detect(&self, sentence: &str, lang: &str) -> Result<TaggedSentence> {
        self.detect_on(sentence, tokenize(sentence, lang), lang)
    }

    /// Tags pre-tokenized text, joined by single spaces, keeping the given
    /// token boundaries. Used when scoring against gold tokenization.
    pub fn detect_pretokenized(&self, token_texts: &[String], lang: &str) -> Result<TaggedSentence> {
        let base = TaggedSentence::from_token_texts(lang, token_texts, Vec::new(), Vec::new());
        self.detect_on(&base.sentence, base.tokens, lang)
    }

    fn detect_on(&self, sentence: &str, tokens: Vec<Token>, lang: &str) -> Result<TaggedSentence> {
        match self {
            Detector::Rules {
                lexicons,
                affix_tagging,
            } => rules::detect_rules_on(sentence, tokens, lang, lexicons.get(lang)?, *affix_tagging),
            Detector::Crf {
                model,
                extractor,
                affix_tagging,
            } => {
                let lexicon = extractor.lexicons().get(lang)?;
                let mut tags = if tokens.is_empty() {
                    Vec::new()
                } else {
                    let feats = extractor.featurize_sentence(&tokens, lang)?;
                    model.viterbi(&model.index_features(&feats)).0
                };
                repair_bio(&mut tags);
                let cues = cues_from_tags(&tokens, &tags, lexicon, *affix_tagging);
                Ok(TaggedSentence {
                    sentence: sentence.to_string(),
                    lang: lang.to_string(),
                    tokens,
                    tags,
                    cues,
                })
            }
        }
    }

    pub fn has_negation(&self, sentence: &str, lang: &str) -> Result<bool> {
        Ok(self.detect(sentence, lang)?.has_negation())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretokenized_keeps_boundaries() {
        let toks: Vec<String> = ["I", "do", "n't", "know", "it", "."].map(String::from).to_vec();
        let t = Detector::bundled_rules().detect_pretokenized(&toks, "en").unwrap();
        assert_eq!(t.sentence, "I do n't know it .");
        assert_eq!(t.tokens.len(), 6);
        assert_eq!(t.cues[0].token_indices, vec![2]);
        t.check_invariants().unwrap();
    }

    #[test]
    fn bio_validity() {
        use BioTag::*;
        assert!(is_bio_valid(&[O, B, I, O, B]));
        assert!(is_bio_valid(&[]));
        assert!(!is_bio_valid(&[I]));
        assert!(!is_bio_valid(&[O, I]));
        let mut t = [I, I, O, I, B, I];
        repair_bio(&mut t);
        assert_eq!(t, [B, I, O, B, B, I]);
        assert!(is_bio_valid(&t));
    }

    #[test]
    fn runs_split_on_b() {
        use BioTag::*;
        assert_eq!(bio_runs(&[B, I, B, O, B, I, I]), vec![vec![0, 1], vec![2], vec![4, 5, 6]]);
    }

    #[test]
    fn tag_serde_names() {
        let json = serde_json::to_string(&[BioTag::O, BioTag::B, BioTag::I]).unwrap();
        assert_eq!(json, r#"["O","B-CUE","I-CUE"]"#);
        assert_eq!("B-CUE".parse::<BioTag>().unwrap(), BioTag::B);
        assert!("X".parse::<BioTag>().is_err());
    }

    #[test]
    fn cue_span_serialization() {
        let c = CueSpan {
            token_indices: vec![5],
            surface: "untouched".into(),
            kind: CueKind::Affixal,
            affix: Some(Affix::Prefix("un".into())),
        };
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(
            json,
            r#"{"token_indices":[5],"surface":"untouched","kind":"affixal","affix":{"prefix":"un"}}"#
        );
        let plain = CueSpan {
            token_indices: vec![2],
            surface: "no".into(),
            kind: CueKind::SingleToken,
            affix: None,
        };
        assert!(!serde_json::to_string(&plain).unwrap().contains("affix"));
    }

    #[test]
    fn well_formedness() {
        let bad = CueSpan {
            token_indices: vec![1, 2],
            surface: "no longer".into(),
            kind: CueKind::SingleToken,
            affix: None,
        };
        assert!(!bad.is_well_formed());
        let empty = CueSpan {
            token_indices: vec![],
            surface: String::new(),
            kind: CueKind::SingleToken,
            affix: None,
        };
        assert!(!empty.is_well_formed());
    }
}
