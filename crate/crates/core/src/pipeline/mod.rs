//! Turns bitext records into negated/affirmative sentence pairs.
//!
//! Stages, in order: keep pairs where exactly one side is negated, drop long
//! targets, backtranslate the target into English, and keep the result only
//! when exactly one of (English source, backtranslation) is negated. Every
//! dropped pair is counted under one [`DiscardReason`].

mod report;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStats, Record, SentencePair};
use crate::cue::{CueKind, CueSpan, Detector};
use crate::error::{Error, Result};
use crate::mt::{TranslationClient, TranslationOutcome, TranslationRequest};
use crate::tokenize::token_count;

pub use report::{corpus_report, CorpusReport, ReportRow};

pub const DEFAULT_MAX_TARGET_TOKENS: usize = 40;
pub const PIVOT_LANG: &str = "en";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    OriginalNegated,
    BacktranslationNegated,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::OriginalNegated, Direction::BacktranslationNegated];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::OriginalNegated => "original_negated",
            Direction::BacktranslationNegated => "backtranslation_negated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationType {
    SingleToken,
    Affixal,
    Lexicalized,
    Multitoken,
    Multiple,
}

impl NegationType {
    pub const ALL: [NegationType; 5] = [
        NegationType::SingleToken,
        NegationType::Affixal,
        NegationType::Lexicalized,
        NegationType::Multitoken,
        NegationType::Multiple,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NegationType::SingleToken => "single_token",
            NegationType::Affixal => "affixal",
            NegationType::Lexicalized => "lexicalized",
            NegationType::Multitoken => "multitoken",
            NegationType::Multiple => "multiple",
        }
    }

    /// `multiple` for two or more cues, otherwise the single cue's kind.
    pub fn from_cues(cues: &[CueSpan]) -> Result<Self> {
        match cues {
            [] => Err(Error::Invariant("negation type of a pair without cues".into())),
            [one] => Ok(match one.kind {
                CueKind::SingleToken => NegationType::SingleToken,
                CueKind::Affixal => NegationType::Affixal,
                CueKind::Lexicalized => NegationType::Lexicalized,
                CueKind::Multitoken => NegationType::Multitoken,
            }),
            _ => Ok(NegationType::Multiple),
        }
    }
}

impl fmt::Display for NegationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AfinPair {
    pub id: String,
    pub negated: String,
    pub affirmative: String,
    pub direction: Direction,
    pub cues: Vec<CueSpan>,
    pub negation_type: NegationType,
    pub source_pair: String,
    pub corpus: String,
}

impl Record for AfinPair {
    fn record_id(&self) -> String {
        self.id.clone()
    }
}

pub fn classify_negation_type(pair: &AfinPair) -> Result<NegationType> {
    NegationType::from_cues(&pair.cues)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    BothNegated,
    NeitherNegated,
    TargetTooLong,
    BacktranslationParity,
    TranslationFailed,
}

impl DiscardReason {
    pub const ALL: [DiscardReason; 5] = [
        DiscardReason::BothNegated,
        DiscardReason::NeitherNegated,
        DiscardReason::TargetTooLong,
        DiscardReason::BacktranslationParity,
        DiscardReason::TranslationFailed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiscardReason::BothNegated => "both_negated",
            DiscardReason::NeitherNegated => "neither_negated",
            DiscardReason::TargetTooLong => "target_too_long",
            DiscardReason::BacktranslationParity => "backtranslation_parity",
            DiscardReason::TranslationFailed => "translation_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardCounts {
    pub both_negated: u64,
    pub neither_negated: u64,
    pub target_too_long: u64,
    pub backtranslation_parity: u64,
    pub translation_failed: u64,
}

impl DiscardCounts {
    pub fn add(&mut self, reason: DiscardReason, n: u64) {
        *self.slot(reason) += n;
    }

    pub fn get(&self, reason: DiscardReason) -> u64 {
        match reason {
            DiscardReason::BothNegated => self.both_negated,
            DiscardReason::NeitherNegated => self.neither_negated,
            DiscardReason::TargetTooLong => self.target_too_long,
            DiscardReason::BacktranslationParity => self.backtranslation_parity,
            DiscardReason::TranslationFailed => self.translation_failed,
        }
    }

    fn slot(&mut self, reason: DiscardReason) -> &mut u64 {
        match reason {
            DiscardReason::BothNegated => &mut self.both_negated,
            DiscardReason::NeitherNegated => &mut self.neither_negated,
            DiscardReason::TargetTooLong => &mut self.target_too_long,
            DiscardReason::BacktranslationParity => &mut self.backtranslation_parity,
            DiscardReason::TranslationFailed => &mut self.translation_failed,
        }
    }

    pub fn total(&self) -> u64 {
        DiscardReason::ALL.iter().map(|&r| self.get(r)).sum()
    }

    pub fn merge(&mut self, other: &DiscardCounts) {
        for r in DiscardReason::ALL {
            self.add(r, other.get(r));
        }
    }
}

/// Per-corpus accounting. `stats.total_pairs` is the ingested count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTally {
    pub stats: CorpusStats,
    pub discards: DiscardCounts,
    pub emitted: u64,
}

impl CorpusTally {
    pub fn new(corpus: &str) -> Self {
        CorpusTally {
            stats: CorpusStats::new(corpus),
            ..Default::default()
        }
    }

    pub fn ingested(&self) -> u64 {
        self.stats.total_pairs
    }

    /// ingested = emitted + all discards, and the negation tallies add up.
    pub fn is_conserved(&self) -> bool {
        self.ingested() == self.emitted + self.discards.total()
            && self.stats.is_consistent()
            && self.stats.yielded_pairs == self.emitted
    }

    pub fn merge(&mut self, other: &CorpusTally) {
        self.stats.merge(&other.stats);
        self.discards.merge(&other.discards);
        self.emitted += other.emitted;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTally {
    pub corpora: BTreeMap<String, CorpusTally>,
}

impl PipelineTally {
    pub fn corpus_mut(&mut self, corpus: &str) -> &mut CorpusTally {
        self.corpora
            .entry(corpus.to_string())
            .or_insert_with(|| CorpusTally::new(corpus))
    }

    pub fn merge(&mut self, other: &PipelineTally) {
        for (name, t) in &other.corpora {
            self.corpus_mut(name).merge(t);
        }
    }

    pub fn total(&self) -> CorpusTally {
        let mut all = CorpusTally::new("All");
        for t in self.corpora.values() {
            all.merge(t);
        }
        all
    }

    pub fn is_conserved(&self) -> bool {
        self.corpora.values().all(CorpusTally::is_conserved)
    }

    /// Ingested pair counts keyed by corpus, as expected by [`corpus_report`].
    pub fn ingested(&self) -> BTreeMap<String, u64> {
        self.corpora
            .iter()
            .map(|(k, t)| (k.clone(), t.ingested()))
            .collect()
    }
}

fn check_languages(pairs: &[SentencePair], detector: &Detector) -> Result<()> {
    for p in pairs {
        for lang in [&p.source_lang, &p.target_lang] {
            if !detector.supports(lang) {
                // surfaces the supported set in the message
                detector.lexicons().get(lang)?;
            }
        }
    }
    Ok(())
}

/// Keeps pairs where exactly one side contains negation. Updates the
/// ingested count and the both/either/neither tallies in `tally`.
pub fn filter_either_negated(
    pairs: Vec<SentencePair>,
    detector: &Detector,
    tally: &mut PipelineTally,
) -> Result<Vec<SentencePair>> {
    check_languages(&pairs, detector)?;
    let flags: Vec<(bool, bool)> = pairs
        .par_iter()
        .map(|p| {
            Ok((
                detector.has_negation(&p.source_text, &p.source_lang)?,
                detector.has_negation(&p.target_text, &p.target_lang)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut kept = Vec::with_capacity(pairs.len());
    for (p, (src, tgt)) in pairs.into_iter().zip(flags) {
        let t = tally.corpus_mut(&p.corpus);
        t.stats.total_pairs += 1;
        match (src, tgt) {
            (true, true) => {
                t.stats.neg_both += 1;
                t.discards.add(DiscardReason::BothNegated, 1);
            }
            (false, false) => {
                t.stats.neg_neither += 1;
                t.discards.add(DiscardReason::NeitherNegated, 1);
            }
            _ => {
                t.stats.neg_either += 1;
                kept.push(p);
            }
        }
    }
    Ok(kept)
}

/// Drops pairs whose target has more than `max_tokens` tokens.
pub fn filter_length(
    pairs: Vec<SentencePair>,
    max_tokens: usize,
    tally: &mut PipelineTally,
) -> Vec<SentencePair> {
    let keep: Vec<bool> = pairs
        .par_iter()
        .map(|p| token_count(&p.target_text, &p.target_lang) <= max_tokens)
        .collect();
    pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| {
            if !k {
                tally
                    .corpus_mut(&p.corpus)
                    .discards
                    .add(DiscardReason::TargetTooLong, 1);
            }
            k.then_some(p)
        })
        .collect()
}

/// Backtranslation request for a pair's target sentence.
pub fn backtranslation_request(pair: &SentencePair) -> Result<TranslationRequest> {
    TranslationRequest::new(pair.target_text.clone(), pair.target_lang.clone(), PIVOT_LANG)
}

/// Applies the exactly-one-negated rule to (English source, backtranslation).
/// `translations` is aligned with `pairs`.
pub fn build_pairs(
    pairs: &[SentencePair],
    translations: &[TranslationOutcome],
    detector: &Detector,
    tally: &mut PipelineTally,
) -> Result<Vec<AfinPair>> {
    if pairs.len() != translations.len() {
        return Err(Error::invalid(format!(
            "{} pairs but {} translations",
            pairs.len(),
            translations.len()
        )));
    }
    if !detector.supports(PIVOT_LANG) {
        detector.lexicons().get(PIVOT_LANG)?;
    }
    let built: Vec<std::result::Result<AfinPair, DiscardReason>> = pairs
        .par_iter()
        .zip(translations)
        .map(|(p, tr)| {
            let Ok(record) = tr else {
                return Ok(Err(DiscardReason::TranslationFailed));
            };
            let bt = record.translation.as_str();
            let src = detector.detect(&p.source_text, &p.source_lang)?;
            let back = detector.detect(bt, PIVOT_LANG)?;
            let (negated, affirmative, direction, cues) = match (src.has_negation(), back.has_negation()) {
                (true, false) => (p.source_text.clone(), bt.to_string(), Direction::OriginalNegated, src.cues),
                (false, true) => (bt.to_string(), p.source_text.clone(), Direction::BacktranslationNegated, back.cues),
                _ => return Ok(Err(DiscardReason::BacktranslationParity)),
            };
            Ok(Ok(AfinPair {
                id: p.id.clone(),
                negation_type: NegationType::from_cues(&cues)?,
                negated,
                affirmative,
                direction,
                cues,
                source_pair: p.id.clone(),
                corpus: p.corpus.clone(),
            }))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (p, b) in pairs.iter().zip(built) {
        let t = tally.corpus_mut(&p.corpus);
        match b {
            Ok(afin) => {
                t.emitted += 1;
                t.stats.yielded_pairs += 1;
                out.push(afin);
            }
            Err(reason) => t.discards.add(reason, 1),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub max_target_tokens: usize,
    /// Records held in memory at once.
    pub chunk_size: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            max_target_tokens: DEFAULT_MAX_TARGET_TOKENS,
            chunk_size: 4096,
        }
    }
}

/// Runs every stage over a record stream in fixed-size chunks and hands each
/// emitted pair to `emit`, in input order.
pub fn run_pipeline<I, F>(
    records: I,
    detector: &Detector,
    client: &TranslationClient,
    options: &PipelineOptions,
    mut emit: F,
) -> Result<PipelineTally>
where
    I: IntoIterator<Item = Result<SentencePair>>,
    F: FnMut(AfinPair) -> Result<()>,
{
    if options.chunk_size == 0 {
        return Err(Error::invalid("chunk_size must be at least 1"));
    }
    let mut tally = PipelineTally::default();
    let mut records = records.into_iter();
    loop {
        let chunk: Vec<SentencePair> = records
            .by_ref()
            .take(options.chunk_size)
            .collect::<Result<_>>()?;
        if chunk.is_empty() {
            break;
        }
        let kept = filter_either_negated(chunk, detector, &mut tally)?;
        let kept = filter_length(kept, options.max_target_tokens, &mut tally);
        let requests: Vec<TranslationRequest> =
            kept.iter().map(backtranslation_request).collect::<Result<_>>()?;
        let translations = client.translate_batch(&requests)?;
        for pair in build_pairs(&kept, &translations, detector, &mut tally)? {
            emit(pair)?;
        }
    }
    Ok(tally)
}
