//! Readers for cue-annotated token-per-line data.
//!
//! Two layouts are supported, both with blank lines between sentences:
//!
//! * `token<TAB>BIO`, the simple two-column format;
//! * *SEM 2012 shared-task columns: chapter, sentence, token number, word,
//!   lemma, POS, parse, then either `***` (no negation) or three columns per
//!   negation instance (cue, scope, event). A cue column holds `_`, the whole
//!   word, or the negating affix when only part of the word is the cue.

use std::fs;
use std::path::Path;

use super::train::TrainingSentence;
use super::{Affix, AffixTagging, BioTag, CueKind, CueSpan, TaggedSentence, is_bio_valid};
use crate::error::{Error, Result};

/// A gold sentence read from annotated data.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSentence {
    pub lang: String,
    pub tokens: Vec<String>,
    pub tags: Vec<BioTag>,
    pub cues: Vec<CueSpan>,
}

impl GoldSentence {
    pub fn to_tagged(&self) -> TaggedSentence {
        TaggedSentence::from_token_texts(&self.lang, &self.tokens, self.tags.clone(), self.cues.clone())
    }

    pub fn to_training(&self) -> TrainingSentence {
        TrainingSentence {
            lang: self.lang.clone(),
            tokens: self.tokens.clone(),
            tags: self.tags.clone(),
        }
    }
}

/// Column layout for *SEM-style files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StarSemColumns {
    pub word: usize,
    pub first_cue: usize,
    pub stride: usize,
}

impl Default for StarSemColumns {
    fn default() -> Self {
        StarSemColumns {
            word: 3,
            first_cue: 7,
            stride: 3,
        }
    }
}

fn split_blocks(text: &str) -> Vec<Vec<(usize, String)>> {
    let mut blocks = Vec::new();
    let mut cur = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push((i + 1, line.to_string()));
        }
    }
    if !cur.is_empty() {
        blocks.push(cur);
    }
    blocks
}

fn cues_from_runs(tokens: &[String], tags: &[BioTag]) -> Vec<CueSpan> {
    super::bio_runs(tags)
        .into_iter()
        .map(|run| CueSpan {
            surface: run.iter().map(|&i| tokens[i].as_str()).collect::<Vec<_>>().join(" "),
            kind: if run.len() > 1 {
                CueKind::Multitoken
            } else {
                CueKind::SingleToken
            },
            token_indices: run,
            affix: None,
        })
        .collect()
}

/// Parses the two-column `token<TAB>BIO` format.
pub fn parse_bio_columns(text: &str, lang: &str, origin: &str) -> Result<Vec<GoldSentence>> {
    let mut out = Vec::new();
    for block in split_blocks(text) {
        let mut tokens = Vec::with_capacity(block.len());
        let mut tags = Vec::with_capacity(block.len());
        for (line_no, line) in &block {
            let fields: Vec<&str> = line.split('\t').collect();
            let location = || format!("{origin}:{line_no}");
            if fields.len() != 2 {
                return Err(Error::Format {
                    location: location(),
                    reason: format!("expected 2 tab-separated columns, found {}", fields.len()),
                });
            }
            tokens.push(fields[0].to_string());
            tags.push(fields[1].trim().parse::<BioTag>().map_err(|e| Error::Format {
                location: location(),
                reason: e.to_string(),
            })?);
        }
        if !is_bio_valid(&tags) {
            return Err(Error::Format {
                location: format!("{origin}:{}", block[0].0),
                reason: "sentence is not BIO-valid".into(),
            });
        }
        let cues = cues_from_runs(&tokens, &tags);
        out.push(GoldSentence {
            lang: lang.to_string(),
            tokens,
            tags,
            cues,
        });
    }
    Ok(out)
}

pub fn read_bio_columns(path: impl AsRef<Path>, lang: &str) -> Result<Vec<GoldSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bio_columns(&text, lang, &path.display().to_string())
}

/// Parses *SEM 2012 columns. Cue tokens of one negation instance that are
/// adjacent form one span; discontinuous cues become separate spans.
pub fn parse_starsem(
    text: &str,
    lang: &str,
    columns: StarSemColumns,
    affix_tagging: AffixTagging,
    origin: &str,
) -> Result<Vec<GoldSentence>> {
    let mut out = Vec::new();
    for block in split_blocks(text) {
        let rows: Vec<Vec<&str>> = block.iter().map(|(_, l)| l.split('\t').collect()).collect();
        let width = rows[0].len();
        for ((line_no, _), r) in block.iter().zip(&rows) {
            if r.len() != width || r.len() <= columns.word {
                return Err(Error::Format {
                    location: format!("{origin}:{line_no}"),
                    reason: "inconsistent column count".into(),
                });
            }
        }
        let tokens: Vec<String> = rows.iter().map(|r| r[columns.word].to_string()).collect();
        let negations = if width <= columns.first_cue || rows[0][columns.first_cue] == "***" {
            0
        } else {
            (width - columns.first_cue) / columns.stride
        };

        let mut spans: Vec<CueSpan> = Vec::new();
        for j in 0..negations {
            let col = columns.first_cue + j * columns.stride;
            let mut run: Vec<usize> = Vec::new();
            let flush = |run: &mut Vec<usize>, spans: &mut Vec<CueSpan>| {
                if !run.is_empty() {
                    let idx = std::mem::take(run);
                    spans.push(CueSpan {
                        surface: idx.iter().map(|&i| tokens[i].as_str()).collect::<Vec<_>>().join(" "),
                        kind: if idx.len() > 1 { CueKind::Multitoken } else { CueKind::SingleToken },
                        token_indices: idx,
                        affix: None,
                    });
                }
            };
            for (i, r) in rows.iter().enumerate() {
                let cue = r[col];
                if cue == "_" {
                    flush(&mut run, &mut spans);
                    continue;
                }
                let word = tokens[i].to_lowercase();
                let cue_l = cue.to_lowercase();
                if cue_l == word {
                    run.push(i);
                } else {
                    flush(&mut run, &mut spans);
                    let affix = if word.starts_with(&cue_l) {
                        Affix::Prefix(cue_l)
                    } else if word.ends_with(&cue_l) {
                        Affix::Suffix(cue_l)
                    } else {
                        return Err(Error::Format {
                            location: format!("{origin}:{}", block[i].0),
                            reason: format!("cue {cue:?} is not part of token {:?}", tokens[i]),
                        });
                    };
                    spans.push(CueSpan {
                        token_indices: vec![i],
                        surface: tokens[i].clone(),
                        kind: CueKind::Affixal,
                        affix: Some(affix),
                    });
                }
            }
            flush(&mut run, &mut spans);
        }
        spans.sort_by(|a, b| a.token_indices.cmp(&b.token_indices));
        spans.dedup_by(|a, b| a.token_indices == b.token_indices);

        let mut tags = vec![BioTag::O; tokens.len()];
        for s in &spans {
            if s.kind == CueKind::Affixal && affix_tagging == AffixTagging::Outside {
                continue;
            }
            for (k, &i) in s.token_indices.iter().enumerate() {
                tags[i] = if k == 0 { BioTag::B } else { BioTag::I };
            }
        }
        out.push(GoldSentence {
            lang: lang.to_string(),
            tokens,
            tags,
            cues: spans,
        });
    }
    Ok(out)
}

pub fn read_starsem(
    path: impl AsRef<Path>,
    lang: &str,
    columns: StarSemColumns,
    affix_tagging: AffixTagging,
) -> Result<Vec<GoldSentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_starsem(&text, lang, columns, affix_tagging, &path.display().to_string())
}

/// Writes sentences in the two-column format.
pub fn format_bio_columns(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(&tok.text);
            out.push('\t');
            out.push_str(tag.as_str());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
