use super::{AffixTagging, BioTag, CueKind, CueLexicon, CueSpan, TaggedSentence};
use crate::error::{Error, Result};
use crate::tokenize::{tokenize, Token};

/// Lexicon-driven cue detection.
///
/// Matching order: longest multiword entry, then single-token cues, then
/// lexicalized cues, then affixes on whatever tokens are still untagged.
pub fn detect_rules(
    sentence: &str,
    lang: &str,
    lexicon: &CueLexicon,
    affix_tagging: AffixTagging,
) -> Result<TaggedSentence> {
    detect_rules_on(sentence, tokenize(sentence, lang), lang, lexicon, affix_tagging)
}

/// Rule detection over an existing tokenization of `sentence`.
pub fn detect_rules_on(
    sentence: &str,
    tokens: Vec<Token>,
    lang: &str,
    lexicon: &CueLexicon,
    affix_tagging: AffixTagging,
) -> Result<TaggedSentence> {
    if lexicon.lang != lang {
        return Err(Error::UnsupportedLanguage {
            lang: lang.to_string(),
            supported: lexicon.lang.clone(),
        });
    }
    let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut tags = vec![BioTag::O; tokens.len()];
    let mut cues = Vec::new();

    let mut i = 0;
    while i < tokens.len() {
        match lexicon.longest_multiword_at(&lower, i) {
            Some(len) => {
                tags[i] = BioTag::B;
                for t in &mut tags[i + 1..i + len] {
                    *t = BioTag::I;
                }
                cues.push(CueSpan {
                    token_indices: (i..i + len).collect(),
                    surface: tokens[i..i + len]
                        .iter()
                        .map(|t| t.text.as_str())
                        .collect::<Vec<_>>()
                        .join(" "),
                    kind: CueKind::Multitoken,
                    affix: None,
                });
                i += len;
            }
            None => i += 1,
        }
    }

    for (set, kind) in [
        (&lexicon.single_tokens, CueKind::SingleToken),
        (&lexicon.lexicalized, CueKind::Lexicalized),
    ] {
        for (i, w) in lower.iter().enumerate() {
            if tags[i] == BioTag::O && set.contains(w) {
                tags[i] = BioTag::B;
                cues.push(CueSpan {
                    token_indices: vec![i],
                    surface: tokens[i].text.clone(),
                    kind,
                    affix: None,
                });
            }
        }
    }

    for (i, w) in lower.iter().enumerate() {
        if tags[i] != BioTag::O {
            continue;
        }
        if let Some(affix) = lexicon.match_affix(w) {
            if affix_tagging == AffixTagging::WholeToken {
                tags[i] = BioTag::B;
            }
            cues.push(CueSpan {
                token_indices: vec![i],
                surface: tokens[i].text.clone(),
                kind: CueKind::Affixal,
                affix: Some(affix),
            });
        }
    }

    cues.sort_by(|a, b| a.token_indices.cmp(&b.token_indices));
    Ok(TaggedSentence {
        sentence: sentence.to_string(),
        lang: lang.to_string(),
        tokens,
        tags,
        cues,
    })
}
