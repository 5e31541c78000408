//! Whitespace and punctuation tokenizer shared by cue detection, the target
//! length filter and the generation metrics.
//!
//! A sentence is split on Unicode whitespace. Every non-alphanumeric character
//! at either edge of a chunk becomes its own token. For English, the clitics
//! `n't 's 're 've 'll 'd 'm` (straight or curly apostrophe) are split off the
//! end of a word so that `n't` can be tagged as a cue on its own.

use serde::{Deserialize, Serialize};

/// A token with byte offsets into the sentence it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

const EN_CLITICS: &[&str] = &[
    "n't", "'s", "'re", "'ve", "'ll", "'d", "'m", "n’t", "’s", "’re", "’ve", "’ll", "’d", "’m",
];

fn is_clitic(s: &str) -> bool {
    EN_CLITICS.iter().any(|c| s.eq_ignore_ascii_case(c))
}

/// Length in bytes of the clitic that `word` ends with, if the word is longer
/// than the clitic itself.
fn clitic_suffix_len(word: &str) -> Option<usize> {
    EN_CLITICS
        .iter()
        .filter(|c| word.len() > c.len() && word.is_char_boundary(word.len() - c.len()))
        .find(|c| word[word.len() - c.len()..].eq_ignore_ascii_case(c))
        .map(|c| c.len())
}

fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Tokenizes `sentence`. `lang` only toggles the English clitic rules.
pub fn tokenize(sentence: &str, lang: &str) -> Vec<Token> {
    let english = lang == "en";
    let mut spans: Vec<(usize, usize)> = Vec::new();

    for (chunk_start, chunk) in whitespace_chunks(sentence) {
        // peel from both ends; `back` collects suffix pieces in reverse
        let (mut lo, mut hi) = (chunk_start, chunk_start + chunk.len());
        let mut back = Vec::new();
        while lo < hi {
            let s = &sentence[lo..hi];
            if english && is_clitic(s) {
                spans.push((lo, hi));
                break;
            }
            let last = s.chars().next_back().unwrap();
            if is_edge_punct(last) {
                back.push((hi - last.len_utf8(), hi));
                hi -= last.len_utf8();
                continue;
            }
            let first = s.chars().next().unwrap();
            if is_edge_punct(first) {
                spans.push((lo, lo + first.len_utf8()));
                lo += first.len_utf8();
                continue;
            }
            if let Some(n) = clitic_suffix_len(s).filter(|_| english) {
                back.push((hi - n, hi));
                hi -= n;
                continue;
            }
            spans.push((lo, hi));
            break;
        }
        spans.extend(back.into_iter().rev());
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Token {
            text: sentence[start..end].to_string(),
            start,
            end,
            index,
        })
        .collect()
}

/// Number of tokens `tokenize` would produce.
pub fn token_count(sentence: &str, lang: &str) -> usize {
    tokenize(sentence, lang).len()
}

fn whitespace_chunks(s: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        let rest = &s[pos..];
        let skip = rest
            .char_indices()
            .find(|(_, c)| !c.is_whitespace())
            .map(|(i, _)| i)?;
        let start = pos + skip;
        let len = s[start..]
            .char_indices()
            .find(|(_, c)| c.is_whitespace())
            .map_or(s.len() - start, |(i, _)| i);
        pos = start + len;
        Some((start, &s[start..start + len]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str, lang: &str) -> Vec<String> {
        tokenize(s, lang).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn splits_final_period() {
        assert_eq!(
            texts("It is not a bad film.", "en"),
            ["It", "is", "not", "a", "bad", "film", "."]
        );
    }

    #[test]
    fn empty_sentence() {
        assert!(tokenize("", "en").is_empty());
        assert!(tokenize("  \t\n", "en").is_empty());
    }

    #[test]
    fn negative_clitic() {
        assert_eq!(texts("doesn't", "en"), ["does", "n't"]);
        assert_eq!(texts("Don’t!", "en"), ["Do", "n’t", "!"]);
        assert_eq!(texts("John's car", "en"), ["John", "'s", "car"]);
        assert_eq!(texts("n't", "en"), ["n't"]);
    }

    #[test]
    fn clitics_only_split_for_english() {
        assert_eq!(texts("doesn't", "no"), ["doesn't"]);
        assert_eq!(texts("'s", "es"), ["'", "s"]);
    }

    #[test]
    fn punctuation_runs_split_per_character() {
        assert_eq!(texts("(wow)!!", "en"), ["(", "wow", ")", "!", "!"]);
        assert_eq!(texts("¿Qué?", "es"), ["¿", "Qué", "?"]);
        assert_eq!(texts("e.g. U.S.", "en"), ["e.g", ".", "U.S", "."]);
    }

    #[test]
    fn offsets_are_bytes() {
        let toks = tokenize("Sannhet æøå.", "no");
        assert_eq!(toks[1].text, "æøå");
        assert_eq!((toks[1].start, toks[1].end), (8, 14));
        assert_eq!(toks[2].index, 2);
    }

    fn sentence_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("n't".to_string()),
                Just("'s".to_string()),
                Just("’".to_string()),
                Just("'".to_string()),
                Just(" ".to_string()),
                Just("\u{3000}".to_string()),
                Just(".".to_string()),
                Just("!?".to_string()),
                "[a-zA-Zæøåéñ0-9]{1,6}",
                any::<char>().prop_map(|c| c.to_string()),
            ],
            0..24,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn offsets_reproduce_text(s in sentence_strategy(), en in any::<bool>()) {
            let lang = if en { "en" } else { "no" };
            let toks = tokenize(&s, lang);
            let mut last_end = 0;
            for (i, t) in toks.iter().enumerate() {
                prop_assert!(t.start < t.end);
                prop_assert!(t.start >= last_end);
                prop_assert_eq!(&s[t.start..t.end], t.text.as_str());
                prop_assert_eq!(t.index, i);
                last_end = t.end;
            }
        }

        #[test]
        fn retokenizing_joined_tokens_is_stable(s in sentence_strategy(), en in any::<bool>()) {
            let lang = if en { "en" } else { "es" };
            let first: Vec<String> = tokenize(&s, lang).into_iter().map(|t| t.text).collect();
            let joined = first.join(" ");
            let second: Vec<String> = tokenize(&joined, lang).into_iter().map(|t| t.text).collect();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn deterministic(s in sentence_strategy()) {
            prop_assert_eq!(tokenize(&s, "en"), tokenize(&s, "en"));
        }
    }
}
