//! Corpus-level BLEU-2 and chrF++ for generated interpretations against a
//! single reference each.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Bleu2,
    Chrfpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub name: MetricName,
    pub value: f64,
    pub n_examples: usize,
}

/// Stand-in for a zero bigram match count.
pub const BLEU_EPSILON: f64 = 1e-9;

fn check_lengths(candidates: &[impl AsRef<str>], references: &[impl AsRef<str>]) -> Result<()> {
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    Ok(())
}

fn counts<T: Hash + Eq>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

/// (candidate total, clipped matches) for one n-gram order.
fn clipped<T: Hash + Eq>(cand: &HashMap<T, usize>, reference: &HashMap<T, usize>) -> (usize, usize) {
    let total = cand.values().sum();
    let matched = cand
        .iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum();
    (total, matched)
}

/// BLEU with unigram and bigram precisions, equally weighted, over the whole
/// corpus. Tokens come from [`tokenize`] with English rules, case preserved.
/// An order with no candidate n-grams at all is left out of the mean; zero
/// unigram matches score 0.
pub fn bleu2<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R]) -> Result<MetricScore> {
    check_lengths(candidates, references)?;
    if candidates.is_empty() {
        return Err(Error::invalid("BLEU needs at least one example"));
    }
    let (mut c_len, mut r_len) = (0usize, 0usize);
    let mut totals = [0usize; 2];
    let mut matches = [0usize; 2];
    for (c, r) in candidates.iter().zip(references) {
        let ct: Vec<String> = tokenize(c.as_ref(), "en").into_iter().map(|t| t.text).collect();
        let rt: Vec<String> = tokenize(r.as_ref(), "en").into_iter().map(|t| t.text).collect();
        c_len += ct.len();
        r_len += rt.len();
        for n in 1..=2 {
            let cg = counts(ct.windows(n));
            let rg = counts(rt.windows(n));
            let (t, m) = clipped(&cg, &rg);
            totals[n - 1] += t;
            matches[n - 1] += m;
        }
    }
    let score = |value| MetricScore {
        name: MetricName::Bleu2,
        value,
        n_examples: candidates.len(),
    };
    if matches[0] == 0 {
        return Ok(score(0.0));
    }
    let log_p: Vec<f64> = (0..2)
        .filter(|&i| totals[i] > 0)
        .map(|i| {
            let m = if matches[i] == 0 { BLEU_EPSILON } else { matches[i] as f64 };
            (m / totals[i] as f64).ln()
        })
        .collect();
    let mean = log_p.iter().sum::<f64>() / log_p.len() as f64;
    let bp = if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(score((100.0 * bp * mean.exp()).clamp(0.0, 100.0)))
}

pub const CHRF_CHAR_ORDER: usize = 6;
pub const CHRF_WORD_ORDER: usize = 2;
pub const CHRF_BETA: f64 = 2.0;

const PUNCTUATION: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Word split used by chrF++: whitespace, then one punctuation mark peeled
/// off the end (or else the start) of each multi-character word.
pub fn chrf_words(sentence: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for w in sentence.split_whitespace() {
        let mut chars = w.chars();
        let first = chars.next().unwrap();
        let Some(last) = chars.next_back() else {
            out.push(w);
            continue;
        };
        if PUNCTUATION.contains(last) {
            out.extend([&w[..w.len() - last.len_utf8()], &w[w.len() - last.len_utf8()..]]);
        } else if PUNCTUATION.contains(first) {
            out.extend([&w[..first.len_utf8()], &w[first.len_utf8()..]]);
        } else {
            out.push(w);
        }
    }
    out
}

/// Per-order [hyp, ref, match] totals: character orders first, then words.
fn chrf_stats(hyp: &str, reference: &str, stats: &mut [[usize; 3]]) {
    let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    for n in 1..=CHRF_CHAR_ORDER {
        let (h, r) = (counts(hc.windows(n)), counts(rc.windows(n)));
        let (t, m) = clipped(&h, &r);
        stats[n - 1][0] += t;
        stats[n - 1][1] += r.values().sum::<usize>();
        stats[n - 1][2] += m;
    }
    let (hw, rw) = (chrf_words(hyp), chrf_words(reference));
    for n in 1..=CHRF_WORD_ORDER {
        let (h, r) = (counts(hw.windows(n)), counts(rw.windows(n)));
        let (t, m) = clipped(&h, &r);
        let s = &mut stats[CHRF_CHAR_ORDER + n - 1];
        s[0] += t;
        s[1] += r.values().sum::<usize>();
        s[2] += m;
    }
}

/// F-beta of precision and recall averaged over the orders where both sides
/// have n-grams.
fn chrf_from_stats(stats: &[[usize; 3]]) -> f64 {
    let (mut p, mut r, mut k) = (0.0, 0.0, 0usize);
    for &[h, rf, m] in stats {
        if h > 0 && rf > 0 {
            p += m as f64 / h as f64;
            r += m as f64 / rf as f64;
            k += 1;
        }
    }
    if k == 0 {
        return 0.0;
    }
    let (p, r) = (p / k as f64, r / k as f64);
    if p + r == 0.0 {
        return 0.0;
    }
    let b2 = CHRF_BETA * CHRF_BETA;
    100.0 * (1.0 + b2) * p * r / (b2 * p + r)
}

/// Corpus-level chrF++ (character 1..6-grams without whitespace, word
/// 1..2-grams, beta 2).
pub fn chrfpp<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R]) -> Result<MetricScore> {
    check_lengths(candidates, references)?;
    let mut stats = vec![[0usize; 3]; CHRF_CHAR_ORDER + CHRF_WORD_ORDER];
    for (c, r) in candidates.iter().zip(references) {
        chrf_stats(c.as_ref(), r.as_ref(), &mut stats);
    }
    Ok(MetricScore {
        name: MetricName::Chrfpp,
        value: chrf_from_stats(&stats).clamp(0.0, 100.0),
        n_examples: candidates.len(),
    })
}
