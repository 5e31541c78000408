use serde::{Deserialize, Serialize};

use super::TaggedSentence;
use crate::error::{Error, Result};

/// Cue-level precision, recall and F1. A predicted cue is correct only when
/// its token indices equal those of a gold cue in the same sentence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate_cues(pred: &[TaggedSentence], gold: &[TaggedSentence]) -> Result<CueScores> {
    if pred.len() != gold.len() {
        return Err(Error::invalid(format!(
            "{} predicted sentences vs {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        n_pred += p.cues.len();
        n_gold += g.cues.len();
        let mut unmatched: Vec<&Vec<usize>> = g.cues.iter().map(|c| &c.token_indices).collect();
        for c in &p.cues {
            if let Some(pos) = unmatched.iter().position(|g| **g == c.token_indices) {
                unmatched.swap_remove(pos);
                tp += 1;
            }
        }
    }
    let precision = ratio(tp, n_pred);
    let recall = ratio(tp, n_gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(CueScores {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: n_pred - tp,
        false_negatives: n_gold - tp,
    })
}
