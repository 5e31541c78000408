//! Linear-chain CRF over the three BIO labels.
//!
//! The score of a tag sequence `y` for a sentence with feature sets `F_t` is
//!
//! ```text
//! score(y) = Σ_t Σ_{f ∈ F_t} E[f][y_t] + Σ_{t>0} T[y_{t-1}][y_t]
//! ```
//!
//! with no start or stop transitions. All inference runs in log space.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::{BioTag, NUM_LABELS};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub type Scores = [f64; NUM_LABELS];

/// Sentence features as column indices into the emission matrix.
pub type IndexedFeatures = Vec<Vec<usize>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub steps: usize,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    feature_names: Vec<String>,
    feature_index: HashMap<String, usize>,
    emission: Vec<Scores>,
    transition: [Scores; NUM_LABELS],
    pub l2: f64,
    pub training_meta: TrainingMeta,
    pub lexicon_hash: Option<String>,
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl CrfModel {
    /// A zero-weight model over the given feature names, in column order.
    pub fn new(feature_names: Vec<String>) -> Result<Self> {
        let mut feature_index = HashMap::with_capacity(feature_names.len());
        for (i, name) in feature_names.iter().enumerate() {
            if feature_index.insert(name.clone(), i).is_some() {
                return Err(Error::Model(format!("duplicate feature {name:?}")));
            }
        }
        Ok(CrfModel {
            emission: vec![[0.0; NUM_LABELS]; feature_names.len()],
            feature_names,
            feature_index,
            transition: [[0.0; NUM_LABELS]; NUM_LABELS],
            l2: 0.0,
            training_meta: TrainingMeta::default(),
            lexicon_hash: None,
        })
    }

    pub fn labels(&self) -> [BioTag; NUM_LABELS] {
        BioTag::ALL
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_id(&self, name: &str) -> Option<usize> {
        self.feature_index.get(name).copied()
    }

    pub fn emission(&self, feature: usize) -> &Scores {
        &self.emission[feature]
    }

    pub fn emission_mut(&mut self, feature: usize) -> &mut Scores {
        &mut self.emission[feature]
    }

    pub fn transition(&self) -> &[Scores; NUM_LABELS] {
        &self.transition
    }

    pub fn transition_mut(&mut self) -> &mut [Scores; NUM_LABELS] {
        &mut self.transition
    }

    pub fn num_params(&self) -> usize {
        (self.emission.len() + NUM_LABELS) * NUM_LABELS
    }

    /// Flat parameter vector: emission rows, then transition rows.
    pub fn params(&self) -> Vec<f64> {
        self.emission
            .iter()
            .chain(self.transition.iter())
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params());
        let rows = self.emission.iter_mut().chain(self.transition.iter_mut());
        for (row, chunk) in rows.zip(params.chunks_exact(NUM_LABELS)) {
            row.copy_from_slice(chunk);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|w| w.is_finite())
    }

    /// Maps feature names to columns, dropping names the model never saw.
    pub fn index_features(&self, features: &[FeatureSet]) -> IndexedFeatures {
        features
            .iter()
            .map(|set| set.iter().filter_map(|f| self.feature_id(f)).collect())
            .collect()
    }

    /// Per-position label scores from the emission weights.
    pub fn unary_scores(&self, features: &[Vec<usize>]) -> Vec<Scores> {
        features
            .iter()
            .map(|fs| {
                let mut s = [0.0; NUM_LABELS];
                for &f in fs {
                    for (acc, w) in s.iter_mut().zip(&self.emission[f]) {
                        *acc += w;
                    }
                }
                s
            })
            .collect()
    }

    /// Unnormalized score of one tag sequence.
    pub fn sequence_score(&self, features: &[Vec<usize>], tags: &[BioTag]) -> f64 {
        assert_eq!(features.len(), tags.len());
        let unary = self.unary_scores(features);
        let mut s = 0.0;
        for (t, tag) in tags.iter().enumerate() {
            s += unary[t][tag.index()];
            if t > 0 {
                s += self.transition[tags[t - 1].index()][tag.index()];
            }
        }
        s
    }

    /// Forward log-potentials: `alpha[t][y]` = log-sum of scores of all
    /// prefixes ending in label `y` at position `t`.
    pub(crate) fn forward(&self, unary: &[Scores]) -> Vec<Scores> {
        let mut alpha: Vec<Scores> = Vec::with_capacity(unary.len());
        for (t, u) in unary.iter().enumerate() {
            let mut a = [0.0; NUM_LABELS];
            for y in 0..NUM_LABELS {
                a[y] = if t == 0 {
                    u[y]
                } else {
                    let prev = &alpha[t - 1];
                    let terms: Scores =
                        std::array::from_fn(|yp| prev[yp] + self.transition[yp][y]);
                    log_sum_exp(&terms) + u[y]
                };
            }
            alpha.push(a);
        }
        alpha
    }

    /// Backward log-potentials: `beta[t][y]` = log-sum of scores of all
    /// suffixes after position `t` given label `y` at `t`.
    pub(crate) fn backward(&self, unary: &[Scores]) -> Vec<Scores> {
        let n = unary.len();
        let mut beta = vec![[0.0; NUM_LABELS]; n];
        for t in (0..n.saturating_sub(1)).rev() {
            for y in 0..NUM_LABELS {
                let terms: Scores = std::array::from_fn(|yn| {
                    self.transition[y][yn] + unary[t + 1][yn] + beta[t + 1][yn]
                });
                beta[t][y] = log_sum_exp(&terms);
            }
        }
        beta
    }

    /// Log of the sum of `exp(score)` over every tag sequence. An empty
    /// sentence has exactly one (empty) sequence, so its value is 0.
    pub fn log_partition(&self, features: &[Vec<usize>]) -> f64 {
        if features.is_empty() {
            return 0.0;
        }
        let alpha = self.forward(&self.unary_scores(features));
        log_sum_exp(alpha.last().unwrap())
    }

    /// Per-position label marginals `P(y_t = y | x)`.
    pub fn marginals(&self, features: &[Vec<usize>]) -> Vec<Scores> {
        if features.is_empty() {
            return Vec::new();
        }
        let unary = self.unary_scores(features);
        let alpha = self.forward(&unary);
        let beta = self.backward(&unary);
        let log_z = log_sum_exp(alpha.last().unwrap());
        alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| std::array::from_fn(|y| (a[y] + b[y] - log_z).exp()))
            .collect()
    }

    /// Highest-scoring tag sequence and its score. Ties go to the lowest
    /// label index, both at each backpointer and at the final position.
    pub fn viterbi(&self, features: &[Vec<usize>]) -> (Vec<BioTag>, f64) {
        let n = features.len();
        if n == 0 {
            return (Vec::new(), 0.0);
        }
        let unary = self.unary_scores(features);
        let mut delta = vec![[0.0; NUM_LABELS]; n];
        let mut back = vec![[0usize; NUM_LABELS]; n];
        delta[0] = unary[0];
        for t in 1..n {
            for y in 0..NUM_LABELS {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (yp, prev) in delta[t - 1].iter().enumerate() {
                    let s = prev + self.transition[yp][y];
                    if s > best_score {
                        best = yp;
                        best_score = s;
                    }
                }
                delta[t][y] = best_score + unary[t][y];
                back[t][y] = best;
            }
        }
        let mut last = 0;
        for y in 1..NUM_LABELS {
            if delta[n - 1][y] > delta[n - 1][last] {
                last = y;
            }
        }
        let score = delta[n - 1][last];
        let mut path = vec![0usize; n];
        path[n - 1] = last;
        for t in (1..n).rev() {
            path[t - 1] = back[t][path[t]];
        }
        (path.into_iter().map(BioTag::from_index).collect(), score)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            labels: BioTag::ALL.iter().map(|t| t.as_str().to_string()).collect(),
            feature_index: self
                .feature_names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
            emission_weights: self.emission.iter().map(|r| r.to_vec()).collect(),
            transition_weights: self.transition.iter().map(|r| r.to_vec()).collect(),
            l2: self.l2,
            training_meta: self.training_meta.clone(),
            lexicon_hash: self.lexicon_hash.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        let expected: Vec<&str> = BioTag::ALL.iter().map(|t| t.as_str()).collect();
        if file.labels != expected {
            return Err(Error::Model(format!("label order must be {expected:?}")));
        }
        let n = file.feature_index.len();
        let mut names = vec![None; n];
        for (name, col) in file.feature_index {
            match names.get_mut(col) {
                Some(slot @ None) => *slot = Some(name),
                _ => return Err(Error::Model(format!("bad column {col} for {name:?}"))),
            }
        }
        let names: Vec<String> = names.into_iter().map(Option::unwrap).collect();
        if file.emission_weights.len() != n
            || file.emission_weights.iter().any(|r| r.len() != NUM_LABELS)
            || file.transition_weights.len() != NUM_LABELS
            || file.transition_weights.iter().any(|r| r.len() != NUM_LABELS)
        {
            return Err(Error::Model("weight matrix shape mismatch".into()));
        }
        let mut model = CrfModel::new(names)?;
        let params: Vec<f64> = file
            .emission_weights
            .iter()
            .chain(&file.transition_weights)
            .flatten()
            .copied()
            .collect();
        model.set_params(&params);
        if !model.is_finite() {
            return Err(Error::Model("non-finite weights".into()));
        }
        model.l2 = file.l2;
        model.training_meta = file.training_meta;
        model.lexicon_hash = file.lexicon_hash;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    labels: Vec<String>,
    feature_index: BTreeMap<String, usize>,
    emission_weights: Vec<Vec<f64>>,
    transition_weights: Vec<Vec<f64>>,
    l2: f64,
    training_meta: TrainingMeta,
    lexicon_hash: Option<String>,
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every tag sequence of length `n`.
    pub(crate) fn all_sequences(n: usize) -> Vec<Vec<BioTag>> {
        let mut out = vec![Vec::new()];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|s| {
                    BioTag::ALL.iter().map(move |&t| {
                        let mut s = s.clone();
                        s.push(t);
                        s
                    })
                })
                .collect();
        }
        out
    }

    /// Brute-force score of a sequence straight from the weight tables.
    pub(crate) fn brute_score(m: &CrfModel, feats: &[Vec<usize>], tags: &[BioTag]) -> f64 {
        let mut s = 0.0;
        for t in 0..tags.len() {
            for &f in &feats[t] {
                s += m.emission(f)[tags[t] as usize];
            }
            if t > 0 {
                s += m.transition()[tags[t - 1] as usize][tags[t] as usize];
            }
        }
        s
    }

    pub(crate) fn random_model(rng: &mut ChaCha8Rng, n_feats: usize) -> CrfModel {
        let names = (0..n_feats).map(|i| format!("f{i}")).collect();
        let mut m = CrfModel::new(names).unwrap();
        let params: Vec<f64> = (0..m.num_params()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        m.set_params(&params);
        m
    }

    pub(crate) fn random_features(rng: &mut ChaCha8Rng, n: usize, n_feats: usize) -> IndexedFeatures {
        (0..n)
            .map(|_| (0..n_feats).filter(|_| rng.gen_bool(0.5)).collect())
            .collect()
    }

    fn toy_model() -> (CrfModel, IndexedFeatures) {
        let mut m = CrfModel::new(vec!["a".into(), "b".into()]).unwrap();
        m.set_params(&[0.5, -1.0, 0.25, 1.5, 0.0, -0.5, 0.1, 0.2, -0.3, -1.0, 0.7, 0.4, 0.9, -0.2, 0.05]);
        (m, vec![vec![0], vec![0, 1], vec![1]])
    }

    #[test]
    fn zero_weights_partition_is_n_ln3() {
        let m = CrfModel::new(vec!["x".into()]).unwrap();
        for n in 1..6 {
            let feats = vec![vec![0]; n];
            assert!((m.log_partition(&feats) - n as f64 * 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_partition_matches_enumeration() {
        let (m, feats) = toy_model();
        let scores: Vec<f64> = all_sequences(3).iter().map(|s| brute_score(&m, &feats, s)).collect();
        assert_eq!(scores.len(), 27);
        assert!((m.log_partition(&feats) - log_sum_exp(&scores)).abs() < 1e-12);
    }

    #[test]
    fn single_position_partition() {
        let (m, _) = toy_model();
        let feats = vec![vec![0, 1]];
        let u = m.unary_scores(&feats)[0];
        assert!((m.log_partition(&feats) - log_sum_exp(&u)).abs() < 1e-12);
    }

    #[test]
    fn toy_viterbi_matches_enumeration() {
        let (m, feats) = toy_model();
        let best = all_sequences(3)
            .into_iter()
            .map(|s| (brute_score(&m, &feats, &s), s))
            .fold((f64::NEG_INFINITY, vec![]), |a, b| if b.0 > a.0 { b } else { a });
        let (tags, score) = m.viterbi(&feats);
        assert_eq!(tags, best.1);
        assert!((score - best.0).abs() < 1e-12);
        assert!((m.sequence_score(&feats, &tags) - score).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_decode_all_outside() {
        let m = CrfModel::new(vec!["x".into()]).unwrap();
        let (tags, score) = m.viterbi(&vec![vec![0]; 4]);
        assert_eq!(tags, vec![BioTag::O; 4]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn strong_cue_weight_wins() {
        let mut m = CrfModel::new(vec!["lower=not".into(), "bias".into()]).unwrap();
        m.emission_mut(0)[BioTag::B.index()] = 10.0;
        let feats = vec![vec![1], vec![1], vec![0, 1], vec![1]];
        let (tags, score) = m.viterbi(&feats);
        assert_eq!(tags, [BioTag::O, BioTag::O, BioTag::B, BioTag::O]);
        assert_eq!(score, 10.0);
    }

    #[test]
    fn marginals_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = random_model(&mut rng, 4);
            let n = rng.gen_range(1..=6);
            let feats = random_features(&mut rng, n, 4);
            for row in m.marginals(&feats) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_sentence() {
        let (m, _) = toy_model();
        assert_eq!(m.log_partition(&[]), 0.0);
        assert_eq!(m.viterbi(&[]), (vec![], 0.0));
        assert!(m.marginals(&[]).is_empty());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random_model(&mut rng, 6);
        m.l2 = 0.01;
        m.lexicon_hash = Some("abc".into());
        m.training_meta = TrainingMeta {
            epochs: 3,
            steps: 9,
            final_objective: 1.25,
        };
        let back = CrfModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_model_files() {
        let m = toy_model().0;
        let json = m.to_json().unwrap();
        let swapped = json.replacen("\"O\"", "\"X\"", 1);
        assert!(CrfModel::from_json(&swapped).is_err());
        let v2 = json.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(CrfModel::from_json(&v2).is_err());
        assert!(CrfModel::new(vec!["a".into(), "a".into()]).is_err());
    }
}
