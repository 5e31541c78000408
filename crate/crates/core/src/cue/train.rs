//! CRF training by mini-batch gradient descent on the L2-regularized mean
//! negative log-likelihood.
//!
//! Step size follows `lr_t = lr_0 / (1 + t / decay_steps)` where `t` counts
//! optimizer steps. Each epoch visits the data in an order drawn from a
//! ChaCha8 stream seeded with `config.seed`, so a fixed seed reproduces the
//! same weights bit for bit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::crf::{log_sum_exp, CrfModel, IndexedFeatures, TrainingMeta};
use super::{is_bio_valid, BioTag, FeatureExtractor, NUM_LABELS};
use crate::error::{Error, Result};

/// A gold-labelled, pre-tokenized sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSentence {
    pub lang: String,
    pub tokens: Vec<String>,
    pub tags: Vec<BioTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub decay_steps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 13,
            batch_size: 4,
            decay_steps: 100.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::invalid("l2 must be non-negative and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.decay_steps.is_finite() && self.decay_steps > 0.0) {
            return Err(Error::invalid("decay_steps must be positive and finite"));
        }
        Ok(())
    }
}

/// A sentence with features resolved to model columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: IndexedFeatures,
    pub gold: Vec<BioTag>,
}

/// Mean NLL over `instances` plus `l2/2 · ‖w‖²`, and its gradient in the
/// layout of [`CrfModel::params`].
pub fn objective_and_gradient<'a, I>(model: &CrfModel, instances: I, l2: f64) -> (f64, Vec<f64>)
where
    I: IntoIterator<Item = &'a Instance>,
{
    let n_emit = model.num_features() * NUM_LABELS;
    let mut grad = vec![0.0; model.num_params()];
    let mut nll = 0.0;
    let mut count = 0usize;
    let trans = model.transition();

    for inst in instances {
        count += 1;
        let n = inst.features.len();
        if n == 0 {
            continue;
        }
        let unary = model.unary_scores(&inst.features);
        let alpha = model.forward(&unary);
        let beta = model.backward(&unary);
        let log_z = log_sum_exp(alpha.last().unwrap());
        nll += log_z - model.sequence_score(&inst.features, &inst.gold);

        for t in 0..n {
            let gold = inst.gold[t].index();
            for y in 0..NUM_LABELS {
                let p = (alpha[t][y] + beta[t][y] - log_z).exp();
                let d = p - if y == gold { 1.0 } else { 0.0 };
                for &f in &inst.features[t] {
                    grad[f * NUM_LABELS + y] += d;
                }
            }
            if t > 0 {
                let gold_prev = inst.gold[t - 1].index();
                for yp in 0..NUM_LABELS {
                    for y in 0..NUM_LABELS {
                        let p = (alpha[t - 1][yp] + trans[yp][y] + unary[t][y] + beta[t][y]
                            - log_z)
                            .exp();
                        let ind = if yp == gold_prev && y == gold { 1.0 } else { 0.0 };
                        grad[n_emit + yp * NUM_LABELS + y] += p - ind;
                    }
                }
            }
        }
    }

    let scale = if count == 0 { 0.0 } else { 1.0 / count as f64 };
    let params = model.params();
    let mut reg = 0.0;
    for (g, w) in grad.iter_mut().zip(&params) {
        *g = *g * scale + l2 * w;
        reg += w * w;
    }
    (nll * scale + 0.5 * l2 * reg, grad)
}

fn check_dataset(dataset: &[TrainingSentence], langs: &[&str]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.tokens.len() != s.tags.len() {
            return Err(Error::invalid(format!(
                "sentence {i}: {} tokens but {} tags",
                s.tokens.len(),
                s.tags.len()
            )));
        }
        if !is_bio_valid(&s.tags) {
            return Err(Error::invalid(format!("sentence {i}: gold tags are not BIO-valid")));
        }
        if !langs.contains(&s.lang.as_str()) {
            return Err(Error::UnsupportedLanguage {
                lang: s.lang.clone(),
                supported: langs.join(", "),
            });
        }
    }
    Ok(())
}

/// Builds the feature vocabulary (first-seen order) and indexed instances.
pub fn prepare(
    dataset: &[TrainingSentence],
    extractor: &FeatureExtractor,
) -> Result<(CrfModel, Vec<Instance>)> {
    let mut names: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut per_sentence = Vec::with_capacity(dataset.len());
    for s in dataset {
        let feats = extractor.featurize_sentence(&s.tokens, &s.lang)?;
        for set in &feats {
            for f in set {
                if seen.insert(f.clone()) {
                    names.push(f.clone());
                }
            }
        }
        per_sentence.push(feats);
    }
    let model = CrfModel::new(names)?;
    let instances = per_sentence
        .iter()
        .zip(dataset)
        .map(|(feats, s)| Instance {
            features: model.index_features(feats),
            gold: s.tags.clone(),
        })
        .collect();
    Ok((model, instances))
}

/// Trains a model jointly over every language in `langs`.
pub fn crf_train(
    dataset: &[TrainingSentence],
    langs: &[&str],
    extractor: &FeatureExtractor,
    config: &TrainConfig,
) -> Result<CrfModel> {
    config.validate()?;
    check_dataset(dataset, langs)?;
    for lang in langs {
        extractor.lexicons().get(lang)?;
    }

    let (mut model, instances) = prepare(dataset, extractor)?;
    model.l2 = config.l2;
    model.lexicon_hash = Some(extractor.lexicons().content_hash());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut params = model.params();
    let mut step = 0usize;
    let mut objective = f64::NAN;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let lr = config.learning_rate / (1.0 + step as f64 / config.decay_steps);
            let (_, grad) =
                objective_and_gradient(&model, batch.iter().map(|&i| &instances[i]), config.l2);
            for (w, g) in params.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
            model.set_params(&params);
            step += 1;
        }
        objective = objective_and_gradient(&model, &instances, config.l2).0;
        log::debug!("epoch {} objective {objective:.6}", epoch + 1);
        if !objective.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                objective,
            });
        }
    }
    if config.epochs == 0 {
        objective = objective_and_gradient(&model, &instances, config.l2).0;
    }

    model.training_meta = TrainingMeta {
        epochs: config.epochs,
        steps: step,
        final_objective: objective,
    };
    Ok(model)
}

/// Fraction of tokens whose decoded tag equals the gold tag.
pub fn token_accuracy(
    model: &CrfModel,
    extractor: &FeatureExtractor,
    dataset: &[TrainingSentence],
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for s in dataset {
        let feats = extractor.featurize_sentence(&s.tokens, &s.lang)?;
        let (pred, _) = model.viterbi(&model.index_features(&feats));
        correct += pred.iter().zip(&s.tags).filter(|(a, b)| a == b).count();
        total += s.tags.len();
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cue::crf::tests::{random_features, random_model};
    use crate::cue::LexiconSet;
    use rand::Rng;
    use std::sync::Arc;

    fn extractor() -> FeatureExtractor {
        FeatureExtractor::new(Arc::new(LexiconSet::bundled()))
    }

    fn random_gold(rng: &mut ChaCha8Rng, n: usize) -> Vec<BioTag> {
        let mut tags: Vec<BioTag> = (0..n).map(|_| BioTag::from_index(rng.gen_range(0..3))).collect();
        crate::cue::repair_bio(&mut tags);
        tags
    }

    /// Central differences of the objective along every parameter.
    fn numeric_gradient(model: &CrfModel, insts: &[Instance], l2: f64, h: f64) -> Vec<f64> {
        let base = model.params();
        let mut m = model.clone();
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + h;
                m.set_params(&p);
                let up = objective_and_gradient(&m, insts, l2).0;
                p[i] = base[i] - h;
                m.set_params(&p);
                let down = objective_and_gradient(&m, insts, l2).0;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn rel_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-12)
    }

    #[test]
    fn gradient_matches_finite_differences_on_five_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = random_model(&mut rng, 5);
        let insts: Vec<Instance> = (0..4)
            .map(|_| {
                let n = rng.gen_range(1..=5);
                Instance {
                    features: random_features(&mut rng, n, 5),
                    gold: random_gold(&mut rng, n),
                }
            })
            .collect();
        let (_, analytic) = objective_and_gradient(&model, &insts, 0.1);
        let numeric = numeric_gradient(&model, &insts, 0.1, 1e-5);
        assert!(rel_error(&analytic, &numeric) <= 1e-4);
    }

    #[test]
    fn empty_dataset_rejected() {
        let err = crf_train(&[], &["en"], &extractor(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn invalid_gold_rejected() {
        let data = vec![TrainingSentence {
            lang: "en".into(),
            tokens: vec!["a".into()],
            tags: vec![BioTag::I],
        }];
        assert!(crf_train(&data, &["en"], &extractor(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn language_outside_set_rejected() {
        let data = vec![TrainingSentence {
            lang: "es".into(),
            tokens: vec!["no".into()],
            tags: vec![BioTag::B],
        }];
        assert!(crf_train(&data, &["en"], &extractor(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let data = vec![
            TrainingSentence {
                lang: "en".into(),
                tokens: ["it", "is", "not", "here"].map(String::from).into(),
                tags: vec![BioTag::O, BioTag::O, BioTag::B, BioTag::O],
            };
            3
        ];
        let cfg = TrainConfig {
            learning_rate: 1e306,
            epochs: 5,
            ..TrainConfig::default()
        };
        let err = crf_train(&data, &["en"], &extractor(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn objective_decreases() {
        let data: Vec<TrainingSentence> = ["the cat is not here", "no way", "all good"]
            .iter()
            .map(|s| {
                let tokens: Vec<String> = s.split(' ').map(String::from).collect();
                let tags = tokens
                    .iter()
                    .map(|t| if t == "not" || t == "no" { BioTag::B } else { BioTag::O })
                    .collect();
                TrainingSentence {
                    lang: "en".into(),
                    tokens,
                    tags,
                }
            })
            .collect();
        let fx = extractor();
        let (m0, insts) = prepare(&data, &fx).unwrap();
        let start = objective_and_gradient(&m0, &insts, 1e-3).0;
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let m = crf_train(&data, &["en"], &fx, &cfg).unwrap();
        assert!(m.training_meta.final_objective < start);
        assert_eq!(m.training_meta.epochs, 10);
        assert_eq!(m.training_meta.steps, 10);
        assert_eq!(token_accuracy(&m, &fx, &data).unwrap(), 1.0);
    }
}
