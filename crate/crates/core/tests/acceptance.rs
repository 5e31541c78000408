//! Acceptance suite: one PASS/FAIL line per criterion with its wall time and
//! budget. Runs as a plain binary so the lines are always printed.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use affirm::blend::make_plan;
use affirm::corpus::{read_jsonl_all, SentencePair};
use affirm::cue::conll::read_bio_columns;
use affirm::cue::train::{objective_and_gradient, token_accuracy, Instance};
use affirm::cue::{crf_train, BioTag, CrfModel, CueKind, CueSpan, Detector, FeatureExtractor, LexiconSet, TrainConfig, NUM_LABELS};
use affirm::metrics::{bleu2, chrf_words, chrfpp};
use affirm::mt::{ClientConfig, MockBackend, TranslationClient, TranslationRequest};
use affirm::nli::{derive_nli, export_nli, ExportFormat};
use affirm::pipeline::{run_pipeline, AfinPair, Direction, DiscardReason, NegationType, PipelineOptions};
use affirm::router::{HttpGenerator, LookupGenerator, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Check);

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixtures");

fn fixture(rel: &str) -> String {
    format!("{FIXTURES}/{rel}")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn affirm_bin(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_affirm"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!(
            "affirm {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write_fixture_config(dir: &Path, cache: &Path) -> Result<PathBuf, String> {
    let text = format!(
        r#"version = 1
output_dir = "out"

[[corpora]]
label = "wikimatrix-en-no"
format = "moses"
paths = ["{}", "{}"]
langs = ["en", "no"]

[[corpora]]
label = "wikimatrix-en-es"
format = "moses"
paths = ["{}", "{}"]
langs = ["en", "es"]

[translation]
backend = "mock"
fixture = "{}"
cache_dir = "{}"
requests_per_second = 0.0
backoff_ms = 1

[router]
generator = "lookup"
lookup = "{}"
"#,
        fixture("bitext/wikimatrix-en-no.en"),
        fixture("bitext/wikimatrix-en-no.no"),
        fixture("bitext/wikimatrix-en-es.en"),
        fixture("bitext/wikimatrix-en-es.es"),
        fixture("bitext/translations.jsonl"),
        cache.display(),
        fixture("router/lookup.jsonl"),
    );
    let p = dir.join("affirm.toml");
    fs::write(&p, text).map_err(err)?;
    Ok(p)
}

fn worked_example() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = write_fixture_config(dir.path(), &dir.path().join("cache"))?;
    affirm_bin(&["build-pairs", "--config", cfg.to_str().unwrap()], dir.path())?;
    let pairs: Vec<AfinPair> = read_jsonl_all(dir.path().join("out/afin_pairs.jsonl")).map_err(err)?;
    let got: Vec<(&str, &str, Direction)> = pairs
        .iter()
        .map(|p| (p.negated.as_str(), p.affirmative.as_str(), p.direction))
        .collect();
    let want = [
        (
            "There is no more than one Truth.",
            "And there is only one truth.",
            Direction::OriginalNegated,
        ),
        (
            "The term was not popular until 1999.",
            "The term gained traction only after 1999.",
            Direction::BacktranslationNegated,
        ),
    ];
    ensure(got == want, || format!("pairs differ: {got:?}"))?;
    ensure(
        pairs.iter().all(|p| p.negation_type == NegationType::SingleToken),
        || "expected single-token cues".into(),
    )?;
    let tally: affirm::pipeline::PipelineTally =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/tally.json")).map_err(err)?).map_err(err)?;
    let all = tally.total();
    ensure(all.ingested() == 10 && all.emitted == 2 && tally.is_conserved(), || {
        format!("tally off: {all:?}")
    })?;
    Ok(format!("2 pairs from {} bitext records", all.ingested()))
}

fn afin(i: usize) -> AfinPair {
    AfinPair {
        id: format!("c:{i}"),
        negated: format!("Sentence {i} is not short."),
        affirmative: format!("Sentence {i} is long."),
        direction: Direction::OriginalNegated,
        cues: vec![CueSpan {
            token_indices: vec![3],
            surface: "not".into(),
            kind: CueKind::SingleToken,
            affix: None,
        }],
        negation_type: NegationType::SingleToken,
        source_pair: format!("c:{i}"),
        corpus: "c".into(),
    }
}

fn cardinality() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    for n in [0usize, 1, 100, 10_000] {
        let pairs: Vec<AfinPair> = (0..n).map(afin).collect();
        let got = derive_nli(&pairs).count();
        ensure(got == 2 * n, || format!("{n} pairs gave {got} examples"))?;
        let path = dir.path().join(format!("nli-{n}.tsv"));
        let written = export_nli(derive_nli(&pairs), ExportFormat::Tsv, &path).map_err(err)?;
        let lines = fs::read_to_string(&path).map_err(err)?.lines().count();
        ensure(written == 2 * n && lines == 2 * n + 1, || {
            format!("{n} pairs: wrote {written} rows, file has {lines} lines")
        })?;
    }
    Ok("2n examples for n in {0, 1, 100, 10000}".into())
}

fn random_model(rng: &mut ChaCha8Rng, n_feats: usize) -> CrfModel {
    let mut m = CrfModel::new((0..n_feats).map(|i| format!("f{i}")).collect()).unwrap();
    for f in 0..n_feats {
        for y in 0..NUM_LABELS {
            m.emission_mut(f)[y] = rng.gen_range(-2.0..2.0);
        }
    }
    for a in 0..NUM_LABELS {
        for b in 0..NUM_LABELS {
            m.transition_mut()[a][b] = rng.gen_range(-2.0..2.0);
        }
    }
    m
}

fn random_features(rng: &mut ChaCha8Rng, len: usize, n_feats: usize) -> Vec<Vec<usize>> {
    (0..len)
        .map(|_| {
            let k = rng.gen_range(1..=3.min(n_feats));
            let mut fs: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n_feats)).collect();
            fs.sort_unstable();
            fs.dedup();
            fs
        })
        .collect()
}

/// Score of a label sequence straight from the weight tables.
fn oracle_score(m: &CrfModel, feats: &[Vec<usize>], labels: &[usize]) -> f64 {
    let mut s = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        s += feats[t].iter().map(|&f| m.emission(f)[y]).sum::<f64>();
        if t > 0 {
            s += m.transition()[labels[t - 1]][y];
        }
    }
    s
}

fn all_sequences(len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..NUM_LABELS).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

fn crf_math() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let n_feats = rng.gen_range(1..=6);
        let m = random_model(&mut rng, n_feats);
        let len = rng.gen_range(1..=6);
        let feats = random_features(&mut rng, len, n_feats);
        let scores: Vec<(Vec<usize>, f64)> = all_sequences(len)
            .into_iter()
            .map(|s| {
                let v = oracle_score(&m, &feats, &s);
                (s, v)
            })
            .collect();
        let (best, best_score) = scores
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .unwrap();
        let (path, path_score) = m.viterbi(&feats);
        let path: Vec<usize> = path.iter().map(|t| t.index()).collect();
        ensure(path == best && (path_score - best_score).abs() < 1e-9, || {
            format!("case {case}: viterbi {path:?} ({path_score}) vs brute {best:?} ({best_score})")
        })?;
        let max = best_score;
        let lse = max + scores.iter().map(|(_, v)| (v - max).exp()).sum::<f64>().ln();
        let z = m.log_partition(&feats);
        ensure((z - lse).abs() < 1e-9, || format!("case {case}: log Z {z} vs {lse}"))?;
    }

    let mut worst = 0.0f64;
    for case in 0..20 {
        let n_feats = rng.gen_range(1..=6);
        let mut m = random_model(&mut rng, n_feats);
        let instances: Vec<Instance> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let len = rng.gen_range(1..=6);
                Instance {
                    features: random_features(&mut rng, len, n_feats),
                    gold: (0..len).map(|_| BioTag::from_index(rng.gen_range(0..NUM_LABELS))).collect(),
                }
            })
            .collect();
        let l2 = rng.gen_range(0.0..0.5);
        let (_, analytic) = objective_and_gradient(&m, &instances, l2);
        let base = m.params();
        let h = 1e-5;
        let mut numeric = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            m.set_params(&p);
            let up = objective_and_gradient(&m, &instances, l2).0;
            p[i] = base[i] - h;
            m.set_params(&p);
            let down = objective_and_gradient(&m, &instances, l2).0;
            numeric[i] = (up - down) / (2.0 * h);
        }
        m.set_params(&base);
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().chain(&numeric).map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let rel = diff / norm;
        worst = worst.max(rel);
        ensure(rel <= 1e-4, || format!("gradient case {case}: relative error {rel:e}"))?;
    }
    Ok(format!("100 brute-force models, 20 gradient checks, worst rel err {worst:.1e}"))
}

fn crf_training() -> Check {
    let gold = read_bio_columns(fixture("crf/synthetic_cues.bio"), "en").map_err(err)?;
    let data: Vec<_> = gold.iter().map(|g| g.to_training()).collect();
    ensure(data.len() == 20, || format!("expected 20 sentences, got {}", data.len()))?;
    let extractor = FeatureExtractor::new(Arc::new(LexiconSet::bundled()));
    let config = TrainConfig {
        epochs: 50,
        seed: 7,
        ..TrainConfig::default()
    };
    let a = crf_train(&data, &["en"], &extractor, &config).map_err(err)?;
    let b = crf_train(&data, &["en"], &extractor, &config).map_err(err)?;
    ensure(a.params() == b.params(), || "two runs with one seed differ".into())?;
    let acc = token_accuracy(&a, &extractor, &data).map_err(err)?;
    ensure(acc >= 0.95, || format!("token accuracy {acc:.4} < 0.95"))?;
    Ok(format!("token accuracy {:.2}% after 50 epochs, identical reruns", acc * 100.0))
}

const EN_FILL: [&str; 6] = ["house", "car", "tree", "sun", "water", "stone"];
const NO_FILL: [&str; 6] = ["hus", "bil", "tre", "sol", "vann", "stein"];

fn sentence(rng: &mut ChaCha8Rng, fill: &[&str], len: usize, cue: Option<&str>) -> String {
    let fillers = if cue.is_some() { len - 1 } else { len };
    let mut words: Vec<&str> = (0..fillers).map(|_| fill[rng.gen_range(0..fill.len())]).collect();
    if let Some(c) = cue {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, c);
    }
    words.join(" ")
}

#[derive(Clone, Copy)]
enum Bt {
    Negated,
    Affirmative,
    Missing,
}

fn filtering_invariants() -> Check {
    let detector = Detector::bundled_rules();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut boundary_41, mut boundary_40) = (0, 0);
    for case in 0..1000 {
        let n = rng.gen_range(2..=8);
        let mut pairs = Vec::new();
        let mut bts: HashMap<String, Bt> = HashMap::new();
        for i in 0..n {
            let src_neg = rng.gen_bool(0.5);
            let mut tgt_neg = rng.gen_bool(0.5);
            // the first two records pin the 40/41 boundary
            let len = match i {
                0 => 41,
                1 => 40,
                _ => rng.gen_range(2..=45),
            };
            if i < 2 {
                tgt_neg = !src_neg;
            }
            let src_len = rng.gen_range(3..=12);
            let src = sentence(&mut rng, &EN_FILL, src_len, src_neg.then_some("not"));
            let tgt = sentence(&mut rng, &NO_FILL, len, tgt_neg.then_some("ikke"));
            let bt = match rng.gen_range(0..3) {
                0 => Bt::Negated,
                1 => Bt::Affirmative,
                _ => Bt::Missing,
            };
            bts.entry(tgt.clone()).or_insert(bt);
            pairs.push(SentencePair {
                id: format!("r:{i}"),
                source_lang: "en".into(),
                target_lang: "no".into(),
                source_text: src,
                target_text: tgt,
                corpus: "r".into(),
            });
        }
        let requests: Vec<(TranslationRequest, String)> = bts
            .iter()
            .filter_map(|(tgt, bt)| {
                let text = match bt {
                    Bt::Negated => "it did not happen",
                    Bt::Affirmative => "it happened",
                    Bt::Missing => return None,
                };
                Some((TranslationRequest::new(tgt, "no", "en").unwrap(), text.to_string()))
            })
            .collect();
        let backend = MockBackend::from_pairs(requests.iter().map(|(r, t)| (r, t.as_str())));
        let client = TranslationClient::new(
            Arc::new(backend),
            None,
            ClientConfig {
                requests_per_second: 0.0,
                max_retries: 0,
                backoff_ms: 0,
                ..ClientConfig::default()
            },
        )
        .map_err(err)?;

        // what every record should turn into
        let mut want: BTreeMap<DiscardReason, u64> = BTreeMap::new();
        let mut want_pairs = Vec::new();
        for p in &pairs {
            let s = p.source_text.split(' ').any(|w| w == "not");
            let t = p.target_text.split(' ').any(|w| w == "ikke");
            let len = p.target_text.split(' ').count();
            let reason = if s && t {
                Some(DiscardReason::BothNegated)
            } else if !s && !t {
                Some(DiscardReason::NeitherNegated)
            } else if len > 40 {
                Some(DiscardReason::TargetTooLong)
            } else {
                match bts[&p.target_text] {
                    Bt::Missing => Some(DiscardReason::TranslationFailed),
                    Bt::Negated if s => Some(DiscardReason::BacktranslationParity),
                    Bt::Affirmative if !s => Some(DiscardReason::BacktranslationParity),
                    Bt::Negated => {
                        want_pairs.push(("it did not happen".to_string(), p.source_text.clone()));
                        None
                    }
                    Bt::Affirmative => {
                        want_pairs.push((p.source_text.clone(), "it happened".to_string()));
                        None
                    }
                }
            };
            if let Some(r) = reason {
                *want.entry(r).or_default() += 1;
            }
        }

        let mut emitted = Vec::new();
        let options = PipelineOptions {
            chunk_size: rng.gen_range(1..=8),
            ..PipelineOptions::default()
        };
        let tally = run_pipeline(pairs.iter().cloned().map(Ok), &detector, &client, &options, |p| {
            emitted.push(p);
            Ok(())
        })
        .map_err(err)?;

        let t = tally.total();
        ensure(t.ingested() == t.emitted + t.discards.total() && tally.is_conserved(), || {
            format!("case {case}: conservation broken {t:?}")
        })?;
        ensure(t.ingested() == n as u64 && t.emitted == emitted.len() as u64, || {
            format!("case {case}: counts {t:?}")
        })?;
        for r in DiscardReason::ALL {
            let w = want.get(&r).copied().unwrap_or(0);
            ensure(t.discards.get(r) == w, || {
                format!("case {case}: {} = {} but expected {w}", r.as_str(), t.discards.get(r))
            })?;
        }
        let got: Vec<(String, String)> = emitted.iter().map(|p| (p.negated.clone(), p.affirmative.clone())).collect();
        ensure(got == want_pairs, || format!("case {case}: pairs {got:?} vs {want_pairs:?}"))?;
        for p in &emitted {
            let a = detector.has_negation(&p.negated, "en").map_err(err)?;
            let b = detector.has_negation(&p.affirmative, "en").map_err(err)?;
            ensure(a && !b, || format!("case {case}: {} is not exactly-one-negated", p.id))?;
        }
        // records 0 and 1 pass the negation filter by construction
        ensure(pairs[0].target_text.split(' ').count() == 41 && pairs[1].target_text.split(' ').count() == 40, || {
            format!("case {case}: boundary records mis-built")
        })?;
        ensure(!emitted.iter().any(|p| p.id == "r:0"), || format!("case {case}: 41-token target emitted"))?;
        boundary_41 += 1;
        if emitted.iter().any(|p| p.id == "r:1") {
            boundary_40 += 1;
        }
    }
    Ok(format!("1000 random corpora; 41-token targets dropped {boundary_41}x, 40-token targets emitted {boundary_40}x"))
}

fn blend_plan() -> Check {
    let p = make_plan(1, 3, 2, 0.5, 1000, 67_349, 1).map_err(err)?;
    ensure(p.per_epoch_aux_counts == [1000, 500, 250, 125, 0, 0], || {
        format!("documented example gave {:?}", p.per_epoch_aux_counts)
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for draw in 0..200 {
        let (m, n, k) = (rng.gen_range(0..5), rng.gen_range(0..15), rng.gen_range(0..5));
        let f: f64 = rng.gen_range(0.0..=1.0);
        let n_ours = rng.gen_range(0..200_000);
        let plan = make_plan(m, n, k, f, n_ours, 0, draw).map_err(err)?;
        let c = &plan.per_epoch_aux_counts;
        let oracle: Vec<usize> = std::iter::repeat_n(n_ours, m)
            .chain((1..=n).map(|i| (n_ours as f64 * f.powi(i as i32)).round() as usize))
            .chain(std::iter::repeat_n(0, k))
            .collect();
        ensure(*c == oracle, || format!("draw {draw}: {c:?} vs {oracle:?}"))?;
        ensure(c[m..m + n].windows(2).all(|w| w[1] <= w[0]), || {
            format!("draw {draw}: phase 2 increases {c:?}")
        })?;
        ensure(c[m + n..].iter().all(|&x| x == 0), || format!("draw {draw}: phase 3 non-zero"))?;
    }
    Ok("documented schedule exact, 200 random draws monotone".into())
}

/// Clipped n-gram matches, hypothesis total and reference total by naive
/// recounting.
fn grams<T>(s: &[T], n: usize) -> Vec<&[T]> {
    if s.len() < n {
        vec![]
    } else {
        (0..=s.len() - n).map(|i| &s[i..i + n]).collect()
    }
}

fn naive_clip<T: PartialEq>(h: &[T], r: &[T], n: usize) -> (usize, usize, usize) {
    let (hg, rg) = (grams(h, n), grams(r, n));
    let mut matched = 0;
    for (i, g) in hg.iter().enumerate() {
        if hg[..i].contains(g) {
            continue;
        }
        let ch = hg.iter().filter(|x| *x == g).count();
        let cr = rg.iter().filter(|x| *x == g).count();
        matched += ch.min(cr);
    }
    (matched, hg.len(), rg.len())
}

fn oracle_chrf(cands: &[String], refs: &[String]) -> f64 {
    let mut stats = [(0usize, 0usize, 0usize); 8];
    for (c, r) in cands.iter().zip(refs) {
        let hc: Vec<char> = c.chars().filter(|x| !x.is_whitespace()).collect();
        let rc: Vec<char> = r.chars().filter(|x| !x.is_whitespace()).collect();
        let (hw, rw) = (chrf_words(c), chrf_words(r));
        for n in 1..=8 {
            let (m, h, rr) = if n <= 6 { naive_clip(&hc, &rc, n) } else { naive_clip(&hw, &rw, n - 6) };
            stats[n - 1].0 += m;
            stats[n - 1].1 += h;
            stats[n - 1].2 += rr;
        }
    }
    let eff: Vec<_> = stats.iter().filter(|s| s.1 > 0 && s.2 > 0).collect();
    let p = eff.iter().map(|s| s.0 as f64 / s.1 as f64).sum::<f64>() / eff.len() as f64;
    let r = eff.iter().map(|s| s.0 as f64 / s.2 as f64).sum::<f64>() / eff.len() as f64;
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

fn metrics() -> Check {
    let read = |p: &str| -> Result<Vec<String>, String> {
        Ok(fs::read_to_string(fixture(p)).map_err(err)?.lines().map(String::from).collect())
    };
    let cands = read("metrics/candidates.txt")?;
    let refs = read("metrics/references.txt")?;
    for s in [&cands, &refs] {
        ensure(bleu2(s, s).map_err(err)?.value == 100.0, || "BLEU-2 of identical files != 100".into())?;
        let c = chrfpp(s, s).map_err(err)?.value;
        ensure((c - 100.0).abs() < 1e-9, || format!("chrF++ of identical files = {c}"))?;
    }
    // Tokens 29 vs 30, unigram matches 23/29, bigram matches 15/24.
    let hand_bleu = 100.0 * (1.0f64 - 30.0 / 29.0).exp() * (23.0 / 29.0 * 15.0 / 24.0f64).sqrt();
    let b = bleu2(&cands, &refs).map_err(err)?.value;
    ensure((b - hand_bleu).abs() < 1e-6, || format!("BLEU-2 {b} vs hand {hand_bleu}"))?;
    let oracle = oracle_chrf(&cands, &refs);
    // sacrebleu 2.6 CHRF(word_order=2) on the same files
    let reference = 63.56907715619716;
    let c = chrfpp(&cands, &refs).map_err(err)?.value;
    ensure((c - oracle).abs() < 1e-6 && (c - reference).abs() < 1e-6, || {
        format!("chrF++ {c} vs oracle {oracle} / reference {reference}")
    })?;
    Ok(format!("BLEU-2 {b:.4}, chrF++ {c:.4} on 5 examples"))
}

fn read_sentences() -> Result<Vec<(String, String)>, String> {
    Ok(fs::read_to_string(fixture("router/sentences.tsv"))
        .map_err(err)?
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect())
}

fn router_contract() -> Check {
    let detector = Detector::bundled_rules();
    let inputs = read_sentences()?;
    let lookup = LookupGenerator::load(fixture("router/lookup.jsonl")).map_err(err)?;
    let table: HashMap<String, String> = fs::read_to_string(fixture("router/lookup.jsonl"))
        .map_err(err)?
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["text"].as_str().unwrap().to_string(), v["interpretation"].as_str().unwrap().to_string())
        })
        .collect();
    let (routed, stats) = Router::new(&detector, &lookup).route(&inputs).map_err(err)?;
    ensure(routed.len() == inputs.len(), || "cardinality changed".into())?;
    for (ex, (id, text)) in routed.iter().zip(&inputs) {
        ensure(&ex.id == id && &ex.text == text, || format!("order changed at {id}"))?;
        let negated = detector.has_negation(text, "en").map_err(err)?;
        ensure(ex.has_negation == negated, || format!("{id}: has_negation mismatch"))?;
        if negated {
            let interp = &table[text];
            ensure(ex.combined == format!("{text} [SEP] {interp}"), || format!("{id}: combined {:?}", ex.combined))?;
            ensure(ex.interpretation.as_deref() == Some(interp.as_str()), || format!("{id}: interpretation"))?;
        } else {
            ensure(ex.combined == *text && ex.interpretation.is_none(), || format!("{id}: not passed through"))?;
        }
    }
    ensure(stats.fallbacks == 0, || "unexpected fallbacks".into())?;
    let sst1 = &routed[0].combined;
    ensure(sst1 == "It is not a bad film. [SEP] It is a good movie.", || sst1.clone())?;

    // generator outage: nothing listens on the port
    let port = std::net::TcpListener::bind("127.0.0.1:0").map_err(err)?.local_addr().map_err(err)?.port();
    let down = HttpGenerator::new(format!("http://127.0.0.1:{port}/generate"), Duration::from_millis(500)).map_err(err)?;
    let (routed, stats) = Router::new(&detector, &down).route(&inputs).map_err(err)?;
    ensure(routed.len() == inputs.len(), || "outage changed cardinality".into())?;
    ensure(stats.fallbacks == stats.negated && stats.negated == 4, || format!("outage stats {stats:?}"))?;
    ensure(
        routed.iter().all(|e| e.combined == e.text && e.interpretation.is_none()),
        || "outage fallback altered text".into(),
    )?;
    Ok(format!("{} inputs, {} negated; outage kept all with {} fallbacks", inputs.len(), stats.negated, stats.fallbacks))
}

fn full_run(dir: &Path, cfg: &Path, tag: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let cfg = cfg.to_str().unwrap();
    let out = dir.join(tag);
    let pairs = out.join("afin_pairs.jsonl");
    let nli = out.join("nli.tsv");
    let routed = out.join("routed.jsonl");
    affirm_bin(&["build-pairs", "--config", cfg, "--out", pairs.to_str().unwrap()], dir)?;
    affirm_bin(&["derive-nli", "--input", pairs.to_str().unwrap(), "--out", nli.to_str().unwrap()], dir)?;
    affirm_bin(
        &[
            "route",
            "--config",
            cfg,
            "--input",
            &fixture("router/sentences.tsv"),
            "--importance",
            &fixture("router/importance.tsv"),
            "--format",
            "jsonl",
            "--out",
            routed.to_str().unwrap(),
        ],
        dir,
    )?;
    [pairs, nli, routed]
        .iter()
        .map(|p| Ok((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).map_err(err)?)))
        .collect()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = write_fixture_config(dir.path(), &dir.path().join("cache"))?;
    full_run(dir.path(), &cfg, "warmup")?;
    let a = full_run(dir.path(), &cfg, "run-a")?;
    let b = full_run(dir.path(), &cfg, "run-b")?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure(x == y, || format!("{name} differs between runs"))?;
        ensure(!x.is_empty(), || format!("{name} is empty"))?;
    }
    let m: affirm::manifest::RunManifest = serde_json::from_str(
        &fs::read_to_string(dir.path().join("run-b/build-pairs.manifest.json")).map_err(err)?,
    )
    .map_err(err)?;
    ensure(m.counts["translation.fetched"] == 0, || "second run hit the backend for new translations".into())?;
    Ok(format!("{} outputs byte-identical across warm-cache runs", a.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("worked example end to end", 5, worked_example),
        ("nli cardinality", 10, cardinality),
        ("crf mathematics", 60, crf_math),
        ("crf training sanity", 30, crf_training),
        ("filtering invariants", 30, filtering_invariants),
        ("blend plan", 5, blend_plan),
        ("metrics", 5, metrics),
        ("router contract", 5, router_contract),
        ("determinism", 60, determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let result = result.and_then(|detail| {
            if secs < budget as f64 {
                Ok(detail)
            } else {
                Err(format!("took {secs:.2}s, budget {budget}s"))
            }
        });
        match result {
            Ok(detail) => println!("PASS  {name:<25} {secs:>7.3}s (budget {budget}s)  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<25} {secs:>7.3}s (budget {budget}s)  {why}");
            }
        }
    }
    println!(
        "N/A   published-scale numbers    corpus yields, generation scores, NLI accuracies and sentiment F1 need licensed corpora, a commercial MT service and model fine-tuning; not reproduced"
    );
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
