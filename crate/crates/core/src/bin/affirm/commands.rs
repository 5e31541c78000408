use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use affirm::blend::{emit_manifests, make_plan_with, DecayLaw};
use affirm::config::{CorpusFormat, DetectorKind, GeneratorKind, PipelineConfig, RouterConfig};
use affirm::corpus::{ingest_moses, ingest_tsv, read_jsonl_all, write_jsonl, write_jsonl_to, SentencePair};
use affirm::cue::conll::{read_bio_columns, read_starsem, GoldSentence, StarSemColumns};
use affirm::cue::train::token_accuracy;
use affirm::cue::{
    crf_train, evaluate_cues, CrfModel, Detector, FeatureExtractor, LexiconSet,
    TrainConfig,
};
use affirm::manifest::{sha256_hex, RunRecorder};
use affirm::metrics::{bleu2, chrfpp, MetricScore};
use affirm::nli::{self, export_nli};
use affirm::pipeline::{
    backtranslation_request, corpus_report, filter_either_negated, filter_length, run_pipeline, AfinPair,
    DiscardReason, PipelineOptions, PipelineTally,
};
use affirm::router::{export_routed, ImportanceAnnotations, Importance, Router};
use affirm::{Error, Result};

use crate::{
    AffixMode, AnalyzeArgs, BacktranslateArgs, BuildPairsArgs, CliError, Decay, DeriveNliArgs,
    DetectArgs, EvalCuesArgs, GoldFormat, Generator, IngestArgs, Metric, PlanBlendArgs, RouteArgs,
    ScoreGenArgs, TrainCrfArgs, ValidateConfigArgs,
};

/// Directory the run manifest goes to by default.
type CmdResult = std::result::Result<PathBuf, CliError>;

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir, e))
}

fn load_config(path: &Path, rec: &mut RunRecorder) -> std::result::Result<PipelineConfig, CliError> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    rec.config_hash(sha256_hex(&bytes));
    rec.input(path)?;
    let cfg = PipelineConfig::load(path).map_err(|e| {
        CliError::Config(vec![affirm::config::Diagnostic {
            field: String::new(),
            message: e.to_string(),
        }])
    })?;
    let diags = cfg.validate();
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }
    Ok(cfg)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader: Box<dyn BufRead> = if path == Path::new("-") {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
    };
    reader
        .lines()
        .map(|l| {
            l.map(|s| s.trim_end_matches('\r').to_string())
                .map_err(|e| Error::io(path, e))
        })
        .collect()
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize {
        id: "stdout".into(),
        source: e,
    })?;
    println!("{text}");
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize {
        id: path.display().to_string(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Streams fallible records to `out`, stopping at the first error.
fn copy_records<I, W>(records: I, out: W) -> Result<u64>
where
    I: Iterator<Item = Result<SentencePair>>,
    W: Write,
{
    let mut failure = None;
    let n = write_jsonl_to(
        records.map_while(|r| r.map_err(|e| failure = Some(e)).ok()),
        out,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(n as u64),
    }
}

pub fn ingest(a: &IngestArgs, rec: &mut RunRecorder) -> CmdResult {
    let cfg = load_config(&a.config, rec)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("sentence_pairs.jsonl"));
    create_parent(&out)?;
    let file = File::create(&out).map_err(|e| Error::io(&out, e))?;
    let mut w = BufWriter::new(file);
    let mut total = 0;
    for c in &cfg.corpora {
        for p in &c.paths {
            rec.input(p)?;
        }
        let [src, tgt] = &c.langs;
        let (n, diags) = match c.format {
            CorpusFormat::Moses => {
                let mut r = ingest_moses(&c.paths[0], &c.paths[1], src, tgt, &c.label)?;
                (copy_records(r.by_ref(), &mut w)?, r.diagnostics())
            }
            CorpusFormat::Tsv => {
                let mut r = ingest_tsv(&c.paths[0], src, tgt, &c.label)?;
                (copy_records(r.by_ref(), &mut w)?, r.diagnostics())
            }
        };
        log::info!("{}: {n} pairs, {} lines skipped", c.label, diags.skipped());
        rec.count(format!("{}.pairs", c.label), n);
        rec.count(format!("{}.skipped", c.label), diags.skipped());
        total += n;
    }
    w.flush().map_err(|e| Error::io(&out, e))?;
    drop(w);
    rec.count("pairs", total);
    rec.output(&out)?;
    Ok(parent_dir(&out))
}

fn build_detector(
    config: Option<&PathBuf>,
    model: Option<&PathBuf>,
    affixes: AffixMode,
    rec: &mut RunRecorder,
) -> std::result::Result<Detector, CliError> {
    let cfg = config.map(|p| load_config(p, rec)).transpose()?;
    let detector = match (&cfg, model) {
        (_, Some(m)) => {
            rec.input(m)?;
            let lexicons = match &cfg {
                Some(c) => c.lexicon_set()?,
                None => LexiconSet::bundled(),
            };
            Detector::crf(Arc::new(CrfModel::load(m)?), Arc::new(lexicons))
        }
        (Some(c), None) => {
            if c.detector.kind == DetectorKind::Crf {
                if let Some(m) = &c.detector.model {
                    rec.input(m)?;
                }
            }
            c.build_detector()?
        }
        (None, None) => Detector::bundled_rules(),
    };
    Ok(detector.with_affix_tagging(affixes.into()))
}

pub fn detect(a: &DetectArgs, rec: &mut RunRecorder) -> CmdResult {
    let detector = build_detector(a.config.as_ref(), a.model.as_ref(), a.affixes, rec)?;
    if a.input != Path::new("-") {
        rec.input(&a.input)?;
    }
    let tagged = read_lines(&a.input)?
        .iter()
        .map(|s| detector.detect(s, &a.lang))
        .collect::<Result<Vec<_>>>()?;
    let negated = tagged.iter().filter(|t| t.has_negation()).count();
    create_parent(&a.out)?;
    let n = write_jsonl(tagged, &a.out)?;
    log::info!("{n} sentences, {negated} with negation ({})", detector.name());
    rec.count("sentences", n as u64);
    rec.count("negated", negated as u64);
    rec.output(&a.out)?;
    Ok(parent_dir(&a.out))
}

fn read_gold(path: &Path, format: GoldFormat, lang: &str, affixes: AffixMode) -> Result<Vec<GoldSentence>> {
    match format {
        GoldFormat::Bio => read_bio_columns(path, lang),
        GoldFormat::Starsem => read_starsem(path, lang, StarSemColumns::default(), affixes.into()),
    }
}

pub fn eval_cues(a: &EvalCuesArgs, rec: &mut RunRecorder) -> CmdResult {
    let detector = build_detector(a.config.as_ref(), a.model.as_ref(), a.affixes, rec)?;
    rec.input(&a.gold)?;
    let gold = read_gold(&a.gold, a.format, &a.lang, a.affixes)?;
    let pred = gold
        .iter()
        .map(|g| detector.detect_pretokenized(&g.tokens, &a.lang))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<_> = gold.iter().map(GoldSentence::to_tagged).collect();
    let scores = evaluate_cues(&pred, &gold)?;
    print_json(&scores)?;
    rec.count("sentences", gold.len() as u64);
    rec.count("true_positives", scores.true_positives as u64);
    rec.count("false_positives", scores.false_positives as u64);
    rec.count("false_negatives", scores.false_negatives as u64);
    rec.metric("precision", scores.precision);
    rec.metric("recall", scores.recall);
    rec.metric("f1", scores.f1);
    match &a.out {
        Some(out) => {
            write_json(&scores, out)?;
            rec.output(out)?;
            Ok(parent_dir(out))
        }
        None => Ok(PathBuf::from(".")),
    }
}

pub fn train_crf(a: &TrainCrfArgs, rec: &mut RunRecorder) -> CmdResult {
    let lexicons = match &a.config {
        Some(p) => load_config(p, rec)?.lexicon_set()?,
        None => LexiconSet::bundled(),
    };
    rec.input(&a.train)?;
    let dataset: Vec<_> = read_gold(&a.train, a.format, &a.lang, a.affixes)?
        .iter()
        .map(GoldSentence::to_training)
        .collect();
    let extractor = FeatureExtractor::new(Arc::new(lexicons));
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        l2: a.l2,
        seed: a.seed,
        batch_size: a.batch_size,
        ..TrainConfig::default()
    };
    let model = crf_train(&dataset, &[a.lang.as_str()], &extractor, &config)?;
    let accuracy = token_accuracy(&model, &extractor, &dataset)?;
    create_parent(&a.out)?;
    model.save(&a.out)?;
    log::info!("trained on {} sentences, token accuracy {accuracy:.4}", dataset.len());
    print_json(&serde_json::json!({
        "model": a.out,
        "sentences": dataset.len(),
        "features": model.num_features(),
        "token_accuracy": accuracy,
        "final_objective": model.training_meta.final_objective,
    }))?;
    rec.count("sentences", dataset.len() as u64);
    rec.count("tokens", dataset.iter().map(|s| s.tokens.len() as u64).sum());
    rec.count("features", model.num_features() as u64);
    rec.count("epochs", a.epochs as u64);
    rec.metric("token_accuracy", accuracy);
    rec.metric("final_objective", model.training_meta.final_objective);
    rec.output(&a.out)?;
    Ok(parent_dir(&a.out))
}

fn record_client_stats(rec: &mut RunRecorder, stats: affirm::mt::ClientStats) {
    rec.count("translation.requests", stats.requests as u64);
    rec.count("translation.cache_hits", stats.cache_hits as u64);
    rec.count("translation.backend_calls", stats.backend_calls as u64);
    rec.count("translation.retries", stats.retries as u64);
    rec.count("translation.fetched", stats.fetched as u64);
    rec.count("translation.permanent_failures", stats.permanent_failures as u64);
    rec.count("translation.transient_failures", stats.transient_failures as u64);
}

pub fn backtranslate(a: &BacktranslateArgs, rec: &mut RunRecorder) -> CmdResult {
    let cfg = load_config(&a.config, rec)?;
    let input = a
        .input
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("sentence_pairs.jsonl"));
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("translations.jsonl"));
    let failures_path = parent_dir(&out).join("translation_failures.jsonl");
    rec.input(&input)?;
    let pairs: Vec<SentencePair> = read_jsonl_all(&input)?;
    let ingested = pairs.len();
    let detector = cfg.build_detector()?;
    let client = cfg.build_client()?;
    let mut tally = PipelineTally::default();
    let kept = filter_either_negated(pairs, &detector, &mut tally)?;
    let kept = filter_length(kept, cfg.max_target_tokens, &mut tally);
    let requests = kept
        .iter()
        .map(backtranslation_request)
        .collect::<Result<Vec<_>>>()?;
    let outcomes = client.translate_batch(&requests)?;
    let (ok, failed): (Vec<_>, Vec<_>) = outcomes.into_iter().partition(|o| o.is_ok());
    let ok: Vec<_> = ok.into_iter().flatten().collect();
    let failed: Vec<_> = failed.into_iter().filter_map(|o| o.err()).collect();
    create_parent(&out)?;
    write_jsonl(ok.iter().cloned(), &out)?;
    write_jsonl(failed.iter().cloned(), &failures_path)?;
    log::info!(
        "{ingested} pairs read, {} sent for backtranslation, {} translated, {} failed",
        requests.len(),
        ok.len(),
        failed.len()
    );
    rec.count("pairs", ingested as u64);
    rec.count("requests", requests.len() as u64);
    rec.count("translated", ok.len() as u64);
    rec.count("failed", failed.len() as u64);
    record_client_stats(rec, client.stats());
    rec.output(&out)?;
    rec.output(&failures_path)?;
    Ok(parent_dir(&out))
}

pub fn build_pairs(a: &BuildPairsArgs, rec: &mut RunRecorder) -> CmdResult {
    let cfg = load_config(&a.config, rec)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join("afin_pairs.jsonl"));
    let tally_path = a
        .tally
        .clone()
        .unwrap_or_else(|| parent_dir(&out).join("tally.json"));
    for c in &cfg.corpora {
        for p in &c.paths {
            rec.input(p)?;
        }
    }
    let detector = cfg.build_detector()?;
    let client = cfg.build_client()?;
    let options = PipelineOptions {
        max_target_tokens: cfg.max_target_tokens,
        ..PipelineOptions::default()
    };
    create_parent(&out)?;
    let file = File::create(&out).map_err(|e| Error::io(&out, e))?;
    let mut w = BufWriter::new(file);
    let tally = run_pipeline(cfg.read_corpora()?, &detector, &client, &options, |pair: AfinPair| {
        serde_json::to_writer(&mut w, &pair).map_err(|e| Error::Serialize {
            id: pair.id.clone(),
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(&out, e))
    })?;
    w.flush().map_err(|e| Error::io(&out, e))?;
    drop(w);
    if !tally.is_conserved() {
        return Err(Error::Invariant("pipeline tally does not add up".into()).into());
    }
    write_json(&tally, &tally_path)?;

    let all = tally.total();
    for (name, t) in &tally.corpora {
        log::info!("{name}: {} ingested, {} pairs", t.ingested(), t.emitted);
        rec.count(format!("{name}.ingested"), t.ingested());
        rec.count(format!("{name}.emitted"), t.emitted);
    }
    rec.count("ingested", all.ingested());
    rec.count("emitted", all.emitted);
    for r in DiscardReason::ALL {
        rec.count(format!("discarded.{}", r.as_str()), all.discards.get(r));
    }
    record_client_stats(rec, client.stats());
    rec.output(&out)?;
    rec.output(&tally_path)?;
    Ok(parent_dir(&out))
}

pub fn analyze(a: &AnalyzeArgs, rec: &mut RunRecorder) -> CmdResult {
    rec.input(&a.input)?;
    let pairs: Vec<AfinPair> = read_jsonl_all(&a.input)?;
    let tally_path = a.tally.clone().or_else(|| {
        let p = parent_dir(&a.input).join("tally.json");
        p.is_file().then_some(p)
    });
    let ingested = match &tally_path {
        Some(p) => {
            rec.input(p)?;
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let tally: PipelineTally = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: p.clone(),
                line: e.line(),
                source: e,
            })?;
            tally.ingested()
        }
        None => {
            log::warn!("no tally given; yields are reported against 0 ingested pairs");
            BTreeMap::new()
        }
    };
    let report = corpus_report(&pairs, &ingested);
    print!("{}", report.render_table());
    rec.count("pairs", pairs.len() as u64);
    rec.count("corpora", report.rows.len() as u64);
    match &a.out {
        Some(out) => {
            write_json(&report, out)?;
            rec.output(out)?;
            Ok(parent_dir(out))
        }
        None => Ok(parent_dir(&a.input)),
    }
}

pub fn derive_nli(a: &DeriveNliArgs, rec: &mut RunRecorder) -> CmdResult {
    rec.input(&a.input)?;
    let pairs: Vec<AfinPair> = read_jsonl_all(&a.input)?;
    create_parent(&a.out)?;
    let n = export_nli(nli::derive_nli(&pairs), a.format.into(), &a.out)?;
    log::info!("{} pairs, {n} entailment examples", pairs.len());
    rec.count("pairs", pairs.len() as u64);
    rec.count("examples", n as u64);
    rec.output(&a.out)?;
    Ok(parent_dir(&a.out))
}

pub fn plan_blend(a: &PlanBlendArgs, rec: &mut RunRecorder) -> CmdResult {
    let (defaults, config_seed) = match &a.config {
        Some(p) => {
            let cfg = load_config(p, rec)?;
            (cfg.blend, cfg.seed)
        }
        None => (Default::default(), 0),
    };
    let ids = match &a.aux_ids {
        Some(p) => {
            rec.input(p)?;
            let ids: Vec<String> = read_lines(p)?
                .into_iter()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            Some(ids)
        }
        None => None,
    };
    let n_ours = a
        .n_ours
        .or(ids.as_ref().map(Vec::len))
        .ok_or_else(|| Error::invalid("give --n-ours or --aux-ids"))?;
    let decay = match a.decay {
        Some(Decay::Geometric) => DecayLaw::Geometric,
        Some(Decay::Linear) => DecayLaw::Linear,
        None => defaults.decay,
    };
    let plan = make_plan_with(
        a.m.unwrap_or(defaults.m),
        a.n.unwrap_or(defaults.n),
        a.k.unwrap_or(defaults.k),
        a.factor.unwrap_or(defaults.factor),
        decay,
        n_ours,
        a.n_target,
        a.seed.unwrap_or(config_seed),
    )?;
    plan.check_invariants()?;
    print!("{}", plan.render_table());
    let manifests = ids.as_ref().map(|ids| emit_manifests(&plan, ids)).transpose()?;
    rec.count("epochs", plan.epochs() as u64);
    rec.count("aux_total", plan.per_epoch_aux_counts.iter().map(|&c| c as u64).sum());
    match &a.out_dir {
        Some(dir) => {
            let plan_path = dir.join("plan.json");
            write_json(&plan, &plan_path)?;
            rec.output(&plan_path)?;
            if let Some(m) = manifests {
                let p = dir.join("epochs.jsonl");
                write_jsonl(m, &p)?;
                rec.output(&p)?;
            }
            Ok(dir.clone())
        }
        None => Ok(PathBuf::from(".")),
    }
}

/// `id<TAB>text` lines; blank lines are skipped.
fn read_id_text(path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| Error::Format {
            location: format!("{}:{}", path.display(), n + 1),
            reason: "expected id<TAB>text".into(),
        })?;
        out.push((id.to_string(), text.to_string()));
    }
    Ok(out)
}

pub fn route(a: &RouteArgs, rec: &mut RunRecorder) -> CmdResult {
    let cfg = a.config.as_ref().map(|p| load_config(p, rec)).transpose()?;
    let detector = match &cfg {
        Some(c) => c.build_detector()?,
        None => Detector::bundled_rules(),
    };
    let mut rc: RouterConfig = cfg.as_ref().map(|c| c.router.clone()).unwrap_or_default();
    if let Some(g) = a.generator {
        rc.generator = match g {
            Generator::Lookup => GeneratorKind::Lookup,
            Generator::Http => GeneratorKind::Http,
            Generator::CueDeletion => GeneratorKind::CueDeletion,
        };
    }
    rc.lookup = a.lookup.clone().or(rc.lookup);
    rc.url = a.url.clone().or(rc.url);
    rc.separator = a.separator.clone().unwrap_or(rc.separator);
    rc.lang = a.lang.clone().unwrap_or(rc.lang);
    rc.max_in_flight = a.max_in_flight.unwrap_or(rc.max_in_flight);
    if rc.generator == GeneratorKind::Lookup {
        if let Some(p) = &rc.lookup {
            rec.input(p)?;
        }
    }
    let generator = rc.build_generator()?;

    rec.input(&a.input)?;
    let inputs = read_id_text(&a.input)?;
    let router = Router::new(&detector, generator.as_ref())
        .separator(rc.separator.clone())
        .lang(rc.lang.clone())
        .max_in_flight(rc.max_in_flight);
    let (mut examples, stats) = router.route(&inputs)?;

    if let Some(p) = &a.importance {
        rec.input(p)?;
        let ann = ImportanceAnnotations::load(p)?;
        for ex in &mut examples {
            ex.importance = ann.labels.get(&ex.id).copied();
        }
        let count = |want: Option<Importance>| examples.iter().filter(|e| e.importance == want).count() as u64;
        rec.count("important", count(Some(Importance::Important)));
        rec.count("unimportant", count(Some(Importance::Unimportant)));
        rec.count("unannotated", count(None));
        rec.count("importance_conflicts", ann.conflicts as u64);
    }
    create_parent(&a.out)?;
    export_routed(examples, a.format.into(), &a.out)?;
    log::info!(
        "{} inputs, {} negated, {} fallbacks ({})",
        stats.total,
        stats.negated,
        stats.fallbacks,
        generator.label()
    );
    rec.count("total", stats.total as u64);
    rec.count("negated", stats.negated as u64);
    rec.count("fallbacks", stats.fallbacks as u64);
    rec.count("negated_interpretations", stats.negated_interpretations as u64);
    rec.output(&a.out)?;
    Ok(parent_dir(&a.out))
}

pub fn score_gen(a: &ScoreGenArgs, rec: &mut RunRecorder) -> CmdResult {
    rec.input(&a.candidates)?;
    rec.input(&a.references)?;
    let cands = read_lines(&a.candidates)?;
    let refs = read_lines(&a.references)?;
    let mut scores: Vec<MetricScore> = Vec::new();
    if matches!(a.metric, Metric::Bleu2 | Metric::All) {
        scores.push(bleu2(&cands, &refs)?);
    }
    if matches!(a.metric, Metric::Chrfpp | Metric::All) {
        scores.push(chrfpp(&cands, &refs)?);
    }
    print_json(&scores)?;
    rec.count("examples", cands.len() as u64);
    for s in &scores {
        rec.metric(serde_json::to_value(s.name).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(), s.value);
    }
    match &a.out {
        Some(out) => {
            write_json(&scores, out)?;
            rec.output(out)?;
            Ok(parent_dir(out))
        }
        None => Ok(PathBuf::from(".")),
    }
}

pub fn validate_config(a: &ValidateConfigArgs, rec: &mut RunRecorder) -> CmdResult {
    let cfg = load_config(&a.config, rec)?;
    print_json(&serde_json::json!({ "valid": true, "corpora": cfg.corpora.len() }))?;
    rec.count("corpora", cfg.corpora.len() as u64);
    rec.count("diagnostics", 0);
    Ok(PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parent_of_bare_file() {
        assert_eq!(parent_dir(Path::new("x.json")), PathBuf::from("."));
        assert_eq!(parent_dir(Path::new("a/x.json")), PathBuf::from("a"));
    }

    #[test]
    fn id_text_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        fs::write(&p, "a\tIt is not bad.\n\nb\tFine.\r\n").unwrap();
        let rows = read_id_text(&p).unwrap();
        assert_eq!(rows, [("a".into(), "It is not bad.".into()), ("b".into(), "Fine.".into())]);
        fs::write(&p, "no tab here\n").unwrap();
        assert!(matches!(read_id_text(&p), Err(Error::Format { .. })));
    }
}
