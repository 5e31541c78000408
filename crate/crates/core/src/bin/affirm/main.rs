//! `affirm` command line.
//!
//! Every successful run writes a run manifest (config hash, input and output
//! hashes, counts, wall time). Failures print a one-line JSON error report on
//! stderr and exit with 1, or 2 for usage and configuration errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use affirm::config::Diagnostic;
use affirm::manifest::{ErrorReport, RunRecorder};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "affirm", version, about = "Negated/affirmative sentence pairs from parallel corpora")]
struct Cli {
    /// Run manifest path. Defaults to `<output dir>/<command>.manifest.json`.
    #[arg(long, global = true)]
    run_manifest: Option<PathBuf>,

    /// error, warn, info, debug or trace. RUST_LOG takes precedence.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read the configured bitexts into sentence-pair JSONL.
    Ingest(IngestArgs),
    /// Tag negation cues in plain text, one sentence per line.
    Detect(DetectArgs),
    /// Score a detector against gold cue annotations.
    EvalCues(EvalCuesArgs),
    /// Train the sequence-labelling cue detector.
    TrainCrf(TrainCrfArgs),
    /// Filter ingested pairs and backtranslate their targets into the cache.
    Backtranslate(BacktranslateArgs),
    /// Run the full pipeline from bitexts to negated/affirmative pairs.
    BuildPairs(BuildPairsArgs),
    /// Per-corpus yield and negation-type report.
    Analyze(AnalyzeArgs),
    /// Turn pairs into entailment examples.
    DeriveNli(DeriveNliArgs),
    /// Per-epoch auxiliary counts for the blending curriculum.
    PlanBlend(PlanBlendArgs),
    /// Append interpretations to negated inputs of a downstream task.
    Route(RouteArgs),
    /// Corpus-level BLEU-2 and chrF++.
    ScoreGen(ScoreGenArgs),
    /// Check a config file and list every problem found.
    ValidateConfig(ValidateConfigArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Detect(_) => "detect",
            Command::EvalCues(_) => "eval-cues",
            Command::TrainCrf(_) => "train-crf",
            Command::Backtranslate(_) => "backtranslate",
            Command::BuildPairs(_) => "build-pairs",
            Command::Analyze(_) => "analyze",
            Command::DeriveNli(_) => "derive-nli",
            Command::PlanBlend(_) => "plan-blend",
            Command::Route(_) => "route",
            Command::ScoreGen(_) => "score-gen",
            Command::ValidateConfig(_) => "validate-config",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GoldFormat {
    Bio,
    Starsem,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AffixMode {
    Outside,
    WholeToken,
}

impl From<AffixMode> for affirm::cue::AffixTagging {
    fn from(m: AffixMode) -> Self {
        match m {
            AffixMode::Outside => affirm::cue::AffixTagging::Outside,
            AffixMode::WholeToken => affirm::cue::AffixTagging::WholeToken,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Jsonl,
}

impl From<Format> for affirm::nli::ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tsv => affirm::nli::ExportFormat::Tsv,
            Format::Jsonl => affirm::nli::ExportFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Decay {
    Geometric,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Generator {
    Lookup,
    Http,
    CueDeletion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Bleu2,
    Chrfpp,
    All,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `<output_dir>/sentence_pairs.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Plain text, one sentence per line; `-` reads stdin.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "en")]
    lang: String,
    /// Lexicons and detector settings come from here when given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use this trained model instead of the rule detector.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "outside")]
    affixes: AffixMode,
}

#[derive(Debug, Args)]
struct EvalCuesArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum, default_value = "bio")]
    format: GoldFormat,
    #[arg(long, default_value = "en")]
    lang: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "outside")]
    affixes: AffixMode,
    /// Also write the scores here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainCrfArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, value_enum, default_value = "bio")]
    format: GoldFormat,
    #[arg(long, default_value = "en")]
    lang: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, value_enum, default_value = "whole-token")]
    affixes: AffixMode,
}

#[derive(Debug, Args)]
struct BacktranslateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `<output_dir>/sentence_pairs.jsonl`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Defaults to `<output_dir>/translations.jsonl`. Failures go next to it
    /// in `translation_failures.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildPairsArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `<output_dir>/afin_pairs.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to `<output_dir>/tally.json`.
    #[arg(long)]
    tally: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Pair JSONL written by build-pairs.
    #[arg(long)]
    input: PathBuf,
    /// Pipeline tally; `tally.json` next to the input is used when present.
    #[arg(long)]
    tally: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DeriveNliArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlanBlendArgs {
    /// Supplies defaults for m, n, k, factor, decay and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long, value_enum)]
    decay: Option<Decay>,
    /// Auxiliary set size; taken from --aux-ids when omitted.
    #[arg(long)]
    n_ours: Option<usize>,
    #[arg(long, default_value_t = 0)]
    n_target: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// One auxiliary id per line; enables per-epoch manifests.
    #[arg(long)]
    aux_ids: Option<PathBuf>,
    /// Writes plan.json and, with --aux-ids, epochs.jsonl.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RouteArgs {
    /// `id<TAB>text` lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    generator: Option<Generator>,
    /// Lookup JSONL of `{"text", "interpretation"}` records.
    #[arg(long)]
    lookup: Option<PathBuf>,
    #[arg(long)]
    url: Option<String>,
    #[arg(long)]
    separator: Option<String>,
    #[arg(long)]
    lang: Option<String>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// `id<TAB>important|unimportant` lines.
    #[arg(long)]
    importance: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreGenArgs {
    /// One candidate per line.
    #[arg(long)]
    candidates: PathBuf,
    /// One reference per line, aligned with the candidates.
    #[arg(long)]
    references: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    metric: Metric,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

/// A failed command.
#[derive(Debug)]
pub enum CliError {
    Lib(affirm::Error),
    Config(Vec<Diagnostic>),
}

impl From<affirm::Error> for CliError {
    fn from(e: affirm::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn report(&self, command: &str) -> (ErrorReport, u8) {
        match self {
            CliError::Lib(e) => {
                let code = match e {
                    affirm::Error::InvalidArgument(_) => 2,
                    _ => 1,
                };
                (ErrorReport::from_error(command, e), code)
            }
            CliError::Config(diags) => (
                ErrorReport {
                    command: command.to_string(),
                    kind: "invalid_config".into(),
                    message: format!("{} problem(s) in config", diags.len()),
                    diagnostics: diags.clone(),
                },
                2,
            ),
        }
    }
}

fn emit_report(report: &ErrorReport) {
    eprintln!("{}", serde_json::to_string(report).expect("error report serializes"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                e.exit();
            }
            emit_report(&ErrorReport {
                command: std::env::args().nth(1).unwrap_or_default(),
                kind: "usage".into(),
                message: e.to_string().trim().to_string(),
                diagnostics: Vec::new(),
            });
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .format_timestamp(None)
        .init();

    let name = cli.command.name();
    let mut rec = RunRecorder::start(name);
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &mut rec),
        Command::Detect(a) => commands::detect(a, &mut rec),
        Command::EvalCues(a) => commands::eval_cues(a, &mut rec),
        Command::TrainCrf(a) => commands::train_crf(a, &mut rec),
        Command::Backtranslate(a) => commands::backtranslate(a, &mut rec),
        Command::BuildPairs(a) => commands::build_pairs(a, &mut rec),
        Command::Analyze(a) => commands::analyze(a, &mut rec),
        Command::DeriveNli(a) => commands::derive_nli(a, &mut rec),
        Command::PlanBlend(a) => commands::plan_blend(a, &mut rec),
        Command::Route(a) => commands::route(a, &mut rec),
        Command::ScoreGen(a) => commands::score_gen(a, &mut rec),
        Command::ValidateConfig(a) => commands::validate_config(a, &mut rec),
    };
    let written = result.and_then(|dir| {
        let path = cli
            .run_manifest
            .clone()
            .unwrap_or_else(|| dir.join(format!("{name}.manifest.json")));
        rec.finish().write(&path)?;
        log::info!("run manifest: {}", path.display());
        Ok(())
    });
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (report, code) = e.report(name);
            log::error!("{}", report.message);
            emit_report(&report);
            ExitCode::from(code)
        }
    }
}
