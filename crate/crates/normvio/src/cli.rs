//! The `normvio` command line.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tracing::{info, warn};

use normvio_core::corpus::{
    build_corpus, corpus_stats, parse_dump_shards, read_rules, rehydrate, serialize_release, split_dataset,
    write_rules, BuildConfig, BuildReport, CommentStore, CorpusError, DataSplit, Dataset, DatasetEntry,
    FileArchive, Release, RuleBook, SplitFractions,
};
use normvio_core::detector::{predict_split, train_detector, CommunityPrefix, DetectorConfig, DetectorError, DetectorVariant};
use normvio_core::evalkit::{
    aggregate_confusion, baseline_incivil_hate, baseline_majority, build_report, read_predictions, type_confusion,
    write_predictions, EvalError, EvalReport, PredictionRecord,
};
use normvio_core::explainer::{
    build_augmented_eval, build_training_pairs, read_pairs, train_explainer, write_pairs, ExplainerConfig,
    ExplainerError, ExplainerModel, ExplainerVariant, PairConfig, PairCounters,
};
use normvio_core::nn::TrainConfig;
use normvio_core::synth::{generate, SyntheticConfig};
use normvio_core::taxonomy::{
    builtin_catalog, crossval_rule_classifier, map_rules, read_annotated, AnnotatedRule, AnnotationError,
    CoarseRuleType, FineRuleType, RuleClassifierConfig, RuleTypeModel, TaxonomyError,
};
use normvio_service::{payload_digest, to_conversation, ConfigError, ScoreRequest, ServiceConfig, ServiceError};

use crate::config::{PipelineConfig, PipelineConfigError};
use crate::manifest::{RunRecorder, MANIFEST_NAME};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CORPUS_META_FILE: &str = "corpus.json";
pub const RULES_FILE: &str = "rules.jsonl";
pub const RELEASE_FILE: &str = "release.jsonl";
pub const ANONYMIZATION_FILE: &str = "anonymization.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const AUGMENTED_PREDICTIONS_FILE: &str = "augmented-predictions.jsonl";
pub const PAIRS_META_FILE: &str = "pairs.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.txt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] PipelineConfigError),
    #[error(transparent)]
    ServiceConfig(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Explainer(#[from] ExplainerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "normvio", version, about = "Community-norm violation corpus, models and triage service")]
pub struct Cli {
    /// Pipeline config (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dump, rules file and archive.
    GenSynthetic(GenSynthetic),
    /// Build the moderated/control dataset and its id-only release.
    BuildCorpus(BuildCorpus),
    /// Rebuild full conversations from a release and a comment dump.
    Rehydrate(Rehydrate),
    /// Train the 21 rule-type classifiers.
    TrainTaxonomy(TrainTaxonomy),
    /// Label a rules file with predicted rule types.
    MapRules(MapRules),
    /// Train per-type violation detectors and score the test split.
    TrainDetector(TrainDetector),
    /// Build (conversation, rule) pairs for the explainer.
    BuildPairs(BuildPairs),
    /// Train the rule-conditioned explainer and score the test pairs.
    TrainExplainer(TrainExplainer),
    /// Rank a community's rules for one conversation.
    Explain(Explain),
    /// Summarize prediction files into a report.
    Evaluate(Evaluate),
    /// Corpus statistics and per-type confusion.
    Analyze(Analyze),
    /// Run the triage HTTP service.
    Serve(Serve),
}

#[derive(Debug, Args)]
pub struct GenSynthetic {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator settings (TOML); flags below override it.
    #[arg(long)]
    pub synthetic_config: Option<PathBuf>,
    #[arg(long)]
    pub subreddits: Option<usize>,
    #[arg(long)]
    pub posts_per_subreddit: Option<usize>,
    #[arg(long)]
    pub comments_per_post: Option<usize>,
    #[arg(long)]
    pub malformed_lines: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildCorpus {
    /// Dump shards; repeatable.
    #[arg(long = "dump")]
    pub dumps: Vec<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Rehydrate {
    #[arg(long)]
    pub release: PathBuf,
    #[arg(long = "dump")]
    pub dumps: Vec<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainTaxonomy {
    /// Annotated rules; the bundled catalog when absent.
    #[arg(long)]
    pub annotated: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Also run stratified k-fold cross-validation per fine type.
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MapRules {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainDetector {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Coarse types; repeatable.
    #[arg(long = "type")]
    pub types: Vec<CoarseRuleType>,
    /// comment, history, community or history-community; repeatable.
    #[arg(long = "variant")]
    pub variants: Vec<DetectorVariant>,
    /// Training seeds; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Put the community token on every utterance instead of the final one.
    #[arg(long)]
    pub community_every_utterance: bool,
}

#[derive(Debug, Args)]
pub struct BuildPairs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub mismatched_per_conversation: usize,
}

#[derive(Debug, Args)]
pub struct TrainExplainer {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// rule, rule-history or rule-history-community; repeatable.
    #[arg(long = "variant")]
    pub variants: Vec<ExplainerVariant>,
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Explain {
    /// Explainer model directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// JSON object `{subreddit, conversation: [{author, body, created_utc}]}`.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the ranking here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Evaluate {
    /// Prediction files; repeatable.
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
    #[arg(long, default_value = "evaluation")]
    pub name: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also run the majority and incivility/hate-speech baselines on this corpus.
    #[arg(long)]
    pub baselines: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Analyze {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Serve {
    /// Service config (TOML).
    #[arg(long)]
    pub service_config: PathBuf,
    #[arg(long)]
    pub listen: Option<String>,
}

/// Build summary stored next to the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub report: BuildReport,
    pub dump_lines: usize,
    pub malformed_lines: usize,
    pub moderators: BTreeSet<String>,
    pub split: DataSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairsMeta {
    pub seed: u64,
    pub split_seed: u64,
    pub counters: PairCounters,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub augmented: usize,
}

/// Parses `argv` (program name first), runs the command and maps the
/// outcome to an exit status: 0 on success, 1 on a failed run, 2 on a
/// usage error.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    cfg.validate()?;
    match cli.command {
        Command::GenSynthetic(a) => gen_synthetic(&cfg, a, argv),
        Command::BuildCorpus(a) => build_corpus_cmd(&cfg, a, argv),
        Command::Rehydrate(a) => rehydrate_cmd(&cfg, a, argv),
        Command::TrainTaxonomy(a) => train_taxonomy(&cfg, a, argv),
        Command::MapRules(a) => map_rules_cmd(&cfg, a, argv),
        Command::TrainDetector(a) => train_detector_cmd(&cfg, a, argv),
        Command::BuildPairs(a) => build_pairs_cmd(&cfg, a, argv),
        Command::TrainExplainer(a) => train_explainer_cmd(&cfg, a, argv),
        Command::Explain(a) => explain_cmd(&cfg, a, argv),
        Command::Evaluate(a) => evaluate_cmd(&cfg, a, argv),
        Command::Analyze(a) => analyze_cmd(&cfg, a, argv),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path)(e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Record {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn settings<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("settings serialize")
}

fn required(path: Option<PathBuf>, flag: &str, key: &str) -> Result<PathBuf> {
    path.ok_or_else(|| CliError::Usage(format!("no {flag} given and `{key}` is not set in the config")))
}

fn load_rules(path: &Path) -> Result<RuleBook> {
    Ok(read_rules(open(path)?)?)
}

fn load_store(dumps: &[PathBuf]) -> Result<(CommentStore, usize, usize)> {
    if dumps.is_empty() {
        return Err(CliError::Usage(
            "no --dump given and `paths.dumps` is empty in the config".into(),
        ));
    }
    let parsed = parse_dump_shards(dumps)?;
    let (lines, malformed) = (parsed.lines, parsed.malformed);
    Ok((CommentStore::from_comments(parsed.comments)?, lines, malformed))
}

/// Reads a corpus directory written by `build-corpus`.
pub fn load_corpus(dir: &Path) -> Result<(Dataset, CorpusMeta)> {
    let meta: CorpusMeta = read_json(&dir.join(CORPUS_META_FILE))?;
    let entries: Vec<DatasetEntry> = read_jsonl(&dir.join(DATASET_FILE))?;
    let dataset = Dataset {
        entries,
        moderators: meta.moderators.clone(),
    };
    Ok((dataset, meta))
}

fn gen_synthetic(cfg: &PipelineConfig, a: GenSynthetic, argv: &[String]) -> Result<()> {
    let mut synth = match &a.synthetic_config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => SyntheticConfig::default(),
    };
    synth.seed = a.seed.unwrap_or(cfg.seeds.data);
    if let Some(v) = a.subreddits {
        synth.subreddits = v;
    }
    if let Some(v) = a.posts_per_subreddit {
        synth.posts_per_subreddit = v;
    }
    if let Some(v) = a.comments_per_post {
        synth.comments_per_post = v;
    }
    if let Some(v) = a.malformed_lines {
        synth.malformed_lines = v;
    }
    let out = a.out.unwrap_or_else(|| cfg.paths.synthetic.clone());
    make_dir(&out)?;
    let corpus = generate(&synth);
    let mut rec = RunRecorder::new("gen-synthetic", argv, settings(&synth));
    let files = [
        ("dump.jsonl", 0),
        ("rules.jsonl", 1),
        ("archive.jsonl", 2),
        ("truth.json", 3),
    ];
    for (name, which) in files {
        let path = out.join(name);
        let mut w = create(&path)?;
        match which {
            0 => corpus.write_dump(&mut w)?,
            1 => corpus.write_rules(&mut w)?,
            2 => corpus.write_archive(&mut w)?,
            _ => corpus.write_truth(&mut w)?,
        }
        w.flush().map_err(io_err(&path))?;
        rec.output(path);
    }
    rec.summary(json!({
        "subreddits": corpus.subreddits.len(),
        "comments": corpus.truth.emitted_comments,
        "events": corpus.truth.events.len(),
        "malformed_lines": corpus.truth.malformed_lines,
    }));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    info!(out = %out.display(), events = corpus.truth.events.len(), "synthetic corpus written");
    Ok(())
}

fn build_corpus_cmd(cfg: &PipelineConfig, a: BuildCorpus, argv: &[String]) -> Result<()> {
    let dumps = if a.dumps.is_empty() { cfg.paths.dumps.clone() } else { a.dumps };
    let rules_path = required(a.rules.or_else(|| cfg.paths.rules.clone()), "--rules", "paths.rules")?;
    let archive_path = a.archive.or_else(|| cfg.paths.archive.clone());
    let out = a.out.unwrap_or_else(|| cfg.paths.corpus.clone());
    let split_seed = a.split_seed.unwrap_or(cfg.seeds.split);

    let rules = load_rules(&rules_path)?;
    let (mut store, dump_lines, malformed_lines) = load_store(&dumps)?;
    let archive = archive_path.as_deref().map(FileArchive::open).transpose()?;
    let build_cfg = BuildConfig::default();
    let built = build_corpus(
        &mut store,
        &rules,
        archive.as_ref().map(|a| a as &dyn normvio_core::corpus::ArchiveClient),
        &build_cfg,
    )?;
    let split = split_dataset(&built.dataset, SplitFractions::default(), split_seed);
    let release = serialize_release(&built.dataset)?;

    make_dir(&out)?;
    let mut rec = RunRecorder::new(
        "build-corpus",
        argv,
        json!({"dumps": dumps, "rules": rules_path, "archive": archive_path, "split_seed": split_seed, "build": build_cfg}),
    );
    for d in &dumps {
        rec.input(d);
    }
    rec.input(&rules_path);
    if let Some(p) = &archive_path {
        rec.input(p);
    }
    let dataset_path = out.join(DATASET_FILE);
    write_jsonl(&dataset_path, &built.dataset.entries)?;
    let meta = CorpusMeta {
        report: built.report.clone(),
        dump_lines,
        malformed_lines,
        moderators: built.dataset.moderators.clone(),
        split,
    };
    let meta_path = out.join(CORPUS_META_FILE);
    write_json(&meta_path, &meta)?;
    let release_path = out.join(RELEASE_FILE);
    let mut w = create(&release_path)?;
    release.write_records(&mut w)?;
    w.flush().map_err(io_err(&release_path))?;
    let anon_path = out.join(ANONYMIZATION_FILE);
    release.anonymization.write_to(create(&anon_path)?)?;
    let rules_out = out.join(RULES_FILE);
    let mut w = create(&rules_out)?;
    write_rules(&rules, &mut w)?;
    w.flush().map_err(io_err(&rules_out))?;
    for p in [dataset_path, meta_path, release_path, anon_path, rules_out] {
        rec.output(p);
    }
    rec.summary(settings(&built.report));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    info!(
        conversations = built.dataset.len(),
        moderated = built.report.moderated_conversations,
        "corpus built"
    );
    Ok(())
}

fn rehydrate_cmd(cfg: &PipelineConfig, a: Rehydrate, argv: &[String]) -> Result<()> {
    let dumps = if a.dumps.is_empty() { cfg.paths.dumps.clone() } else { a.dumps };
    let rules_path = required(a.rules.or_else(|| cfg.paths.rules.clone()), "--rules", "paths.rules")?;
    let archive_path = a.archive.or_else(|| cfg.paths.archive.clone());
    let rules = load_rules(&rules_path)?;
    let (mut store, _, _) = load_store(&dumps)?;
    let records = Release::read_records(open(&a.release)?)?;
    if let Some(p) = &archive_path {
        // as in the build, only the removed comments the dataset was built on
        let wanted: BTreeSet<&str> = records
            .iter()
            .filter(|r| r.moderated && !r.forecast_only)
            .filter_map(|r| r.conversation.last().map(String::as_str))
            .collect();
        for line in read_jsonl::<ArchiveLine>(p)? {
            if wanted.contains(line.id.as_str()) && store.get(&line.id).is_some_and(|c| c.body.is_none()) {
                store.restore_body(&line.id, line.body)?;
            }
        }
    }
    let dataset = rehydrate(&records, &store, &rules)?;
    write_jsonl(&a.out, &dataset.entries)?;

    let mut rec = RunRecorder::new(
        "rehydrate",
        argv,
        json!({"release": a.release, "dumps": dumps, "rules": rules_path, "archive": archive_path}),
    );
    rec.input(&a.release);
    for d in &dumps {
        rec.input(d);
    }
    rec.output(&a.out);
    rec.summary(json!({"conversations": dataset.len()}));
    rec.finish(&sidecar(&a.out)).map_err(io_err(&a.out))?;
    Ok(())
}

#[derive(Deserialize)]
struct ArchiveLine {
    id: String,
    body: String,
}

/// `<file>.run-manifest.json` next to a single-file output.
fn sidecar(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(MANIFEST_NAME);
    file.with_file_name(name)
}

fn taxonomy_config(cfg: &PipelineConfig, threshold: f64) -> Result<RuleClassifierConfig> {
    Ok(RuleClassifierConfig {
        model: cfg.model_config()?,
        threshold,
        ..RuleClassifierConfig::default()
    })
}

fn train_taxonomy(cfg: &PipelineConfig, a: TrainTaxonomy, argv: &[String]) -> Result<()> {
    let annotated_path = a.annotated.or_else(|| cfg.paths.annotated_rules.clone());
    let rules: Vec<AnnotatedRule> = match &annotated_path {
        Some(p) => read_annotated(open(p)?)?,
        None => builtin_catalog(),
    };
    let out = a.out.unwrap_or_else(|| cfg.paths.models.join("taxonomy"));
    let seed = a.seed.unwrap_or(cfg.seeds.training[0]);
    let threshold = a.threshold.unwrap_or(cfg.thresholds.rule_type);
    let config = taxonomy_config(cfg, threshold)?;

    let model = RuleTypeModel::train(&rules, &config, seed)?;
    make_dir(&out)?;
    model.save(&out)?;
    let mut rec = RunRecorder::new(
        "train-taxonomy",
        argv,
        json!({"annotated": annotated_path, "seed": seed, "classifier": config, "folds": a.folds}),
    );
    if let Some(p) = &annotated_path {
        rec.input(p);
    }
    if let Some(k) = a.folds {
        let mut reports = Vec::new();
        for (i, t) in FineRuleType::ALL.into_iter().enumerate() {
            match crossval_rule_classifier(t, &rules, k, &config, seed.wrapping_add(i as u64)) {
                Ok(r) => reports.push(r),
                Err(e @ TaxonomyError::Stratification { .. }) => warn!("{e}"),
                Err(e) => return Err(e.into()),
            }
        }
        let path = out.join("crossval.json");
        write_json(&path, &reports)?;
    }
    rec.output(&out);
    rec.summary(json!({"rules": rules.len(), "fine_types": model.scorers.len()}));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    Ok(())
}

fn map_rules_cmd(cfg: &PipelineConfig, a: MapRules, argv: &[String]) -> Result<()> {
    let model_dir = a.model.unwrap_or_else(|| cfg.paths.models.join("taxonomy"));
    let rules_path = required(a.rules.or_else(|| cfg.paths.rules.clone()), "--rules", "paths.rules")?;
    let threshold = a.threshold.unwrap_or(cfg.thresholds.rule_type);
    let model = RuleTypeModel::load(&model_dir)?;
    let mut book = load_rules(&rules_path)?;
    map_rules(&mut book, &model, threshold);
    let mut w = create(&a.out)?;
    write_rules(&book, &mut w)?;
    w.flush().map_err(io_err(&a.out))?;

    let untyped = book.iter().filter(|r| r.fine_types().is_empty()).count();
    let mut rec = RunRecorder::new(
        "map-rules",
        argv,
        json!({"model": model_dir, "rules": rules_path, "threshold": threshold}),
    );
    rec.input(&rules_path);
    rec.output(&a.out);
    rec.summary(json!({"rules": book.len(), "without_type": untyped}));
    rec.finish(&sidecar(&a.out)).map_err(io_err(&a.out))?;
    Ok(())
}

fn train_config(cfg: &PipelineConfig, epochs: Option<usize>) -> TrainConfig {
    let mut train = TrainConfig {
        decision_threshold: cfg.thresholds.decision,
        ..TrainConfig::default()
    };
    if let Some(e) = epochs {
        train.epochs = e;
    }
    train
}

/// Model directory of one detector run.
pub fn detector_dir(root: &Path, variant: DetectorVariant, t: CoarseRuleType, seed: u64) -> PathBuf {
    root.join(variant.name()).join(t.slug()).join(format!("seed-{seed}"))
}

fn train_detector_cmd(cfg: &PipelineConfig, a: TrainDetector, argv: &[String]) -> Result<()> {
    let corpus_dir = a.corpus.unwrap_or_else(|| cfg.paths.corpus.clone());
    let types = if a.types.is_empty() { cfg.variants.types.clone() } else { a.types };
    let variants = if a.variants.is_empty() { cfg.variants.detector.clone() } else { a.variants };
    let seeds = if a.seeds.is_empty() { cfg.seeds.training.clone() } else { a.seeds };
    let out = a.out.unwrap_or_else(|| cfg.paths.models.join("detector"));
    let config = DetectorConfig {
        model: cfg.model_config()?,
        train: train_config(cfg, a.epochs),
        community_prefix: if a.community_every_utterance {
            CommunityPrefix::EveryUtterance
        } else {
            CommunityPrefix::FinalOnly
        },
    };
    let (dataset, meta) = load_corpus(&corpus_dir)?;
    let split = &meta.split;

    let mut records: Vec<PredictionRecord> = Vec::new();
    let mut skipped = Vec::new();
    for &v in &variants {
        for &seed in &seeds {
            for &t in &types {
                match train_detector(t, v, &dataset, split, seed, &config) {
                    Ok((model, report)) => {
                        let dir = detector_dir(&out, v, t, seed);
                        model.save(&dir)?;
                        records.extend(predict_split(&model, &dataset, &split.test, t, split.seed));
                        info!(variant = %v, target = %t, seed, epochs = report.epochs_run, "detector trained");
                    }
                    Err(e @ (DetectorError::NoPositives { .. } | DetectorError::NoNegatives { .. })) => {
                        warn!(variant = %v, seed, "skipped: {e}");
                        skipped.push(format!("{v}/{t}/seed-{seed}: {e}"));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    if records.is_empty() {
        return Err(CliError::Usage("no detector could be trained on this corpus".into()));
    }
    let pred_path = out.join(PREDICTIONS_FILE);
    let mut w = create(&pred_path)?;
    write_predictions(&records, &mut w).map_err(io_err(&pred_path))?;

    let mut rec = RunRecorder::new(
        "train-detector",
        argv,
        json!({"corpus": corpus_dir, "types": types, "variants": variants, "seeds": seeds, "detector": config}),
    );
    rec.input(corpus_dir.join(DATASET_FILE));
    rec.input(corpus_dir.join(CORPUS_META_FILE));
    rec.output(&out);
    rec.summary(json!({"predictions": records.len(), "skipped": skipped}));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    Ok(())
}

fn build_pairs_cmd(cfg: &PipelineConfig, a: BuildPairs, argv: &[String]) -> Result<()> {
    let corpus_dir = a.corpus.unwrap_or_else(|| cfg.paths.corpus.clone());
    let seed = a.seed.unwrap_or(cfg.seeds.data);
    let out = a.out.unwrap_or_else(|| cfg.paths.pairs.clone());
    let rules_path = corpus_dir.join(RULES_FILE);
    let (dataset, meta) = load_corpus(&corpus_dir)?;
    let rules = load_rules(&rules_path)?;
    let pair_cfg = PairConfig {
        mismatched_per_conversation: a.mismatched_per_conversation,
    };
    let select = |part: &[usize]| part.iter().map(|&i| &dataset.entries[i]).collect::<Vec<_>>();
    let split = &meta.split;
    let mut counters = PairCounters::default();
    let mut sizes = Vec::new();
    make_dir(&out)?;
    let mut rec = RunRecorder::new(
        "build-pairs",
        argv,
        json!({"corpus": corpus_dir, "seed": seed, "pairs": pair_cfg}),
    );
    for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let built = build_training_pairs(select(part), &rules, seed, &pair_cfg);
        counters.no_mismatched_candidate += built.counters.no_mismatched_candidate;
        counters.unpaired_controls += built.counters.unpaired_controls;
        counters.unknown_rules += built.counters.unknown_rules;
        sizes.push(built.pairs.len());
        let path = out.join(format!("{name}.jsonl"));
        write_pairs(&built.pairs, create(&path)?).map_err(io_err(&path))?;
        rec.output(path);
    }
    let augmented = build_augmented_eval(select(&split.test), &rules);
    let aug_path = out.join("augmented.jsonl");
    write_pairs(&augmented.pairs, create(&aug_path)?).map_err(io_err(&aug_path))?;
    let pairs_meta = PairsMeta {
        seed,
        split_seed: split.seed,
        counters,
        train: sizes[0],
        dev: sizes[1],
        test: sizes[2],
        augmented: augmented.pairs.len(),
    };
    let meta_path = out.join(PAIRS_META_FILE);
    write_json(&meta_path, &pairs_meta)?;
    rec.input(corpus_dir.join(DATASET_FILE));
    rec.input(&rules_path);
    rec.output(aug_path);
    rec.output(meta_path);
    rec.summary(settings(&pairs_meta));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    Ok(())
}

fn train_explainer_cmd(cfg: &PipelineConfig, a: TrainExplainer, argv: &[String]) -> Result<()> {
    let pairs_dir = a.pairs.unwrap_or_else(|| cfg.paths.pairs.clone());
    let variants = if a.variants.is_empty() { cfg.variants.explainer.clone() } else { a.variants };
    let seeds = if a.seeds.is_empty() { cfg.seeds.training.clone() } else { a.seeds };
    let out = a.out.unwrap_or_else(|| cfg.paths.models.join("explainer"));
    let meta: PairsMeta = read_json(&pairs_dir.join(PAIRS_META_FILE))?;
    let load = |name: &str| -> Result<Vec<_>> { Ok(read_pairs(open(&pairs_dir.join(name))?)?) };
    let (train, dev, test, augmented) = (
        load("train.jsonl")?,
        load("dev.jsonl")?,
        load("test.jsonl")?,
        load("augmented.jsonl")?,
    );
    let model_cfg = cfg.model_config()?;
    let mut records = Vec::new();
    let mut aug_records = Vec::new();
    for &variant in &variants {
        for &seed in &seeds {
            let config = ExplainerConfig {
                model: model_cfg.clone(),
                train: train_config(cfg, a.epochs),
                variant,
            };
            let (model, report) = train_explainer(&train, &dev, seed, &config)?;
            model.save(&out.join(variant.name()).join(format!("seed-{seed}")))?;
            records.extend(model.predict_pairs(&test, meta.split_seed));
            aug_records.extend(model.predict_pairs(&augmented, meta.split_seed));
            info!(variant = %variant, seed, epochs = report.epochs_run, "explainer trained");
        }
    }
    for (name, recs) in [(PREDICTIONS_FILE, &records), (AUGMENTED_PREDICTIONS_FILE, &aug_records)] {
        let path = out.join(name);
        write_predictions(recs, create(&path)?).map_err(io_err(&path))?;
    }
    let mut rec = RunRecorder::new(
        "train-explainer",
        argv,
        json!({"pairs": pairs_dir, "variants": variants, "seeds": seeds, "model": model_cfg, "train": train_config(cfg, a.epochs)}),
    );
    rec.input(&pairs_dir);
    rec.output(&out);
    rec.summary(json!({"train_pairs": train.len(), "test_pairs": test.len(), "augmented_pairs": augmented.len()}));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    Ok(())
}

#[derive(Serialize)]
struct RankedRule {
    rule_index: u32,
    short_name: String,
    coarse_types: Vec<CoarseRuleType>,
    probability: f64,
}

fn explain_cmd(cfg: &PipelineConfig, a: Explain, argv: &[String]) -> Result<()> {
    let rules_path = required(a.rules.or_else(|| cfg.paths.rules.clone()), "--rules", "paths.rules")?;
    let model = ExplainerModel::load(&a.model)?;
    let rules = load_rules(&rules_path)?;
    let req: ScoreRequest = read_json(&a.input)?;
    if req.conversation.is_empty() {
        return Err(CliError::Usage("conversation is empty".into()));
    }
    let community = rules.rules_for(&req.subreddit);
    if community.is_empty() {
        return Err(CliError::Usage(format!("no rules for r/{}", req.subreddit)));
    }
    let conversation = to_conversation(&req, &payload_digest(&req));
    let ranked: Vec<RankedRule> = model
        .explain(&conversation, community)
        .into_iter()
        .map(|s| RankedRule {
            rule_index: s.rule.rule_index,
            short_name: s.rule.short_name.clone(),
            coarse_types: s.rule.coarse_types().iter().copied().collect(),
            probability: s.probability,
        })
        .collect();
    let body = json!({"subreddit": req.subreddit, "threshold": model.threshold(), "rules": ranked});
    match &a.out {
        Some(out) => {
            write_json(out, &body)?;
            let mut rec = RunRecorder::new("explain", argv, json!({"model": a.model, "rules": rules_path}));
            rec.input(&a.input);
            rec.input(&rules_path);
            rec.output(out);
            rec.finish(&sidecar(out)).map_err(io_err(out))?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            let text = serde_json::to_string_pretty(&body).expect("ranking serializes");
            if let Err(e) = writeln!(out, "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(io_err(Path::new("<stdout>"))(e));
                }
            }
        }
    }
    Ok(())
}

fn evaluate_cmd(cfg: &PipelineConfig, a: Evaluate, argv: &[String]) -> Result<()> {
    if a.predictions.is_empty() {
        return Err(CliError::Usage(
            "no predictions to evaluate; pass one or more --predictions files".into(),
        ));
    }
    let out = a.out.unwrap_or_else(|| cfg.paths.reports.clone());
    let mut records = Vec::new();
    for p in &a.predictions {
        records.extend(read_predictions(open(p)?)?);
    }
    let mut report = build_report(&a.name, &records)?;
    let mut baselines: Vec<EvalReport> = Vec::new();
    if let Some(corpus_dir) = &a.baselines {
        let (dataset, meta) = load_corpus(corpus_dir)?;
        baselines.push(baseline_majority(&dataset, &meta.split)?);
        let detector = DetectorConfig {
            model: cfg.model_config()?,
            train: train_config(cfg, None),
            community_prefix: CommunityPrefix::FinalOnly,
        };
        match baseline_incivil_hate(&dataset, &meta.split, DetectorVariant::Comment, cfg.seeds.training[0], &detector) {
            Ok(r) => baselines.push(r),
            Err(EvalError::Training(m)) => report.notes.push(format!("incivil-hate baseline skipped: {m}")),
            Err(e) => return Err(e.into()),
        }
    }
    make_dir(&out)?;
    let report_path = out.join(REPORT_FILE);
    write_json(&report_path, &json!({"report": report, "baselines": baselines}))?;
    let mut table = report.render_table();
    for b in &baselines {
        table.push('\n');
        table.push_str(&b.render_table());
    }
    let table_path = out.join(REPORT_TABLE_FILE);
    fs::write(&table_path, &table).map_err(io_err(&table_path))?;
    print!("{table}");

    let mut rec = RunRecorder::new(
        "evaluate",
        argv,
        json!({"predictions": a.predictions, "name": a.name, "baselines": a.baselines}),
    );
    for p in &a.predictions {
        rec.input(p);
    }
    rec.output(report_path);
    rec.output(table_path);
    rec.summary(json!({"records": records.len(), "models": report.models}));
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    Ok(())
}

fn analyze_cmd(cfg: &PipelineConfig, a: Analyze, argv: &[String]) -> Result<()> {
    let corpus_dir = a.corpus.unwrap_or_else(|| cfg.paths.corpus.clone());
    let rules_path = a.rules.unwrap_or_else(|| corpus_dir.join(RULES_FILE));
    let out = a.out.unwrap_or_else(|| cfg.paths.reports.join("analysis"));
    let (dataset, _) = load_corpus(&corpus_dir)?;
    let rules = load_rules(&rules_path)?;
    let stats = corpus_stats(&dataset, &rules);

    let mut records = Vec::new();
    for p in &a.predictions {
        records.extend(read_predictions(open(p)?)?);
    }
    let mut per_type = Vec::new();
    let mut aggregate = Vec::new();
    let models: BTreeSet<&str> = records.iter().map(|r| r.model.as_str()).collect();
    for m in &models {
        let mine: Vec<PredictionRecord> = records.iter().filter(|r| r.model == *m).cloned().collect();
        let targets: BTreeSet<&str> = mine.iter().map(|r| r.target.as_str()).collect();
        for t in targets {
            per_type.push(type_confusion(&mine, m, t)?);
        }
        let seeds: BTreeSet<u64> = mine.iter().map(|r| r.seed).collect();
        for s in seeds {
            let run: Vec<PredictionRecord> = mine.iter().filter(|r| r.seed == s).cloned().collect();
            if let Ok(matrix) = aggregate_confusion(&run) {
                aggregate.push(json!({"model": m, "seed": s, "matrix": matrix}));
            }
        }
    }

    let mut text = String::new();
    text.push_str(&format!(
        "conversations {} (moderated {}, controls {}, forecast-only {})\nsubreddits {} rules {} moderators {}\n\n",
        stats.total_conversations,
        stats.moderated,
        stats.unmoderated,
        stats.forecast_only,
        stats.subreddits,
        stats.rules,
        stats.moderators
    ));
    text.push_str(&format!(
        "{:<14} {:>10} {:>10} {:>10} {:>10}\n",
        "type", "rules", "violations", "share", "utterances"
    ));
    for s in &stats.per_type {
        text.push_str(&format!(
            "{:<14} {:>10.3} {:>10} {:>10.3} {:>10.2}\n",
            s.coarse_type.name(),
            s.rule_share,
            s.violations,
            s.violation_share,
            s.avg_utterances_before_violation
        ));
    }
    if !per_type.is_empty() {
        text.push_str(&format!("\n{:<22} {:<14} {:>6} {:>6} {:>6} {:>6} {:>8}\n", "model", "target", "tp", "fp", "fn", "tn", "fpr"));
        for c in &per_type {
            text.push_str(&format!(
                "{:<22} {:<14} {:>6} {:>6} {:>6} {:>6} {:>8.3}\n",
                c.model,
                c.target,
                c.counts.true_positive,
                c.counts.false_positive,
                c.counts.false_negative,
                c.counts.true_negative,
                c.false_positive_rate()
            ));
        }
    }

    make_dir(&out)?;
    let json_path = out.join("analysis.json");
    write_json(
        &json_path,
        &json!({"stats": stats, "type_confusion": per_type, "aggregate_confusion": aggregate}),
    )?;
    let text_path = out.join("analysis.txt");
    fs::write(&text_path, &text).map_err(io_err(&text_path))?;
    print!("{text}");

    let mut rec = RunRecorder::new(
        "analyze",
        argv,
        json!({"corpus": corpus_dir, "rules": rules_path, "predictions": a.predictions}),
    );
    rec.input(corpus_dir.join(DATASET_FILE));
    rec.input(&rules_path);
    for p in &a.predictions {
        rec.input(p);
    }
    rec.output(json_path);
    rec.output(text_path);
    rec.finish(&out.join(MANIFEST_NAME)).map_err(io_err(&out))?;
    Ok(())
}

fn serve_cmd(a: Serve) -> Result<()> {
    let mut config = ServiceConfig::load(&a.service_config)?;
    if let Some(l) = a.listen {
        config.listen = l;
    }
    config.validate()?;
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(&a.service_config))?;
    runtime.block_on(normvio_service::serve(config))?;
    Ok(())
}
