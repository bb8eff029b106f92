//! The `mindstone` command line.

use std::error::Error as _;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{split_article, Article, Paragraph, Stopwords};
use crate::error::{Error, Result};
use crate::eval::{
    curves_csv, load_questions, run_benchmark, run_eval, EvalSettings, GoldRecord, LatencyReport,
    DEFAULT_QUERIES_PER_RUN, DEFAULT_RUNS, DEFAULT_TAU,
};
use crate::fusion::{tune_weights, RankedAnswer};
use crate::index::{build_index, manifest_hash, Bm25Params, InvertedIndex};
use crate::jsonl;
use crate::pipeline::{Pipeline, PipelineConfig, StageTrace};
use crate::scorers::dataset::{
    build_dataset_aug1, build_dataset_aug2, build_dataset_finetune, RankExample, DEFAULT_AUG_M, DEFAULT_AUG_N,
};
use crate::scorers::external::SessionOptions;
use crate::scorers::{
    train_builtin_ranker, BuiltinRanker, BuiltinRankerModel, BuiltinReader, ConstantRanker, ExternalScorer,
    OracleRanker, OracleReader, Ranker, Reader, ScorerDescriptor, ScorerRole, TrainConfig, TrainReport,
};

#[derive(Debug, Parser)]
#[command(name = "mindstone", version, about = "Open-domain question answering cascade")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the pipeline [default: available cores].
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split articles JSONL into paragraphs JSONL.
    Ingest(IngestArgs),
    /// Build an index directory from paragraphs JSONL.
    Index(IndexArgs),
    /// Convert SQuAD v1.1 JSON into articles and questions JSONL.
    ConvertSquad(ConvertArgs),
    /// Build a ranker training dataset.
    BuildDataset(BuildDatasetArgs),
    /// Train the builtin ranker, one phase per dataset.
    TrainRanker(TrainArgs),
    /// Answer one question or a batch.
    Answer(AnswerArgs),
    /// Grid-search fusion weights for top-1 exact match.
    TuneWeights(TuneArgs),
    /// Evaluate on a questions file.
    Eval(EvalArgs),
    /// Measure latency (minimum of per-run batch means).
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Articles JSONL: {"article_id","title","body"}.
    #[arg(long = "in")]
    input: PathBuf,
    /// Paragraphs JSONL output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Paragraphs JSONL.
    #[arg(long = "in")]
    input: PathBuf,
    /// Index directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = Bm25Params::default().k1)]
    k1: f64,
    #[arg(long, default_value_t = Bm25Params::default().b)]
    b: f64,
    /// Stopword file, one term per line [default: English list].
    #[arg(long, conflicts_with = "no_stopwords")]
    stopwords: Option<PathBuf>,
    /// Index every term.
    #[arg(long)]
    no_stopwords: bool,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// SQuAD v1.1 JSON file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Articles JSONL output.
    #[arg(long)]
    articles: PathBuf,
    /// Questions JSONL output.
    #[arg(long)]
    questions: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetMethod {
    Finetune,
    Aug1,
    Aug2,
}

#[derive(Debug, Args)]
struct BuildDatasetArgs {
    #[arg(long)]
    index: PathBuf,
    /// Questions JSONL with gold answers.
    #[arg(long)]
    questions: PathBuf,
    #[arg(long, value_enum)]
    method: DatasetMethod,
    /// Paragraphs retrieved per question (aug2).
    #[arg(long, default_value_t = DEFAULT_AUG_M)]
    m: usize,
    /// Paragraphs kept per question (aug1, aug2).
    #[arg(long, default_value_t = DEFAULT_AUG_N)]
    n: usize,
    /// Dataset JSONL output.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scorers: ScorerArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    index: PathBuf,
    /// Dataset JSONL; repeat for sequential phases.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    /// Train once on the concatenation of all datasets instead of one phase each.
    #[arg(long)]
    concat: bool,
    /// Model to continue training from.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Model JSON output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().l2)]
    l2: f64,
    #[arg(long, default_value_t = TrainConfig::default().holdout_fraction)]
    holdout_fraction: f64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct AnswerArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, conflicts_with = "batch", required_unless_present = "batch")]
    question: Option<String>,
    /// Questions JSONL: {"qid","question"} (gold answers optional).
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Gold answer for --question (oracle scorers only); repeatable.
    #[arg(long = "gold-answer")]
    gold_answers: Vec<String>,
    /// Answer JSONL output [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Answers kept per question.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[command(flatten)]
    scorers: ScorerArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    index: PathBuf,
    /// Dev questions JSONL.
    #[arg(long)]
    questions: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    grid_step: f64,
    /// Per-grid-point CSV (w1,w2,w3,em).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write the effective config with the tuned weights here.
    #[arg(long)]
    write_config: Option<PathBuf>,
    #[command(flatten)]
    scorers: ScorerArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Cutoffs of the recall and top-N EM curves.
    #[arg(long, value_delimiter = ',', default_value = "1,5,20,100")]
    n_grid: Vec<usize>,
    /// Jaccard threshold for strict recall.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Directory for report.json, curves.csv and run_manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scorers: ScorerArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_QUERIES_PER_RUN)]
    queries_per_run: usize,
    /// Directory for latency.json and run_manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    scorers: ScorerArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankerKind {
    Builtin,
    External,
    Constant,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReaderKind {
    Builtin,
    External,
    Oracle,
}

#[derive(Debug, Clone, Args)]
struct ScorerArgs {
    #[arg(long, value_enum, default_value_t = RankerKind::Builtin)]
    ranker: RankerKind,
    /// Builtin ranker model JSON.
    #[arg(long)]
    ranker_model: Option<PathBuf>,
    /// External ranker command line, split on whitespace.
    #[arg(long)]
    ranker_cmd: Option<String>,
    /// Score of the constant ranker.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ranker_constant: f64,
    #[arg(long, value_enum, default_value_t = ReaderKind::Builtin)]
    reader: ReaderKind,
    /// External reader command line, split on whitespace.
    #[arg(long)]
    reader_cmd: Option<String>,
    /// Subprocesses per external scorer.
    #[arg(long, default_value_t = 1)]
    scorer_pool: usize,
    /// Per-request timeout of external scorers, in seconds.
    #[arg(long, default_value_t = 60)]
    scorer_timeout: u64,
}

/// Every key of the run config file; flags override the file.
#[derive(Debug, Clone, Default, Args)]
struct ConfigArgs {
    /// Run config JSON with the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Paragraphs retrieved per question.
    #[arg(long)]
    n_retriever: Option<usize>,
    /// Fraction of ranked candidates sent to the reader.
    #[arg(long)]
    read_fraction: Option<f64>,
    /// Paragraphs read per question (overrides read_fraction).
    #[arg(long)]
    n_reader: Option<usize>,
    /// Enable the ranker-gated expansion pass.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    rm3_enabled: Option<bool>,
    /// Weight of the original question in the expanded query.
    #[arg(long)]
    rm3_alpha: Option<f64>,
    /// Terms taken from each feedback paragraph.
    #[arg(long)]
    rm3_terms: Option<usize>,
    /// Depth of the second retrieval [default: n_retriever].
    #[arg(long)]
    rm3_second_pass_n: Option<usize>,
    /// Score second-pass-only candidates with the original question.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    rm3_rescore_retriever: Option<bool>,
    #[arg(long)]
    w_retriever: Option<f64>,
    #[arg(long)]
    w_ranker: Option<f64>,
    #[arg(long)]
    w_reader: Option<f64>,
    /// Spans taken from each read paragraph.
    #[arg(long)]
    k_spans_per_paragraph: Option<usize>,
    /// Paragraph token budget of the ranker.
    #[arg(long)]
    ranker_para_tokens: Option<usize>,
    /// Question plus paragraph token budget of the reader.
    #[arg(long)]
    reader_total_tokens: Option<usize>,
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag {
                    cfg.$($field).+ = v;
                }
            };
        }
        set!(n_retriever => n_retriever);
        set!(read_fraction => read_fraction);
        if self.n_reader.is_some() {
            cfg.n_reader = self.n_reader;
        }
        set!(rm3_enabled => rm3.enabled);
        set!(rm3_alpha => rm3.alpha);
        set!(rm3_terms => rm3.terms);
        if self.rm3_second_pass_n.is_some() {
            cfg.rm3.second_pass_n = self.rm3_second_pass_n;
        }
        set!(rm3_rescore_retriever => rm3_rescore_retriever);
        set!(w_retriever => fusion.w_retriever);
        set!(w_ranker => fusion.w_ranker);
        set!(w_reader => fusion.w_reader);
        set!(k_spans_per_paragraph => k_spans_per_paragraph);
        set!(ranker_para_tokens => limits.ranker_para_tokens);
        set!(reader_total_tokens => limits.reader_total_tokens);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Inputs that determine a report. The digest ignores the timestamp and the
/// worker count, which do not affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: PipelineConfig,
    pub index_manifest_hash: String,
    pub ranker: ScorerDescriptor,
    pub reader: ScorerDescriptor,
    pub questions_sha256: Option<String>,
    pub settings: serde_json::Value,
    pub seed: u64,
    pub workers: usize,
    pub timestamp: String,
}

impl RunManifest {
    pub fn digest(&self) -> String {
        let mut key = self.clone();
        key.workers = 0;
        key.timestamp.clear();
        let bytes = serde_json::to_vec(&key).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code: 0 success, 2 usage error, 1 runtime error.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                msg.push_str(&format!(": {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("MINDSTONE_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let ctx = Ctx { seed: cli.seed, workers };
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Index(a) => index_cmd(a),
        Command::ConvertSquad(a) => convert_squad(a),
        Command::BuildDataset(a) => build_dataset(a, &ctx),
        Command::TrainRanker(a) => train_ranker(a, &ctx),
        Command::Answer(a) => answer(a, &ctx),
        Command::TuneWeights(a) => tune(a, &ctx),
        Command::Eval(a) => eval_cmd(a, &ctx),
        Command::Bench(a) => bench(a, &ctx),
    }
}

struct Ctx {
    seed: u64,
    workers: usize,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let articles: Vec<Article> = jsonl::read(&a.input)?;
    let paragraphs: Vec<Paragraph> = articles.iter().flat_map(split_article).collect();
    jsonl::write(&a.out, &paragraphs)?;
    log::info!("{} articles -> {} paragraphs", articles.len(), paragraphs.len());
    Ok(())
}

fn index_cmd(a: IndexArgs) -> Result<()> {
    let params = Bm25Params::new(a.k1, a.b)?;
    let stopwords = match (&a.stopwords, a.no_stopwords) {
        (_, true) => Stopwords::none(),
        (Some(path), false) => Stopwords::load(path)?,
        (None, false) => Stopwords::english(),
    };
    let paragraphs: Vec<Paragraph> = jsonl::read(&a.input)?;
    let index = build_index(paragraphs, params, stopwords)?;
    let manifest = index.save(&a.out)?;
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

fn convert_squad(a: ConvertArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).map_err(|e| Error::io(format!("reading {}", a.input.display()), e))?;
    let (articles, records) = crate::eval::squad::convert(&text)?;
    jsonl::write(&a.articles, &articles)?;
    jsonl::write(&a.questions, &records)?;
    log::info!("{} articles, {} questions", articles.len(), records.len());
    Ok(())
}

fn load_index(dir: &Path) -> Result<Arc<InvertedIndex>> {
    Ok(Arc::new(InvertedIndex::load(dir)?))
}

fn split_command(cmd: Option<&str>, what: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = cmd.unwrap_or_default().split_whitespace().map(str::to_string).collect();
    if parts.is_empty() {
        return Err(Error::invalid(format!("external {what} needs --{what}-cmd")));
    }
    Ok(parts)
}

fn session_options(s: &ScorerArgs) -> SessionOptions {
    SessionOptions { request_timeout: Duration::from_secs(s.scorer_timeout), ..SessionOptions::default() }
}

fn make_ranker(s: &ScorerArgs, index: &Arc<InvertedIndex>, gold: &[(String, Vec<String>)]) -> Result<Arc<dyn Ranker>> {
    Ok(match s.ranker {
        RankerKind::Builtin => {
            let path = s.ranker_model.as_ref().ok_or_else(|| Error::invalid("builtin ranker needs --ranker-model"))?;
            let model = read_json::<BuiltinRankerModel>(path)?;
            Arc::new(BuiltinRanker::new(model, Arc::clone(index))?)
        }
        RankerKind::External => {
            let cmd = split_command(s.ranker_cmd.as_deref(), "ranker")?;
            Arc::new(ExternalScorer::spawn(&cmd, ScorerRole::Rank, s.scorer_pool, &session_options(s))?)
        }
        RankerKind::Constant => Arc::new(ConstantRanker(s.ranker_constant)),
        RankerKind::Oracle => Arc::new(OracleRanker::new(gold.iter().cloned())),
    })
}

fn make_reader(s: &ScorerArgs, index: &Arc<InvertedIndex>, gold: &[(String, Vec<String>)]) -> Result<Arc<dyn Reader>> {
    Ok(match s.reader {
        ReaderKind::Builtin => Arc::new(BuiltinReader::new(Arc::clone(index))),
        ReaderKind::External => {
            let cmd = split_command(s.reader_cmd.as_deref(), "reader")?;
            Arc::new(ExternalScorer::spawn(&cmd, ScorerRole::Read, s.scorer_pool, &session_options(s))?)
        }
        ReaderKind::Oracle => Arc::new(OracleReader::new(gold.iter().cloned())),
    })
}

fn gold_pairs(records: &[GoldRecord]) -> Vec<(String, Vec<String>)> {
    records.iter().map(|r| (r.question.clone(), r.answers.clone())).collect()
}

struct Prepared {
    pipeline: Pipeline,
    manifest: RunManifest,
}

#[allow(clippy::too_many_arguments)]
fn prepare(
    command: &str,
    index_dir: &Path,
    config: &ConfigArgs,
    scorers: &ScorerArgs,
    gold: &[(String, Vec<String>)],
    questions: Option<&Path>,
    settings: serde_json::Value,
    ctx: &Ctx,
) -> Result<Prepared> {
    let cfg = config.resolve()?;
    let index = load_index(index_dir)?;
    let ranker = make_ranker(scorers, &index, gold)?;
    let reader = make_reader(scorers, &index, gold)?;
    let pipeline = Pipeline::new(index, ranker, reader, cfg.clone(), ctx.workers)?;
    let questions_sha256 = questions.map(file_sha256).transpose()?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: cfg,
        index_manifest_hash: manifest_hash(index_dir)?,
        ranker: pipeline.ranker_descriptor(),
        reader: pipeline.reader_descriptor(),
        questions_sha256,
        settings,
        seed: ctx.seed,
        workers: ctx.workers,
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    Ok(Prepared { pipeline, manifest })
}

fn build_dataset(a: BuildDatasetArgs, ctx: &Ctx) -> Result<()> {
    let (records, _) = load_questions(&a.questions)?;
    let index = load_index(&a.index)?;
    let examples: Vec<RankExample> = match a.method {
        DatasetMethod::Finetune => build_dataset_finetune(&records, index.paragraphs(), ctx.seed),
        DatasetMethod::Aug1 => build_dataset_aug1(&records, &index, a.n),
        DatasetMethod::Aug2 => {
            let cfg = a.config.resolve()?;
            let ranker = make_ranker(&a.scorers, &index, &gold_pairs(&records))?;
            build_dataset_aug2(&records, &index, ranker.as_ref(), &cfg.limits, a.m, a.n)?
        }
    };
    jsonl::write(&a.out, &examples)?;
    let positives = examples.iter().filter(|e| e.label == 1).count();
    log::info!("{} examples, {positives} positive", examples.len());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    phases: Vec<PhaseSummary>,
}

#[derive(Serialize)]
struct PhaseSummary {
    dataset: String,
    report: TrainReport,
}

fn train_ranker(a: TrainArgs, ctx: &Ctx) -> Result<()> {
    let index = load_index(&a.index)?;
    let limits = a.config.resolve()?.limits;
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        l2: a.l2,
        holdout_fraction: a.holdout_fraction,
        seed: ctx.seed,
    };
    let mut model = a.init.as_deref().map(read_json::<BuiltinRankerModel>).transpose()?;
    let mut phases = Vec::new();
    let mut groups: Vec<(String, Vec<RankExample>)> = Vec::new();
    for path in &a.datasets {
        let data: Vec<RankExample> = jsonl::read(path)?;
        match groups.last_mut() {
            Some((name, all)) if a.concat => {
                name.push_str(&format!(" + {}", path.display()));
                all.extend(data);
            }
            _ => groups.push((path.display().to_string(), data)),
        }
    }
    for (dataset, data) in groups {
        let (m, report) = train_builtin_ranker(&data, Arc::clone(&index), &limits, &train_cfg, model.as_ref())?;
        model = Some(m);
        phases.push(PhaseSummary { dataset, report });
    }
    write_json(&a.out, model.as_ref().expect("at least one dataset"))?;
    println!("{}", serde_json::to_string(&TrainSummary { phases })?);
    Ok(())
}

#[derive(Debug, Deserialize)]
struct BatchQuestion {
    qid: String,
    question: String,
    #[serde(default)]
    answers: Vec<String>,
}

#[derive(Serialize)]
struct AnswerRecord<'a> {
    qid: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    answers: Option<&'a [RankedAnswer]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a StageTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn answer(a: AnswerArgs, ctx: &Ctx) -> Result<()> {
    let batch: Vec<BatchQuestion> = match (&a.question, &a.batch) {
        (Some(q), _) => vec![BatchQuestion { qid: "q0".into(), question: q.clone(), answers: a.gold_answers.clone() }],
        (None, Some(path)) => jsonl::read(path)?,
        (None, None) => unreachable!("clap requires one of --question/--batch"),
    };
    let gold: Vec<(String, Vec<String>)> = batch.iter().map(|b| (b.question.clone(), b.answers.clone())).collect();
    let prepared = prepare(
        "answer",
        &a.index,
        &a.config,
        &a.scorers,
        &gold,
        a.batch.as_deref(),
        serde_json::json!({ "top": a.top }),
        ctx,
    )?;
    let questions: Vec<&str> = batch.iter().map(|b| b.question.as_str()).collect();
    let outcomes = prepared.pipeline.answer_batch(&questions);

    let mut out: Box<dyn Write> = match &a.out {
        Some(path) => Box::new(io::BufWriter::new(
            fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?,
        )),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    };
    let mut failures = 0;
    for (b, outcome) in batch.iter().zip(&outcomes) {
        let record = match outcome {
            Ok(o) => AnswerRecord {
                qid: &b.qid,
                answers: Some(&o.answers[..a.top.min(o.answers.len())]),
                trace: Some(&o.trace),
                error: None,
            },
            Err(e) => {
                failures += 1;
                AnswerRecord { qid: &b.qid, answers: None, trace: None, error: Some(e.to_string()) }
            }
        };
        jsonl::write_to(&mut out, &[record]).map_err(|e| Error::io("writing answers", e))?;
    }
    out.flush().map_err(|e| Error::io("writing answers", e))?;
    if failures > 0 {
        return Err(Error::invalid(format!("{failures} of {} questions failed", batch.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct TuneSummary {
    best: crate::fusion::FusionWeights,
    best_em: f64,
    grid_points: usize,
    dev_questions: usize,
}

fn tune(a: TuneArgs, ctx: &Ctx) -> Result<()> {
    let (records, skipped) = load_questions(&a.questions)?;
    let prepared = prepare(
        "tune-weights",
        &a.index,
        &a.config,
        &a.scorers,
        &gold_pairs(&records),
        Some(&a.questions),
        serde_json::json!({ "grid_step": a.grid_step }),
        ctx,
    )?;
    let run = run_eval(&records, skipped, &prepared.pipeline, &EvalSettings::default())?;
    let report = tune_weights(&run.tune_cases(&records), a.grid_step)?;
    if let Some(path) = &a.out_csv {
        write_text(path, &report.to_csv())?;
    }
    if let Some(path) = &a.write_config {
        let mut cfg = prepared.manifest.config.clone();
        cfg.fusion = report.best;
        write_json(path, &cfg)?;
    }
    println!(
        "{}",
        serde_json::to_string(&TuneSummary {
            best: report.best,
            best_em: report.best_em,
            grid_points: report.points.len(),
            dev_questions: records.len(),
        })?
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs, ctx: &Ctx) -> Result<()> {
    let (records, skipped) = load_questions(&a.questions)?;
    let settings = EvalSettings { n_grid: a.n_grid.clone(), tau: a.tau };
    let prepared = prepare(
        "eval",
        &a.index,
        &a.config,
        &a.scorers,
        &gold_pairs(&records),
        Some(&a.questions),
        serde_json::to_value(&settings)?,
        ctx,
    )?;
    let mut run = run_eval(&records, skipped, &prepared.pipeline, &settings)?;
    run.report.manifest_digest = Some(prepared.manifest.digest());
    create_dir(&a.out)?;
    write_json(&a.out.join("report.json"), &run.report)?;
    write_text(&a.out.join("curves.csv"), &curves_csv(&run.curves))?;
    write_json(&a.out.join("run_manifest.json"), &prepared.manifest)?;
    println!(
        "{}",
        serde_json::to_string(&serde_json::json!({
            "questions": run.report.questions,
            "em": run.report.em,
            "f1": run.report.f1,
        }))?
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    manifest_digest: String,
    #[serde(flatten)]
    latency: &'a LatencyReport,
}

fn bench(a: BenchArgs, ctx: &Ctx) -> Result<()> {
    let (records, _) = load_questions(&a.questions)?;
    let prepared = prepare(
        "bench",
        &a.index,
        &a.config,
        &a.scorers,
        &gold_pairs(&records),
        Some(&a.questions),
        serde_json::json!({ "runs": a.runs, "queries_per_run": a.queries_per_run }),
        ctx,
    )?;
    let questions: Vec<String> = records.into_iter().map(|r| r.question).collect();
    let latency = run_benchmark(&questions, &prepared.pipeline, a.runs, a.queries_per_run)?;
    create_dir(&a.out)?;
    let output = BenchOutput { manifest_digest: prepared.manifest.digest(), latency: &latency };
    write_json(&a.out.join("latency.json"), &output)?;
    write_json(&a.out.join("run_manifest.json"), &prepared.manifest)?;
    println!("{}", serde_json::to_string(&output)?);
    Ok(())
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))
}
