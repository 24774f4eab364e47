//! The `lateral-bench` command line: `validate`, `train`, `eval`, `sweep`.
//!
//! Settings come from flags, then from an optional TOML file given with
//! `--config`, then from built-in defaults. The API key is only ever read
//! from the environment.
//!
//! Exit codes: 0 success, 1 validation or scoring failure, 2 I/O or
//! configuration error, 3 the remote service aborted the run.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::dataset::{
    load_dataset, load_dataset_unchecked, validate, DatasetError, DatasetFormat, Prediction, PredictionRecord,
    PuzzleInstance,
};
use crate::llm::{
    solve_dataset_each, ChatClient, ClientConfig, PromptTemplate, SolveError, SolveSettings, TranscriptLog,
    DEFAULT_API_KEY_VAR, DEFAULT_RETRY_BUDGET,
};
use crate::metrics::{score_breakdown_with, Cell};
use crate::minimcq::{
    build_vocab, corpus_of, load_checkpoint, save_checkpoint, score_choices, train_with, Checkpoint, EncoderConfig,
    ModelParams, TrainConfig, TrainError,
};
use crate::report::{render_breakdown, render_curves, BreakdownFormat};
use crate::sweep::{
    dataset_hash, default_temperatures, parse_temperatures, run_sweep, DatasetRef, SolverRef, SweepError, SweepPlan,
    DEFAULT_REPEATS, MANIFEST_FILE,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_REMOTE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "lateral-bench", version, about = "Evaluate solvers on adversarially grouped lateral-thinking puzzles")]
pub struct Cli {
    /// TOML file with defaults; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step: initialization, shuffles, backoff jitter.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset file and print every issue found.
    Validate(ValidateArgs),
    /// Train the miniature pair-encoding model and write a checkpoint.
    Train(TrainArgs),
    /// Run one solver over a dataset and score it.
    Eval(EvalArgs),
    /// Evaluate an LLM endpoint over a grid of temperatures.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub dataset: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for model.ckpt and train_log.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Drop words seen fewer times than this from the vocabulary.
    #[arg(long)]
    pub min_freq: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    /// Chat-completions URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
    /// Maximum requests in flight.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Attempts per instance before recording ABSTAIN.
    #[arg(long)]
    pub retry_budget: Option<u32>,
    /// Spell the choice header "list of choices :" instead of the original "liste of choices :".
    #[arg(long)]
    pub corrected_header: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for predictions.jsonl and breakdown files.
    #[arg(long)]
    pub out: PathBuf,
    /// Solve with a trained miniature model.
    #[arg(long, conflicts_with = "endpoint")]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub llm: LlmArgs,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Comma-separated cells averaged into `overall`.
    #[arg(long)]
    pub cells: Option<String>,
    /// Breakdown printed to stdout: text, json or csv.
    #[arg(long)]
    pub format: Option<BreakdownFormat>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory: state/, curves/ and sweep_result.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub llm: LlmArgs,
    /// `start:end:step` or a comma-separated list. Default 0:1.2:0.2.
    #[arg(long)]
    pub temps: Option<String>,
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Continue the sweep already in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub cells: Option<String>,
    /// Skip the SVG chart.
    #[arg(long)]
    pub no_svg: bool,
}

/// The `--config` file. Every key is optional; unknown keys are errors,
/// which also keeps API keys out of it.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub train: TrainSection,
    pub llm: LlmSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub metrics: MetricsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub d_ff: Option<usize>,
    pub max_len: Option<usize>,
    pub min_freq: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub max_tokens: Option<u32>,
    pub timeout_secs: Option<f64>,
    pub requests_per_minute: Option<u32>,
    pub transport_retries: Option<u32>,
    pub concurrency: Option<usize>,
    pub retry_budget: Option<u32>,
    pub corrected_header: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub temps: Option<String>,
    pub repeats: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub cells: Option<Vec<String>>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
    #[error("remote service aborted the run: {0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Failed(_) => EXIT_FAILED,
            CliError::Remote(_) => EXIT_REMOTE,
        }
    }
}

fn io_context(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.to_string();
    move |source| CliError::Io { context, source }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } | DatasetError::MalformedFile { .. } => CliError::Config(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<u8, CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_context(format!("cannot read config {}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match cli.command {
        Command::Validate(args) => cmd_validate(&args),
        Command::Train(args) => cmd_train(&args, &file, seed),
        Command::Eval(args) => cmd_eval(&args, &file, seed),
        Command::Sweep(args) => cmd_sweep(&args, &file, seed),
    }
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<u8, CliError> {
    let instances = load_dataset_unchecked(&args.dataset).map_err(|e| CliError::Config(e.to_string()))?;
    let report = validate(&instances);
    if report.is_empty() {
        println!("{}: {} instances, no issues", args.dataset.display(), instances.len());
    } else {
        print!("{report}");
    }
    Ok(if report.has_errors() { EXIT_FAILED } else { EXIT_OK })
}

/// Model shape used when neither flags nor config set one.
pub const DEFAULT_ENCODER: (usize, usize, usize, usize, usize) = (32, 4, 2, 64, 64);

pub fn cmd_train(args: &TrainArgs, file: &FileConfig, seed: u64) -> Result<u8, CliError> {
    let t = &file.train;
    let instances = load_dataset(&args.dataset, DatasetFormat::Json)?;
    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        epochs: args.epochs.or(t.epochs).unwrap_or(defaults.epochs),
        lr: args.lr.or(t.lr).unwrap_or(defaults.lr),
        batch_size: args.batch_size.or(t.batch_size).unwrap_or(defaults.batch_size),
        seed,
        ..defaults
    };
    let min_freq = args.min_freq.or(t.min_freq).unwrap_or(1);
    let vocab = build_vocab(&corpus_of(&instances), min_freq).map_err(|e| CliError::Config(e.to_string()))?;
    let (d_model, n_heads, n_layers, d_ff, max_len) = DEFAULT_ENCODER;
    let encoder = EncoderConfig {
        d_model: args.d_model.or(t.d_model).unwrap_or(d_model),
        n_heads: args.n_heads.or(t.n_heads).unwrap_or(n_heads),
        n_layers: args.n_layers.or(t.n_layers).unwrap_or(n_layers),
        d_ff: args.d_ff.or(t.d_ff).unwrap_or(d_ff),
        max_len: args.max_len.or(t.max_len).unwrap_or(max_len),
        vocab_size: vocab.len(),
        seed,
    };
    let params = ModelParams::init(encoder).map_err(|e| CliError::Config(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(io_context(format!("cannot create {}", args.out.display())))?;
    let log_path = args.out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_context(format!("cannot create {}", log_path.display())))?);
    let mut log_error = None;
    let outcome = train_with(params, &instances, &vocab, &train_config, |entry| {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_error.get_or_insert(e);
        }
        println!("epoch {:>4}  loss {:.6}  train accuracy {:.4}", entry.epoch, entry.mean_loss, entry.train_accuracy);
    });
    if let Some(e) = log_error {
        return Err(io_context(format!("cannot write {}", log_path.display()))(e));
    }
    let checkpoint_path = args.out.join("model.ckpt");
    match outcome {
        Ok(outcome) => {
            save_checkpoint(&checkpoint_path, &Checkpoint { vocab, params: outcome.params })
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", checkpoint_path.display())))?;
            match outcome.log.last() {
                Some(last) => println!("final train accuracy: {:.4}", last.train_accuracy),
                None => println!("no epochs run; checkpoint holds the initialization"),
            }
            println!("checkpoint: {}", checkpoint_path.display());
            Ok(EXIT_OK)
        }
        Err(TrainError::NonFiniteLoss {
            epoch, batch, last_good, ..
        }) => {
            let path = args.out.join("model.last_good.ckpt");
            save_checkpoint(&path, &Checkpoint { vocab, params: *last_good })
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
            Err(CliError::Failed(format!(
                "non-finite loss at epoch {epoch}, batch {batch}; last good parameters in {}",
                path.display()
            )))
        }
        Err(TrainError::InvalidConfig(m)) => Err(CliError::Config(m)),
        Err(e) => Err(CliError::Failed(e.to_string())),
    }
}

fn parse_cells(flag: Option<&str>, file: &FileConfig) -> Result<Vec<Cell>, CliError> {
    let names: Vec<String> = match (flag, &file.metrics.cells) {
        (Some(list), _) => list.split(',').map(|s| s.trim().to_string()).collect(),
        (None, Some(list)) => list.clone(),
        (None, None) => return Ok(Cell::SCORED.to_vec()),
    };
    names
        .iter()
        .map(|n| Cell::parse(n).ok_or_else(|| CliError::Config(format!("unknown metric cell {n:?}"))))
        .collect()
}

fn client_config(args: &LlmArgs, file: &FileConfig, seed: u64) -> Result<ClientConfig, CliError> {
    let l = &file.llm;
    let defaults = ClientConfig::default();
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| l.endpoint.clone())
        .ok_or_else(|| CliError::Config("no solver: pass --endpoint (or --checkpoint for eval)".into()))?;
    Ok(ClientConfig {
        endpoint,
        model: args.model.clone().or_else(|| l.model.clone()).unwrap_or(defaults.model),
        api_key_env: args
            .api_key_env
            .clone()
            .or_else(|| l.api_key_env.clone())
            .unwrap_or_else(|| DEFAULT_API_KEY_VAR.into()),
        max_tokens: args.max_tokens.or(l.max_tokens).unwrap_or(defaults.max_tokens),
        timeout_secs: args.timeout_secs.or(l.timeout_secs).unwrap_or(defaults.timeout_secs),
        requests_per_minute: args.requests_per_minute.or(l.requests_per_minute),
        transport_retries: l.transport_retries.unwrap_or(defaults.transport_retries),
        jitter_seed: seed,
        ..defaults
    })
}

fn solve_settings(args: &LlmArgs, file: &FileConfig, temperature: f64) -> SolveSettings {
    let l = &file.llm;
    let corrected = args.corrected_header || l.corrected_header.unwrap_or(false);
    SolveSettings {
        temperature,
        retry_budget: args.retry_budget.or(l.retry_budget).unwrap_or(DEFAULT_RETRY_BUDGET),
        concurrency_limit: args.concurrency.or(l.concurrency).unwrap_or(SolveSettings::new(0.0).concurrency_limit),
        template: if corrected { PromptTemplate::corrected() } else { PromptTemplate::default() },
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_context("cannot start async runtime"))
}

fn solve_error(e: SolveError) -> CliError {
    if e.is_auth() {
        CliError::Remote(e.to_string())
    } else {
        match e {
            SolveError::InvalidSettings(m) => CliError::Config(m),
            other => CliError::Remote(other.to_string()),
        }
    }
}

/// JSON-lines writer flushed after every record, so an aborted run leaves
/// the finished prefix on disk.
struct RecordSink {
    path: PathBuf,
    out: BufWriter<File>,
    records: Vec<PredictionRecord>,
    error: Option<std::io::Error>,
}

impl RecordSink {
    fn create(path: PathBuf) -> Result<Self, CliError> {
        let file = File::create(&path).map_err(io_context(format!("cannot create {}", path.display())))?;
        Ok(RecordSink {
            path,
            out: BufWriter::new(file),
            records: Vec::new(),
            error: None,
        })
    }

    fn push(&mut self, record: &PredictionRecord) {
        let line = serde_json::to_string(record).expect("record serializes");
        if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
            self.error.get_or_insert(e);
        }
        self.records.push(record.clone());
    }

    fn finish(self) -> Result<Vec<PredictionRecord>, CliError> {
        match self.error {
            Some(e) => Err(io_context(format!("cannot write {}", self.path.display()))(e)),
            None => Ok(self.records),
        }
    }
}

fn minimcq_records(checkpoint: &Path, instances: &[PuzzleInstance], sink: &mut RecordSink) -> Result<(), CliError> {
    let ck = load_checkpoint(checkpoint).map_err(|e| CliError::Config(format!("{}: {e}", checkpoint.display())))?;
    for instance in instances {
        let dist = score_choices(&ck.params, &instance.question, &instance.choices, &ck.vocab)
            .map_err(|e| CliError::Failed(format!("instance {}: {e}", instance.id)))?;
        sink.push(&PredictionRecord {
            instance_id: instance.id.clone(),
            predicted_index: Prediction::Choice(dist.argmax()),
            solver_id: "minimcq".into(),
            temperature: None,
            raw_response: serde_json::to_string(&dist.probs).expect("probabilities serialize"),
            attempts: 1,
            error: None,
        });
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs, file: &FileConfig, seed: u64) -> Result<u8, CliError> {
    let instances = load_dataset(&args.dataset, DatasetFormat::Json)?;
    let cells = parse_cells(args.cells.as_deref(), file)?;
    let format = args.format.unwrap_or(BreakdownFormat::Text);
    let checkpoint = args.checkpoint.clone().or_else(|| file.eval.checkpoint.clone());
    let endpoint_set = args.llm.endpoint.is_some() || file.llm.endpoint.is_some();
    if checkpoint.is_some() && endpoint_set {
        return Err(CliError::Config("choose one solver: --checkpoint or --endpoint, not both".into()));
    }

    fs::create_dir_all(&args.out).map_err(io_context(format!("cannot create {}", args.out.display())))?;
    let mut sink = RecordSink::create(args.out.join("predictions.jsonl"))?;
    if let Some(path) = checkpoint {
        minimcq_records(&path, &instances, &mut sink)?;
    } else {
        let temperature = args.temperature.or(file.eval.temperature).unwrap_or(0.0);
        let config = client_config(&args.llm, file, seed)?;
        let transcript_path = args.out.join("transcript.jsonl");
        let transcript = TranscriptLog::create(&transcript_path)
            .map_err(io_context(format!("cannot create {}", transcript_path.display())))?;
        let client = ChatClient::from_env(config)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_transcript(transcript);
        let settings = solve_settings(&args.llm, file, temperature);
        let outcome = runtime()?.block_on(solve_dataset_each(&client, &instances, &settings, |r| sink.push(r)));
        if let Err(e) = outcome {
            sink.finish()?;
            return Err(solve_error(e));
        }
    }
    let records = sink.finish()?;

    let breakdown = score_breakdown_with(&records, &instances, &cells).map_err(|e| CliError::Failed(e.to_string()))?;
    for (name, fmt) in [("breakdown.txt", BreakdownFormat::Text), ("breakdown.json", BreakdownFormat::Json)] {
        let path = args.out.join(name);
        fs::write(&path, render_breakdown(&breakdown, fmt)).map_err(io_context(format!("cannot write {}", path.display())))?;
    }
    print!("{}", render_breakdown(&breakdown, format));
    Ok(EXIT_OK)
}

pub fn cmd_sweep(args: &SweepArgs, file: &FileConfig, seed: u64) -> Result<u8, CliError> {
    let instances = load_dataset(&args.dataset, DatasetFormat::Json)?;
    let cells = parse_cells(args.cells.as_deref(), file)?;
    let temperatures = match args.temps.as_deref().or(file.sweep.temps.as_deref()) {
        Some(spec) => parse_temperatures(spec).map_err(|e| CliError::Config(e.to_string()))?,
        None => default_temperatures(),
    };
    let config = client_config(&args.llm, file, seed)?;
    let client = ChatClient::from_env(config).map_err(|e| CliError::Config(e.to_string()))?;
    let settings = solve_settings(&args.llm, file, 0.0);
    let dataset_path = fs::canonicalize(&args.dataset).unwrap_or_else(|_| args.dataset.clone());
    let plan = SweepPlan {
        temperatures,
        repeats_per_temperature: args.repeats.or(file.sweep.repeats).unwrap_or(DEFAULT_REPEATS),
        dataset: DatasetRef {
            path: dataset_path.display().to_string(),
            sha256: dataset_hash(&instances),
        },
        solver: SolverRef::describe(&client, &settings),
        seed,
        overall_cells: cells,
    };
    plan.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let state = args.out.join("state");
    if state.join(MANIFEST_FILE).exists() && !args.resume {
        return Err(CliError::Config(format!(
            "{} already holds a sweep; pass --resume to continue it or choose another --out",
            state.display()
        )));
    }
    let result = runtime()?
        .block_on(run_sweep(&plan, &client, &settings, &instances, &state))
        .map_err(|e| match e {
            SweepError::Solve(e) => solve_error(e),
            SweepError::PlanMismatch { .. } => CliError::Config(format!(
                "{e}. The flags or dataset differ from the run being resumed; use the original settings or a new --out"
            )),
            SweepError::Io { .. } | SweepError::CorruptState { .. } | SweepError::InvalidPlan(_) => CliError::Config(e.to_string()),
            other => CliError::Failed(other.to_string()),
        })?;

    let curves = args.out.join("curves");
    let written = render_curves(&result, &curves, !args.no_svg).map_err(|e| CliError::Failed(e.to_string()))?;
    let result_path = args.out.join("sweep_result.json");
    fs::write(&result_path, serde_json::to_string_pretty(&result).expect("result serializes"))
        .map_err(io_context(format!("cannot write {}", result_path.display())))?;

    println!("{:>11}  {:>8}  {:>8}", "temperature", "overall", "stddev");
    for point in &result.points {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"));
        println!(
            "{:>11.2}  {:>8}  {:>8}",
            point.temperature,
            show(point.mean(Cell::Overall)),
            show(point.stddev(Cell::Overall))
        );
    }
    println!("wrote {} curve files to {}", written.len(), curves.display());
    Ok(EXIT_OK)
}
