//! Command implementations behind the `seqclass` binary.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 on a usage or input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use seqclass::baseline::{comparison_csv, compare, train_baseline, BaselineKind, EvalSummary};
use seqclass::corpus::{balanced_sample, gen_synthetic, split, Dataset, Task, Vocabulary};
use seqclass::model_io::{self, Provenance};
use seqclass::nn::Activation;
use seqclass::optim::OptimizerKind;
use seqclass::train::{evaluate, evaluate_parallel, predict, train_model_with, Metrics, TrainingConfig};

pub mod sweep;

use sweep::{RunRow, RunSpec, SweepGrid, CSV_HEADER};

pub const THREADS_ENV: &str = "SEQCLASS_THREADS";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<seqclass::Error> for CliError {
    fn from(e: seqclass::Error) -> Self {
        match e {
            seqclass::Error::NonFinite(_) => CliError::Run(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "seqclass", version, about = "LSTM text classifier: training, evaluation, sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a frequency-ranked vocabulary from a dataset.
    BuildVocab(BuildVocabArgs),
    /// Train a model and write a bundle plus report.
    Train(TrainArgs),
    /// Print metrics of a saved model on a dataset.
    Eval(EvalArgs),
    /// Score text with a saved model.
    Predict(PredictArgs),
    /// Train one model per grid point and write a CSV report.
    Sweep(SweepArgs),
    /// Write a synthetic dataset.
    GenSynth(GenSynthArgs),
    /// Split a dataset into train and test files.
    Split(SplitArgs),
    /// Train a bag-of-words baseline and compare it with a saved model.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub max_vocab: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Vocabulary TSV; built from the training set when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Size cap when building the vocabulary.
    #[arg(long, default_value_t = 20_000)]
    pub max_vocab: usize,
    /// TOML training config; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Expected vocabulary size; a different vocabulary is an error.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub embed_units: Option<usize>,
    #[arg(long)]
    pub lstm_units: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bundle directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["text", "stdin"]))]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub text: Option<String>,
    /// Read one message per line from standard input.
    #[arg(long)]
    pub stdin: bool,
    /// Names for class 0 and class 1.
    #[arg(long, default_value = "NON-ACTIONABLE,ACTIONABLE")]
    pub labels: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Holds `vocab-<V>.tsv` per vocabulary size; missing ones are built
    /// from the training set.
    #[arg(long)]
    pub vocab_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Concurrent runs, capped by SEQCLASS_THREADS.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub task: Task,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    /// Downsample the majority class first.
    #[arg(long)]
    pub balanced: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Row name in the output table.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "logreg")]
    pub baseline: BaselineKind,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command, stdin, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::BuildVocab(a) => build_vocab(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Predict(a) => predict_cmd(&a, stdin, out),
        Command::Sweep(a) => sweep_cmd(&a, out),
        Command::GenSynth(a) => gen_synth(&a, out),
        Command::Split(a) => split_cmd(&a, out),
        Command::Compare(a) => compare_cmd(&a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    out.write_fmt(text)
        .and_then(|()| out.write_all(b"\n"))
        .map_err(|e| CliError::Run(format!("stdout: {e}")))
}

fn build_vocab(a: &BuildVocabArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let data = Dataset::load(&a.input)?;
    let vocab = Vocabulary::build(&data, a.max_vocab)?;
    vocab.save(&a.out)?;
    say(out, format_args!("{} tokens -> {}", vocab.len(), a.out.display()))
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainingConfig, CliError> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| output_err(p, e))?;
            TrainingConfig::from_toml(&text)?
        }
        None => TrainingConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {$(if let Some(v) = a.$field { c.$field = v; })*};
    }
    take!(embed_units, lstm_units, dropout, optimizer, batch_size, epochs, max_len, activation, seed);
    if a.learning_rate.is_some() {
        c.learning_rate = a.learning_rate;
    }
    if a.clip_norm.is_some() {
        c.clip_norm = a.clip_norm;
    }
    if a.vocab_size.is_some() {
        c.vocab_size = a.vocab_size;
    }
    c.validate()?;
    Ok(c)
}

fn load_or_build_vocab(vocab: Option<&Path>, train: &Dataset, max_vocab: usize) -> Result<Vocabulary, CliError> {
    Ok(match vocab {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::build(train, max_vocab)?,
    })
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = resolve_train_config(a)?;
    let train_set = Dataset::load(&a.train)?;
    let test_set = a.test.as_deref().map(Dataset::load).transpose()?;
    let vocab = load_or_build_vocab(a.vocab.as_deref(), &train_set, a.max_vocab)?;
    let model_config = config.model_config(&vocab)?;

    let (model, mut report) = train_model_with(&train_set, &config, &vocab, |epoch, loss| {
        eprintln!("epoch {epoch}/{}  loss {loss:.6}", config.epochs);
    })?;
    if let Some(t) = &test_set {
        report.test = Some(evaluate(&model, &vocab, t)?);
    }
    let provenance = Provenance {
        optimizer: config.optimizer.to_string(),
        learning_rate: config.hyper().learning_rate,
        seed: config.seed,
    };
    model_io::save(&a.out, &model, &vocab, &provenance)?;

    let row = RunRow {
        spec: RunSpec {
            vocab_size: model_config.vocab_size,
            config: config.clone(),
        },
        train_acc: Some(report.train.accuracy()),
        test_acc: report.test.map(|m| m.accuracy()),
        seconds: report.seconds,
        status: "ok".into(),
    };
    let mut w = sweep::csv_writer(Vec::new());
    let header: Vec<&str> = CSV_HEADER.iter().copied().filter(|h| *h != "seconds").collect();
    w.write_record(&header).and_then(|()| w.write_record(row.record(false))).map_err(|e| CliError::Run(e.to_string()))?;
    let csv_bytes = w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
    seqclass::write_atomic(&a.out.join(REPORT_FILE), &csv_bytes)?;
    let summary = report.summary();
    seqclass::write_atomic(&a.out.join(SUMMARY_FILE), summary.as_bytes())?;

    eprintln!("trained in {:.2}s", report.seconds);
    out.write_all(summary.as_bytes()).map_err(|e| CliError::Run(format!("stdout: {e}")))
}

pub fn format_metrics(m: &Metrics) -> String {
    format!(
        "examples {}\naccuracy {:.4}\nmean_loss {:.6}\ntp {} tn {} fp {} fn {}",
        m.total(),
        m.accuracy(),
        m.mean_loss,
        m.true_pos,
        m.true_neg,
        m.false_pos,
        m.false_neg
    )
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, vocab) = model_io::load(&a.model)?;
    let data = Dataset::load(&a.data)?;
    let m = evaluate_parallel(&model, &vocab, &data, a.threads)?;
    say(out, format_args!("{}", format_metrics(&m)))
}

/// Up to four decimals, trailing zeros dropped, at least one digit after the
/// point: 0.96, 0.001, 1.0.
pub fn format_score(score: f64) -> String {
    let s = format!("{score:.4}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

fn parse_labels(spec: &str) -> Result<[String; 2], CliError> {
    match spec.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [neg, pos] if !neg.is_empty() && !pos.is_empty() => Ok([neg.to_string(), pos.to_string()]),
        _ => Err(CliError::Usage(format!("--labels wants two comma-separated names, got {spec:?}"))),
    }
}

fn predict_cmd(a: &PredictArgs, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let labels = parse_labels(&a.labels)?;
    let (model, vocab) = model_io::load(&a.model)?;
    let mut emit = |text: &str| -> Result<(), CliError> {
        let p = predict(&model, &vocab, text)?;
        say(out, format_args!("{}\t{}", format_score(p.score), labels[usize::from(p.label)]))
    };
    if a.stdin {
        for line in stdin.lines() {
            let line = line.map_err(|e| CliError::Usage(format!("stdin: {e}")))?;
            emit(line.strip_suffix('\r').unwrap_or(&line))?;
        }
    } else if let Some(t) = a.text.as_deref().filter(|t| !t.is_empty()) {
        emit(t)?;
    }
    Ok(())
}

/// `--parallel`, capped by the environment variable when it is set.
pub fn worker_count(requested: usize, env: Option<&str>) -> Result<usize, CliError> {
    let requested = requested.max(1);
    match env {
        None => Ok(requested),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(cap) if cap >= 1 => Ok(requested.min(cap)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn sweep_cmd(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.grid).map_err(|e| output_err(&a.grid, e))?;
    let grid = SweepGrid::from_toml(&text)?;
    let threads = worker_count(a.parallel, std::env::var(THREADS_ENV).ok().as_deref())?;
    let train_set = Dataset::load(&a.train)?;
    let test_set = Dataset::load(&a.test)?;
    say(out, format_args!("grid: {} runs", grid.size()))?;

    std::fs::create_dir_all(&a.vocab_dir).map_err(|e| output_err(&a.vocab_dir, e))?;
    let mut vocabs = BTreeMap::new();
    for v in grid.vocab_sizes() {
        let path = a.vocab_dir.join(format!("vocab-{v}.tsv"));
        let vocab = if path.exists() {
            Vocabulary::load(&path)?
        } else {
            let built = Vocabulary::build(&train_set, v)?;
            built.save(&path)?;
            built
        };
        if vocab.len() > v {
            return Err(CliError::Usage(format!("{} holds {} tokens, more than {v}", path.display(), vocab.len())));
        }
        vocabs.insert(v, vocab);
    }

    let file = std::fs::File::create(&a.out).map_err(|e| output_err(&a.out, e))?;
    let mut w = sweep::csv_writer(file);
    w.write_record(CSV_HEADER).and_then(|()| w.flush().map_err(Into::into)).map_err(|e| output_err(&a.out, e))?;
    let specs = grid.runs();
    let total = specs.len();
    let mut done = 0;
    let rows = sweep::run_all(&specs, &train_set, &test_set, &vocabs, threads, |row| {
        done += 1;
        eprintln!("[{done}/{total}] {} ({:.1}s)", row.record(false).join(","), row.seconds);
        w.write_record(row.record(true))?;
        w.flush()
    })?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    say(out, format_args!("wrote {} rows to {}", rows.len(), a.out.display()))?;
    if failed > 0 {
        return Err(CliError::Run(format!("{failed} of {total} runs failed")));
    }
    Ok(())
}

fn gen_synth(a: &GenSynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let data = gen_synthetic(a.task, a.n, a.vocab_size, a.seed)?;
    data.save(&a.out)?;
    say(out, format_args!("{} {} examples -> {}", data.len(), a.task.name(), a.out.display()))
}

fn split_cmd(a: &SplitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut data = Dataset::load(&a.input)?;
    if a.balanced {
        data = balanced_sample(&data, a.seed)?;
    }
    let (train_set, test_set) = split(&data, a.ratio, a.seed)?;
    train_set.save(&a.out_train)?;
    test_set.save(&a.out_test)?;
    say(out, format_args!("{} train / {} test", train_set.len(), test_set.len()))
}

fn compare_cmd(a: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (model, vocab) = model_io::load(&a.model)?;
    let train_set = Dataset::load(&a.train)?;
    let test_set = Dataset::load(&a.test)?;
    let linear = train_baseline(a.baseline, &train_set, &vocab, a.epochs, a.seed)?;
    let lstm = EvalSummary::new("lstm", &test_set, evaluate(&model, &vocab, &test_set)?);
    let base = EvalSummary::new(a.baseline.name(), &test_set, linear.evaluate(&vocab, &test_set));
    let row = compare(&a.task, &lstm, &base)?;
    out.write_all(comparison_csv(&[row]).as_bytes()).map_err(|e| CliError::Run(format!("stdout: {e}")))
}
