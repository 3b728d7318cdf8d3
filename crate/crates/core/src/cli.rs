//! `parperc` command line: train, parse, eval, bench and convlab.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::convlab::{self, ConvlabError, SeparableSpec};
use crate::corpus::{self, CorpusError, DependencyTree};
use crate::evalbench::{self, BenchResult, EvalError};
use crate::features::{FeatureConfig, FeatureError, ModelOrder};
use crate::model::{self, ModelError, WeightModel};
use crate::scoring;
use crate::synth::{self, TreebankSpec};
use crate::trainer::{self, TrainConfig, TrainError, TrainMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(format!("i/o error: {e}"))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidConfig(m) => CliError::Usage(m),
            FeatureError::Contract(m) => CliError::Internal(m),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Usage(m),
            TrainError::Features(f) => f.into(),
            TrainError::Spawn { .. } => CliError::Internal(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ConvlabError> for CliError {
    fn from(e: ConvlabError) -> Self {
        match e {
            ConvlabError::Spec(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "parperc", version, about = "Dependency parser with lock-free parallel perceptron training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a CoNLL-X treebank.
    Train(TrainArgs),
    /// Parse CoNLL-X input (HEAD column ignored) with a trained model.
    Parse(ParseArgs),
    /// Unlabeled attachment score of a prediction file against gold.
    Eval(EvalArgs),
    /// Time training passes across modes and thread counts.
    Bench(BenchArgs),
    /// Measure convergence on a generated separable corpus.
    Convlab(ConvlabArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Sequential,
    Locked,
    Lockfree,
    FullDelay,
}

#[derive(Args, Debug)]
struct FeatureArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=2))]
    order: u32,
    #[arg(long = "hash-bits", default_value_t = crate::features::DEFAULT_HASH_BITS)]
    hash_bits: u32,
}

impl FeatureArgs {
    fn config(&self) -> Result<FeatureConfig, CliError> {
        Ok(FeatureConfig::new(self.hash_bits, ModelOrder::from_u32(self.order)?)?)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training treebank, `-` for stdin.
    corpus: String,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, value_enum, default_value = "sequential")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    model: PathBuf,
    /// Trace log path; defaults to `<model>.trace.jsonl`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Keep corpus order instead of shuffling each epoch.
    #[arg(long)]
    no_shuffle: bool,
    /// Held-out treebank evaluated with averaged weights after every epoch.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Time-step cap for full-delay mode.
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: usize,
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input, `-` for stdin.
    #[arg(default_value = "-")]
    input: String,
    /// Output path; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    gold: String,
    pred: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Treebank to train on; a synthetic one is generated when absent.
    corpus: Option<String>,
    #[arg(long, default_value_t = 2000)]
    synthetic: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    threads: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "locked,lockfree")]
    modes: Vec<String>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON-lines record per row.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Tab-separated plot data.
    #[arg(long = "plot-data")]
    plot_data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvlabArgs {
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 200)]
    sentences: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "min-len", default_value_t = 2)]
    min_len: usize,
    #[arg(long = "max-len", default_value_t = 5)]
    max_len: usize,
    #[arg(long = "hash-bits", default_value_t = 18)]
    hash_bits: u32,
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    /// Print one JSON record instead of text.
    #[arg(long)]
    json: bool,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("parperc: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(a, out),
        Command::Parse(a) => cmd_parse(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Convlab(a) => cmd_convlab(a, out),
    }
}

fn read_input(path: &str) -> Result<String, CliError> {
    let mut text = String::new();
    if path == "-" {
        io::stdin().read_to_string(&mut text)?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| CliError::Data(format!("{path}: {e}")))?;
    }
    Ok(text)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fc = a.features.config()?;
    let (corpus, dropped) = corpus::load_training_corpus(&read_input(&a.corpus)?)?;
    let dev = match &a.dev {
        Some(p) => Some(corpus::parse_conll(&read_input(&p.to_string_lossy())?)?),
        None => None,
    };

    let (model, trace) = match a.mode {
        ModeArg::FullDelay => trainer::train_full_delay_model(&corpus, &fc, a.threads, a.max_steps)?,
        mode => {
            let mode = match mode {
                ModeArg::Sequential => TrainMode::Sequential,
                ModeArg::Locked => TrainMode::Locked,
                _ => TrainMode::LockFree,
            };
            let cfg = TrainConfig {
                epochs: a.epochs,
                threads: a.threads,
                mode,
                seed: a.seed,
                shuffle: !a.no_shuffle,
                stop_when_converged: false,
            };
            trainer::train_with_observer(&corpus, &fc, &cfg, |_, m| {
                dev.as_ref()
                    .map(|d| evalbench::evaluate_model(&m.averaged_model(), d).uas)
            })?
        }
    };

    let averaged = model.averaged_weights();
    let file = File::create(&a.model).map_err(|e| CliError::Data(format!("{}: {e}", a.model.display())))?;
    model::save_model(BufWriter::new(file), &fc, &averaged)?;

    let mut log = trace.to_log();
    let process = serde_json::json!({
        "process": true,
        "sentences": corpus.len(),
        "dropped_non_projective": dropped,
        "peak_rss_bytes": evalbench::peak_rss_bytes(),
    });
    log.push_str(&process.to_string());
    log.push('\n');
    let trace_path = a.trace.clone().unwrap_or_else(|| {
        let mut p = a.model.clone().into_os_string();
        p.push(".trace.jsonl");
        PathBuf::from(p)
    });
    write_file(&trace_path, &log)?;
    writeln!(
        out,
        "trained {} sentences ({} dropped as non-projective), {} updates, model {}",
        corpus.len(),
        dropped,
        trace.total_updates,
        a.model.display()
    )?;
    Ok(())
}

fn load_model_file(path: &Path) -> Result<WeightModel, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (cfg, weights) = model::load_model(BufReader::new(file))?;
    Ok(WeightModel::from_weights(cfg, &weights)?)
}

fn cmd_parse(a: ParseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model_file(&a.model)?;
    let sentences = corpus::parse_sentences(&read_input(&a.input)?)?;
    let pairs: Vec<_> = sentences
        .into_iter()
        .map(|s| {
            let t = scoring::parse_sentence(&model, &s);
            (s, t)
        })
        .collect();
    let text = corpus::write_conll(&pairs);
    match &a.output {
        Some(p) => write_file(p, &text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.gold == "-" && a.pred == "-" {
        return Err(CliError::Usage("only one of gold/pred may be stdin".into()));
    }
    let gold = corpus::parse_conll(&read_input(&a.gold)?)?;
    let pred = corpus::parse_conll(&read_input(&a.pred)?)?;
    let gold_trees: Vec<DependencyTree> = gold.into_iter().map(|(_, t)| t).collect();
    let pred_trees: Vec<DependencyTree> = pred.into_iter().map(|(_, t)| t).collect();
    let r = evalbench::corpus_uas(&pred_trees, &gold_trees)?;
    writeln!(
        out,
        "UAS {:.2} ({} / {} tokens)",
        100.0 * r.uas,
        r.correct_heads,
        r.total_tokens
    )?;
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fc = a.features.config()?;
    let corpus = match &a.corpus {
        Some(p) => corpus::load_training_corpus(&read_input(p)?)?.0,
        None => synth::synthetic_treebank(&TreebankSpec {
            n_sentences: a.synthetic,
            seed: a.seed,
            ..TreebankSpec::default()
        }),
    };
    let mut grid = Vec::new();
    for m in &a.modes {
        let mode: TrainMode = m.parse().map_err(CliError::Usage)?;
        if mode == TrainMode::Sequential {
            grid.push((mode, 1));
            continue;
        }
        for &k in &a.threads {
            if k == 0 {
                return Err(CliError::Usage("thread counts must be positive".into()));
            }
            grid.push((mode, k));
        }
    }
    let rows = evalbench::bench(&corpus, &fc, &grid, a.reps, a.seed)?;
    out.write_all(evalbench::render_table(&rows).as_bytes())?;
    if let Some(p) = &a.records {
        let lines: String = rows
            .iter()
            .map(|r: &BenchResult| serde_json::to_string(r).expect("serializable") + "\n")
            .collect();
        write_file(p, &lines)?;
    }
    if let Some(p) = &a.plot_data {
        write_file(p, &evalbench::plot_data(&rows))?;
    }
    Ok(())
}

fn cmd_convlab(a: ConvlabArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be positive".into()));
    }
    let fc = FeatureConfig::new(a.hash_bits, ModelOrder::First)?;
    let spec = SeparableSpec {
        n_sentences: a.sentences,
        min_len: a.min_len,
        max_len: a.max_len,
        target_margin: a.delta,
        seed: a.seed,
        ..SeparableSpec::default()
    };
    let (corpus, separator) = convlab::generate_separable_corpus(&spec, &fc)?;
    let delta = convlab::compute_margin(&corpus, &separator, &fc)?;
    let radius = convlab::compute_radius(&corpus, &fc)?;

    let full = trainer::train_full_delay(&corpus, &fc, a.k, a.max_steps)?;
    let worst = convlab::verify_bounds(&full, delta, radius, a.k);

    let lockfree_cfg = TrainConfig {
        epochs: 1000,
        threads: a.k,
        mode: TrainMode::LockFree,
        seed: a.seed,
        shuffle: true,
        stop_when_converged: true,
    };
    let (_, lockfree) = trainer::train(&corpus, &fc, &lockfree_cfg)?;
    let optimal = convlab::verify_bounds(&lockfree, delta, radius, a.k);

    if a.json {
        let record = serde_json::json!({
            "sentences": corpus.len(),
            "separator_support": separator.support(),
            "full_delay": worst,
            "full_delay_converged": full.converged,
            "lockfree": optimal,
            "lockfree_converged": lockfree.converged,
        });
        writeln!(out, "{record}")?;
    } else {
        writeln!(out, "corpus: {} sentences, separator support {}", corpus.len(), separator.support())?;
        writeln!(out, "\n[full-delay]  converged={}", full.converged)?;
        write!(out, "{worst}")?;
        writeln!(out, "\n[lock-free]   converged={}", lockfree.converged)?;
        write!(out, "{optimal}")?;
    }
    Ok(())
}
