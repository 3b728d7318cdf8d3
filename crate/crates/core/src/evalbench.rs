//! Attachment accuracy, per-pass timing with speedups, and memory sampling.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DependencyTree, Sentence};
use crate::features::FeatureConfig;
use crate::model::WeightModel;
use crate::scoring;
use crate::trainer::{self, TrainConfig, TrainError, TrainMode};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("contract violation: predicted tree has {pred} tokens, gold has {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("contract violation: {pred} predicted trees for {gold} gold trees")]
    CountMismatch { pred: usize, gold: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub uas: f64,
    pub correct_heads: u64,
    pub total_tokens: u64,
}

impl EvalResult {
    fn from_counts(correct_heads: u64, total_tokens: u64) -> Self {
        let uas = if total_tokens == 0 {
            0.0
        } else {
            correct_heads as f64 / total_tokens as f64
        };
        EvalResult {
            uas,
            correct_heads,
            total_tokens,
        }
    }

    pub fn merge(&self, other: &EvalResult) -> EvalResult {
        EvalResult::from_counts(
            self.correct_heads + other.correct_heads,
            self.total_tokens + other.total_tokens,
        )
    }
}

/// Fraction of real tokens whose predicted head matches gold.
pub fn uas(pred: &DependencyTree, gold: &DependencyTree) -> Result<EvalResult, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let correct = pred
        .heads()
        .iter()
        .zip(gold.heads())
        .filter(|(p, g)| p == g)
        .count();
    Ok(EvalResult::from_counts(correct as u64, gold.len() as u64))
}

/// Token-weighted UAS over aligned lists of trees.
pub fn corpus_uas(pred: &[DependencyTree], gold: &[DependencyTree]) -> Result<EvalResult, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::CountMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    pred.iter()
        .zip(gold)
        .try_fold(EvalResult::default(), |acc, (p, g)| Ok(acc.merge(&uas(p, g)?)))
}

/// Parses every sentence of `gold` with `model` and scores it.
pub fn evaluate_model(model: &WeightModel, gold: &[(Sentence, DependencyTree)]) -> EvalResult {
    gold.iter().fold(EvalResult::default(), |acc, (s, t)| {
        let pred = scoring::parse_sentence(model, s);
        acc.merge(&uas(&pred, t).expect("parser keeps sentence length"))
    })
}

/// Resident set size of this process, from /proc.
pub fn current_rss_bytes() -> Option<u64> {
    proc_status_kb("VmRSS:").map(|kb| kb * 1024)
}

/// High-water mark of the resident set size of this process.
pub fn peak_rss_bytes() -> Option<u64> {
    proc_status_kb("VmHWM:").map(|kb| kb * 1024)
}

fn proc_status_kb(field: &str) -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with(field))?;
    line[field.len()..].trim().trim_end_matches("kB").trim().parse().ok()
}

/// Polls the resident set size in the background and keeps the maximum.
pub struct RssSampler {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<u64>,
}

impl RssSampler {
    pub fn start(interval: Duration) -> RssSampler {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let mut peak = current_rss_bytes().unwrap_or(0);
            while !flag.load(Ordering::Relaxed) {
                peak = peak.max(current_rss_bytes().unwrap_or(0));
                std::thread::sleep(interval);
            }
            peak.max(current_rss_bytes().unwrap_or(0))
        });
        RssSampler { stop, handle }
    }

    pub fn finish(self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.join().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mode: TrainMode,
    pub k: usize,
    pub seconds_per_pass: f64,
    pub speedup: f64,
    pub peak_memory: u64,
    /// Every timed pass, in order.
    pub pass_seconds: Vec<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Times full training passes for each (mode, threads) cell.
///
/// Each cell trains a fresh model for `1 + repetitions` passes; the first
/// pass is a warm-up and is not timed. The sequential cell is the speedup
/// baseline and is added when the grid lacks it.
pub fn bench(
    corpus: &[(Sentence, DependencyTree)],
    feature_config: &FeatureConfig,
    grid: &[(TrainMode, usize)],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<BenchResult>, TrainError> {
    let repetitions = repetitions.max(1);
    let mut cells: Vec<(TrainMode, usize)> = Vec::new();
    if !grid.contains(&(TrainMode::Sequential, 1)) {
        cells.push((TrainMode::Sequential, 1));
    }
    cells.extend_from_slice(grid);

    let examples = trainer::prepare_examples(corpus, feature_config)?;
    let mut rows = Vec::with_capacity(cells.len());
    for (mode, k) in cells {
        let cfg = TrainConfig {
            epochs: 1 + repetitions,
            threads: k,
            mode,
            seed,
            shuffle: true,
            stop_when_converged: false,
        };
        cfg.validate()?;
        let sampler = RssSampler::start(Duration::from_millis(5));
        let model = WeightModel::new(feature_config.clone());
        let trace = trainer::train_examples(&model, &examples, &cfg, |_, _| None)?;
        drop(model);
        let peak_memory = sampler.finish();
        let pass_seconds: Vec<f64> = trace.epochs[1..].iter().map(|e| e.seconds).collect();
        log::info!("bench {} k={k}: {pass_seconds:?}", mode.name());
        rows.push(BenchResult {
            mode,
            k,
            seconds_per_pass: median(&pass_seconds),
            speedup: 0.0,
            peak_memory,
            pass_seconds,
        });
    }
    let baseline = rows
        .iter()
        .find(|r| r.mode == TrainMode::Sequential && r.k == 1)
        .map(|r| r.seconds_per_pass)
        .expect("baseline row always present");
    for r in &mut rows {
        r.speedup = baseline / r.seconds_per_pass;
    }
    Ok(rows)
}

/// `8.1x(55.4s)` style cell.
pub fn format_speedup(speedup: f64, seconds: f64) -> String {
    let secs = if seconds >= 100.0 {
        format!("{seconds:.0}")
    } else if seconds >= 1.0 {
        format!("{seconds:.1}")
    } else {
        format!("{seconds:.3}")
    };
    format!("{speedup:.1}x({secs}s)")
}

fn row_label(mode: TrainMode, k: usize) -> String {
    match mode {
        TrainMode::Sequential => "Structured Perc".to_string(),
        TrainMode::Locked => format!("Locked Para-Perc {k}-thr."),
        TrainMode::LockFree => format!("Lock-free Para-Perc {k}-thr."),
    }
}

/// Plain-text table: model row, speedup with seconds per pass, peak memory.
pub fn render_table(rows: &[BenchResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<30} | {:>16} | {:>12}", "Models", "speedup(s/pass)", "peak MiB");
    let _ = writeln!(out, "{}", "-".repeat(64));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<30} | {:>16} | {:>12.1}",
            row_label(r.mode, r.k),
            format_speedup(r.speedup, r.seconds_per_pass),
            r.peak_memory as f64 / (1024.0 * 1024.0)
        );
    }
    out
}

/// Tab-separated data for plotting speedup and memory against threads.
pub fn plot_data(rows: &[BenchResult]) -> String {
    let mut out = String::from("mode\tk\tseconds_per_pass\tspeedup\tpeak_memory\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.mode.name(),
            r.k,
            r.seconds_per_pass,
            r.speedup,
            r.peak_memory
        );
    }
    out
}
