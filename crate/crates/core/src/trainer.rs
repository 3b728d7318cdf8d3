//! Structured perceptron training: sequential, locked parallel, lock-free
//! parallel, and a deterministic simulation of fully delayed parallel updates.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DependencyTree, Sentence};
use crate::features::{FeatureConfig, FeatureError, FeatureVector, PreparedSentence};
use crate::model::WeightModel;
use crate::scoring;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Sequential,
    Locked,
    #[serde(rename = "lockfree")]
    LockFree,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Sequential => "sequential",
            TrainMode::Locked => "locked",
            TrainMode::LockFree => "lockfree",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(TrainMode::Sequential),
            "locked" => Ok(TrainMode::Locked),
            "lockfree" | "lock-free" => Ok(TrainMode::LockFree),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub threads: usize,
    pub mode: TrainMode,
    pub seed: u64,
    pub shuffle: bool,
    /// Stop after the first epoch without mistakes.
    pub stop_when_converged: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            threads: 1,
            mode: TrainMode::Sequential,
            seed: 1,
            shuffle: true,
            stop_when_converged: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        if self.threads == 0 {
            return Err(TrainError::Config("threads must be positive".into()));
        }
        if self.mode == TrainMode::Sequential && self.threads != 1 {
            return Err(TrainError::Config(format!(
                "sequential mode runs one thread, got {}",
                self.threads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mode: String,
    pub k: usize,
    pub mistakes: u64,
    pub seconds: f64,
    pub updates: u64,
    pub cumulative_updates: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_uas: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub mode: String,
    pub k: usize,
    pub epochs: Vec<EpochRecord>,
    /// Full-delay runs: number of updates applied in each time step.
    pub steps: Vec<usize>,
    pub total_updates: u64,
    pub total_mistakes: u64,
    pub converged: bool,
    /// Updates whose predicted tree scored below gold under the scores it
    /// was decoded with.
    pub validity_violations: u64,
}

impl TrainTrace {
    /// Time steps that applied exactly `k` updates.
    pub fn full_steps(&self) -> usize {
        self.steps.iter().filter(|&&m| m == self.k).count()
    }

    /// Time steps that found fewer than `k` mistakes.
    pub fn partial_steps(&self) -> usize {
        self.steps.len() - self.full_steps()
    }

    pub fn epoch_mistakes(&self) -> Vec<u64> {
        self.epochs.iter().map(|e| e.mistakes).collect()
    }

    /// One JSON record per line: per-epoch records, then a summary record.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "summary": true,
            "mode": self.mode,
            "k": self.k,
            "total_mistakes": self.total_mistakes,
            "total_updates": self.total_updates,
            "full_steps": self.full_steps(),
            "partial_steps": self.partial_steps(),
            "converged": self.converged,
            "validity_violations": self.validity_violations,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("refusing to train on an empty corpus")]
    EmptyCorpus,
    #[error("training sentence {0} has a non-projective gold tree")]
    NonProjective(usize),
    #[error("training sentence {index}: tree length {tree} does not match sentence length {sentence}")]
    LengthMismatch { index: usize, sentence: usize, tree: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("failed to spawn worker thread: {source}")]
    Spawn {
        source: std::io::Error,
        partial: Box<TrainTrace>,
    },
}

/// A training example with everything that does not depend on α cached.
pub struct Example {
    pub prepared: PreparedSentence,
    pub gold: DependencyTree,
    pub gold_features: FeatureVector,
}

/// Validates the corpus and caches hashed tokens and gold features.
pub fn prepare_examples(
    corpus: &[(Sentence, DependencyTree)],
    config: &FeatureConfig,
) -> Result<Vec<Example>, TrainError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    corpus
        .iter()
        .enumerate()
        .map(|(i, (s, t))| {
            if s.len() != t.len() {
                return Err(TrainError::LengthMismatch {
                    index: i,
                    sentence: s.len(),
                    tree: t.len(),
                });
            }
            if !t.is_projective() {
                return Err(TrainError::NonProjective(i));
            }
            let prepared = PreparedSentence::new(s);
            let gold_features = prepared.tree_vector(t, config);
            Ok(Example {
                prepared,
                gold: t.clone(),
                gold_features,
            })
        })
        .collect()
}

#[derive(Default)]
struct EpochCounters {
    mistakes: AtomicU64,
    updates: AtomicU64,
    violations: AtomicU64,
}

/// Decode one example and update on a mistake. `lock` is held shared while
/// reading weights and exclusively while writing when present.
fn visit(model: &WeightModel, ex: &Example, lock: Option<&RwLock<()>>, counters: &EpochCounters) {
    let decoded = {
        let _guard = lock.map(|l| l.read().unwrap_or_else(|e| e.into_inner()));
        scoring::decode(model, &ex.prepared)
    };
    if decoded.tree == ex.gold {
        return;
    }
    counters.mistakes.fetch_add(1, Ordering::Relaxed);
    if decoded.score < decoded.score_of(&ex.gold) {
        counters.violations.fetch_add(1, Ordering::Relaxed);
    }
    let predicted = ex.prepared.tree_vector(&decoded.tree, model.config());
    let delta = ex.gold_features.difference(&predicted);
    let _guard = lock.map(|l| l.write().unwrap_or_else(|e| e.into_inner()));
    model.apply_delta(&delta);
    counters.updates.fetch_add(1, Ordering::Relaxed);
}

/// Trains a model. The returned model holds the final (unaveraged) weights
/// and the averaging bookkeeping; use [`WeightModel::averaged_weights`] or
/// [`WeightModel::averaged_model`] for the averaged parameters.
pub fn train(
    corpus: &[(Sentence, DependencyTree)],
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
) -> Result<(WeightModel, TrainTrace), TrainError> {
    train_with_observer(corpus, feature_config, train_config, |_, _| None)
}

/// Like [`train`], calling `observer` after every epoch with all workers
/// joined. A returned value is stored as the epoch's `dev_uas`.
pub fn train_with_observer(
    corpus: &[(Sentence, DependencyTree)],
    feature_config: &FeatureConfig,
    train_config: &TrainConfig,
    observer: impl FnMut(&EpochRecord, &WeightModel) -> Option<f64>,
) -> Result<(WeightModel, TrainTrace), TrainError> {
    train_config.validate()?;
    let examples = prepare_examples(corpus, feature_config)?;
    let model = WeightModel::new(feature_config.clone());
    let trace = train_examples(&model, &examples, train_config, observer)?;
    Ok((model, trace))
}

/// Runs training epochs over prepared examples on an existing model.
pub fn train_examples(
    model: &WeightModel,
    examples: &[Example],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &WeightModel) -> Option<f64>,
) -> Result<TrainTrace, TrainError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let k = cfg.threads;
    let mut trace = TrainTrace {
        mode: cfg.mode.name().to_string(),
        k,
        ..TrainTrace::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let lock = RwLock::new(());
    let lock = (cfg.mode == TrainMode::Locked).then_some(&lock);

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let counters = EpochCounters::default();
        let cursor = AtomicUsize::new(0);
        let worker = || loop {
            let i = cursor.fetch_add(1, Ordering::Relaxed);
            let Some(&idx) = order.get(i) else { break };
            visit(model, &examples[idx], lock, &counters);
        };

        let start = Instant::now();
        if cfg.mode == TrainMode::Sequential {
            worker();
        } else {
            let spawned: Result<(), std::io::Error> = std::thread::scope(|scope| {
                let mut handles = Vec::with_capacity(k);
                for w in 0..k {
                    let h = std::thread::Builder::new()
                        .name(format!("perceptron-{w}"))
                        .spawn_scoped(scope, worker)?;
                    handles.push(h);
                }
                for h in handles {
                    if let Err(panic) = h.join() {
                        std::panic::resume_unwind(panic);
                    }
                }
                Ok(())
            });
            if let Err(source) = spawned {
                return Err(TrainError::Spawn {
                    source,
                    partial: Box::new(trace),
                });
            }
        }
        let seconds = start.elapsed().as_secs_f64();

        let mistakes = counters.mistakes.load(Ordering::Relaxed);
        let updates = counters.updates.load(Ordering::Relaxed);
        trace.total_mistakes += mistakes;
        trace.total_updates += updates;
        trace.validity_violations += counters.violations.load(Ordering::Relaxed);
        let mut record = EpochRecord {
            epoch,
            mode: trace.mode.clone(),
            k,
            mistakes,
            seconds,
            updates,
            cumulative_updates: trace.total_updates,
            dev_uas: None,
        };
        record.dev_uas = observer(&record, model);
        log::debug!(
            "epoch {epoch}: {mistakes} mistakes, {seconds:.3}s ({} k={k})",
            trace.mode
        );
        trace.epochs.push(record);
        if mistakes == 0 {
            trace.converged = true;
            if cfg.stop_when_converged {
                break;
            }
        }
    }
    Ok(trace)
}

/// Worst-case schedule: in each time step, `k` examples misclassified by the
/// same frozen weights are decoded against those weights and all `k`
/// updates are applied afterwards.
pub fn train_full_delay(
    corpus: &[(Sentence, DependencyTree)],
    feature_config: &FeatureConfig,
    k: usize,
    max_steps: usize,
) -> Result<TrainTrace, TrainError> {
    train_full_delay_model(corpus, feature_config, k, max_steps).map(|(_, trace)| trace)
}

/// [`train_full_delay`] returning the trained model as well.
pub fn train_full_delay_model(
    corpus: &[(Sentence, DependencyTree)],
    feature_config: &FeatureConfig,
    k: usize,
    max_steps: usize,
) -> Result<(WeightModel, TrainTrace), TrainError> {
    let examples = prepare_examples(corpus, feature_config)?;
    let model = WeightModel::new(feature_config.clone());
    let trace = full_delay_examples(&model, &examples, k, max_steps)?;
    Ok((model, trace))
}

/// Full-delay simulation starting from the model's current weights.
pub fn full_delay_examples(
    model: &WeightModel,
    examples: &[Example],
    k: usize,
    max_steps: usize,
) -> Result<TrainTrace, TrainError> {
    if k == 0 {
        return Err(TrainError::Config("k must be positive".into()));
    }
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let n = examples.len();
    let mut trace = TrainTrace {
        mode: "full-delay".into(),
        k,
        ..TrainTrace::default()
    };
    let mut cursor = 0usize;
    let mut batch: Vec<Vec<(u32, i64)>> = Vec::with_capacity(k);
    while trace.steps.len() < max_steps {
        batch.clear();
        let mut scanned = 0;
        while scanned < n && batch.len() < k {
            let ex = &examples[cursor];
            cursor = (cursor + 1) % n;
            scanned += 1;
            let decoded = scoring::decode(model, &ex.prepared);
            if decoded.tree == ex.gold {
                continue;
            }
            if decoded.score < decoded.score_of(&ex.gold) {
                trace.validity_violations += 1;
            }
            let predicted = ex.prepared.tree_vector(&decoded.tree, model.config());
            batch.push(ex.gold_features.difference(&predicted));
        }
        if batch.is_empty() {
            trace.converged = true;
            break;
        }
        for delta in &batch {
            model.apply_delta(delta);
        }
        let m = batch.len() as u64;
        trace.total_mistakes += m;
        trace.total_updates += m;
        trace.steps.push(batch.len());
        if batch.len() < k {
            log::debug!("full-delay step {} is partial: {} of {k}", trace.steps.len(), batch.len());
        }
    }
    Ok(trace)
}
