mod common;

use parperc::convlab::{compute_margin, compute_radius, generate_separable_corpus, SeparableSpec};
use parperc::trainer::{full_delay_examples, prepare_examples, train_full_delay};
use parperc::{train, FeatureConfig, ModelOrder, TrainConfig, TrainMode, WeightModel};

fn cfg() -> FeatureConfig {
    FeatureConfig::new(18, ModelOrder::First).unwrap()
}

fn toy(seed: u64) -> parperc::convlab::Corpus {
    let spec = SeparableSpec {
        n_sentences: 120,
        seed,
        target_margin: 0.35,
        ..SeparableSpec::default()
    };
    generate_separable_corpus(&spec, &cfg()).unwrap().0
}

fn until_converged(mode: TrainMode, threads: usize, shuffle: bool) -> TrainConfig {
    TrainConfig {
        epochs: 500,
        threads,
        mode,
        seed: 5,
        shuffle,
        stop_when_converged: true,
    }
}

#[test]
fn sequential_converges_within_mistake_bound() {
    let corpus = toy(1);
    let (_, trace) = train(&corpus, &cfg(), &until_converged(TrainMode::Sequential, 1, true)).unwrap();
    assert!(trace.converged);
    assert_eq!(*trace.epoch_mistakes().last().unwrap(), 0);
    let sep = generate_separable_corpus(
        &SeparableSpec {
            n_sentences: 120,
            seed: 1,
            target_margin: 0.35,
            ..SeparableSpec::default()
        },
        &cfg(),
    )
    .unwrap()
    .1;
    let (delta, radius) = (compute_margin(&corpus, &sep, &cfg()).unwrap(), compute_radius(&corpus, &cfg()).unwrap());
    assert!(trace.total_mistakes as f64 <= radius * radius / (delta * delta));
    assert_eq!(trace.validity_violations, 0);
}

#[test]
fn lockfree_single_thread_equals_sequential() {
    let corpus = toy(2);
    let mut c = until_converged(TrainMode::Sequential, 1, true);
    c.stop_when_converged = false;
    c.epochs = 4;
    let (m_seq, t_seq) = train(&corpus, &cfg(), &c).unwrap();
    c.mode = TrainMode::LockFree;
    let (m_lf, t_lf) = train(&corpus, &cfg(), &c).unwrap();
    assert_eq!(t_seq.epoch_mistakes(), t_lf.epoch_mistakes());
    assert_eq!(t_seq.total_updates, t_lf.total_updates);
    assert_eq!(m_seq.raw_weights(), m_lf.raw_weights());
    assert_eq!(m_seq.averaged_weights(), m_lf.averaged_weights());
}

#[test]
fn locked_and_lockfree_four_threads_converge() {
    let corpus = toy(3);
    for mode in [TrainMode::Locked, TrainMode::LockFree] {
        let (model, trace) = train(&corpus, &cfg(), &until_converged(mode, 4, true)).unwrap();
        assert!(trace.converged, "{mode:?}");
        let examples = prepare_examples(&corpus, &cfg()).unwrap();
        // an extra pass over the converged weights finds nothing to fix
        let again = full_delay_examples(&model, &examples, 1, 10).unwrap();
        assert_eq!(again.steps.len(), 0, "{mode:?}");
        if mode == TrainMode::Locked {
            assert_eq!(trace.validity_violations, 0);
        }
    }
}

#[test]
fn full_delay_one_equals_in_order_sequential() {
    let corpus = toy(4);
    let (_, seq) = train(&corpus, &cfg(), &until_converged(TrainMode::Sequential, 1, false)).unwrap();
    let fd = train_full_delay(&corpus, &cfg(), 1, 100_000).unwrap();
    assert!(fd.converged);
    assert_eq!(fd.steps.len() as u64, seq.total_mistakes);
    assert_eq!(fd.full_steps(), fd.steps.len());
}

#[test]
fn full_delay_on_converged_weights_takes_no_steps() {
    let corpus = toy(5);
    let (model, _) = train(&corpus, &cfg(), &until_converged(TrainMode::Sequential, 1, true)).unwrap();
    let examples = prepare_examples(&corpus, &cfg()).unwrap();
    let frozen = WeightModel::from_weights(cfg(), &model.raw_weights()).unwrap();
    let trace = full_delay_examples(&frozen, &examples, 4, 1000).unwrap();
    assert!(trace.steps.is_empty());
    assert!(trace.converged);
}

#[test]
fn full_delay_steps_bounded_for_several_k() {
    let spec = SeparableSpec {
        n_sentences: 120,
        seed: 6,
        target_margin: 0.35,
        ..SeparableSpec::default()
    };
    let (corpus, sep) = generate_separable_corpus(&spec, &cfg()).unwrap();
    let delta = compute_margin(&corpus, &sep, &cfg()).unwrap();
    let radius = compute_radius(&corpus, &cfg()).unwrap();
    for k in [2, 4, 8] {
        let trace = train_full_delay(&corpus, &cfg(), k, 100_000).unwrap();
        assert!(trace.converged);
        assert!(trace.full_steps() as f64 <= radius * radius / (delta * delta), "k={k}");
        assert_eq!(trace.validity_violations, 0);
        assert!(trace.steps.iter().all(|&m| m >= 1 && m <= k));
    }
}

#[test]
fn sequential_and_full_delay_are_reproducible() {
    let corpus = toy(7);
    let c = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let (a, ta) = train(&corpus, &cfg(), &c).unwrap();
    let (b, tb) = train(&corpus, &cfg(), &c).unwrap();
    assert_eq!(a.averaged_weights(), b.averaged_weights());
    assert_eq!(ta.epoch_mistakes(), tb.epoch_mistakes());
    let f1 = train_full_delay(&corpus, &cfg(), 4, 10_000).unwrap();
    let f2 = train_full_delay(&corpus, &cfg(), 4, 10_000).unwrap();
    assert_eq!(f1.steps, f2.steps);
}

#[test]
fn sequential_rejects_extra_threads() {
    let c = TrainConfig {
        threads: 2,
        ..TrainConfig::default()
    };
    assert!(train(&toy(8), &cfg(), &c).is_err());
}
