mod common;

use std::collections::HashMap;

use parperc::features::{FeatureVector, PreparedSentence};
use parperc::model::{load_model, save_model};
use parperc::{FeatureConfig, ModelOrder, WeightModel};
use proptest::prelude::*;
use rand::Rng;

fn random_fv(rng: &mut impl Rng, range: u32, max_len: usize) -> FeatureVector {
    let len = rng.gen_range(0..=max_len);
    FeatureVector::from_indices((0..len).map(|_| rng.gen_range(0..range)).collect())
}

#[test]
fn fifty_updates_match_map_replay() {
    let mut rng = common::rng(31);
    let cfg = FeatureConfig::new(16, ModelOrder::First).unwrap();
    let model = WeightModel::new(cfg);
    let mut replay: HashMap<u32, i64> = HashMap::new();
    for _ in 0..50 {
        let gold = random_fv(&mut rng, 1 << 16, 40);
        let pred = random_fv(&mut rng, 1 << 16, 40);
        model.perceptron_update(&gold, &pred);
        for &(i, c) in gold.entries() {
            *replay.entry(i).or_default() += c as i64;
        }
        for &(i, c) in pred.entries() {
            *replay.entry(i).or_default() -= c as i64;
        }
    }
    let raw = model.raw_weights();
    for (i, w) in raw.iter().enumerate() {
        assert_eq!(*w, *replay.get(&(i as u32)).unwrap_or(&0) as f64);
    }
}

#[test]
fn tree_score_equals_sum_of_edge_scores() {
    let mut rng = common::rng(32);
    for order in [ModelOrder::First, ModelOrder::Second] {
        let cfg = FeatureConfig::new(16, order).unwrap();
        let weights: Vec<f64> = (0..cfg.table_size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let model = WeightModel::from_weights(cfg.clone(), &weights).unwrap();
        for _ in 0..50 {
            let n = rng.gen_range(1..12);
            let s = common::random_sentence(&mut rng, n, 40, 6);
            let p = PreparedSentence::new(&s);
            let t = common::random_projective_tree(&mut rng, n);
            let whole = model.score_features(&p.tree_vector(&t, &cfg));
            let mut parts: f64 = t
                .edges()
                .map(|(h, c)| model.score_features(&p.edge_vector(h, c, &cfg).unwrap()))
                .sum();
            if order == ModelOrder::Second {
                parperc::features::for_each_sibling_part(&t, |h, c, sib| {
                    parts += model.score_features(&p.sibling_vector(h, c, sib, &cfg).unwrap());
                });
            }
            assert!((whole - parts).abs() < 1e-9);
        }
    }
}

#[test]
fn save_load_round_trip() {
    let mut rng = common::rng(33);
    let cfg = FeatureConfig::new(16, ModelOrder::Second).unwrap();
    let weights: Vec<f64> = (0..cfg.table_size()).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut bytes = Vec::new();
    save_model(&mut bytes, &cfg, &weights).unwrap();
    let (c2, w2) = load_model(&bytes[..]).unwrap();
    assert_eq!(c2, cfg);
    assert_eq!(w2, weights);
    assert!(load_model(&bytes[..bytes.len() - 1]).is_err());
    assert!(load_model(&b"nope"[..]).is_err());
}

fn naive_average(cfg: &FeatureConfig, updates: &[(FeatureVector, FeatureVector)]) -> Vec<f64> {
    let mut w = vec![0f64; cfg.table_size()];
    let mut sum = vec![0f64; cfg.table_size()];
    for (g, p) in updates {
        for &(i, c) in g.entries() {
            w[i as usize] += c as f64;
        }
        for &(i, c) in p.entries() {
            w[i as usize] -= c as f64;
        }
        for (s, x) in sum.iter_mut().zip(&w) {
            *s += x;
        }
    }
    sum.iter().map(|s| s / updates.len() as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lazy_average_matches_snapshot_oracle(seed in any::<u64>(), steps in 1usize..80) {
        let mut rng = common::rng(seed);
        let cfg = FeatureConfig::small_table(10, ModelOrder::First).unwrap();
        let model = WeightModel::new(cfg.clone());
        let updates: Vec<_> = (0..steps)
            .map(|_| (random_fv(&mut rng, 1 << 10, 30), random_fv(&mut rng, 1 << 10, 30)))
            .collect();
        for (g, p) in &updates {
            model.perceptron_update(g, p);
        }
        let lazy = model.averaged_weights();
        prop_assert_eq!(&lazy, &model.averaged_weights());
        for (a, b) in lazy.iter().zip(naive_average(&cfg, &updates)) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }
}
