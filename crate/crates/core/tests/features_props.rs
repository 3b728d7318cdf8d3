mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use parperc::features::{
    extract_edge_features, extract_sibling_features, for_each_sibling_part, tree_feature_vector, Direction,
    PreparedSentence, FIXED_EDGE_TEMPLATES, SIBLING_TEMPLATES,
};
use parperc::{DependencyTree, FeatureConfig, ModelOrder, Sentence};
use proptest::prelude::*;
use rand::Rng;

fn cfg(bits: u32, order: ModelOrder) -> FeatureConfig {
    FeatureConfig::new(bits, order).unwrap()
}

fn signed(fv: &parperc::FeatureVector, sign: i64, into: &mut BTreeMap<u32, i64>) {
    for &(i, c) in fv.entries() {
        *into.entry(i).or_default() += sign * c as i64;
    }
}

#[test]
fn template_count_matches_symbolic_count() {
    let mut rng = common::rng(21);
    let c = cfg(22, ModelOrder::First);
    for _ in 0..100 {
        let n = rng.gen_range(2..15);
        let s = common::random_sentence(&mut rng, n, 50, 6);
        let child = rng.gen_range(1..=n);
        let mut head = rng.gen_range(0..=n);
        while head == child {
            head = rng.gen_range(0..=n);
        }
        let (lo, hi) = (head.min(child), head.max(child));
        let between: BTreeSet<&str> = (lo + 1..hi).map(|i| s.pos(i)).collect();
        let expected = 2 * (FIXED_EDGE_TEMPLATES + between.len());
        let fv = extract_edge_features(&s, head, child, &c).unwrap();
        assert_eq!(fv.total() as usize, expected);
        // distinct templates hash apart except for rare collisions
        assert!(fv.len() + 1 >= expected, "{} vs {expected}", fv.len());
    }
}

#[test]
fn sibling_vectors_have_fixed_size_and_null_differs() {
    let c = cfg(22, ModelOrder::Second);
    let s = Sentence::from_pairs([("a", "DT"), ("b", "NN"), ("c", "VB"), ("d", "NN")]).unwrap();
    let null = extract_sibling_features(&s, 3, 1, None, &c).unwrap();
    assert_eq!(null.total() as usize, 2 * SIBLING_TEMPLATES);
    assert_eq!(null, extract_sibling_features(&s, 3, 1, None, &c).unwrap());
    let real = extract_sibling_features(&s, 3, 1, Some(2), &c).unwrap();
    assert_ne!(null, real);
    assert!(extract_sibling_features(&s, 3, 1, Some(4), &c).is_err());
}

#[test]
fn distinct_edges_differ() {
    let c = cfg(22, ModelOrder::First);
    let two = Sentence::from_pairs([("He", "PRP"), ("runs", "VBZ")]).unwrap();
    let three = Sentence::from_pairs([("She", "PRP"), ("walks", "VBZ"), ("home", "NN")]).unwrap();
    let a = extract_edge_features(&two, 0, 1, &c).unwrap();
    let b = extract_edge_features(&three, 0, 2, &c).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, extract_edge_features(&two, 0, 1, &c).unwrap());
}

#[test]
fn indices_stay_inside_table() {
    let mut rng = common::rng(22);
    for &bits in &[16u32, 18, 22] {
        let c = cfg(bits, ModelOrder::Second);
        let mut extracted = 0;
        while extracted < 10_000 {
            let n = rng.gen_range(1..12);
            let s = common::random_sentence(&mut rng, n, 1000, 20);
            let p = PreparedSentence::new(&s);
            let child = rng.gen_range(1..=n);
            let head = (0..=n).filter(|&h| h != child).nth(rng.gen_range(0..n)).unwrap();
            let fv = p.edge_vector(head, child, &c).unwrap();
            assert!(fv.max_index().unwrap() < (1u32 << bits));
            let t = common::random_projective_tree(&mut rng, n);
            assert!(p.tree_indices(&t, &c).iter().all(|&i| i < (1u32 << bits)));
            extracted += 2;
        }
    }
}

#[test]
fn cardinality_is_stable_across_table_sizes() {
    let mut rng = common::rng(23);
    let sentences: Vec<(Sentence, DependencyTree)> = (0..200)
        .map(|_| {
            let n = rng.gen_range(3..15);
            (common::random_sentence(&mut rng, n, 500, 12), common::random_projective_tree(&mut rng, n))
        })
        .collect();
    let distinct = |bits: u32| {
        let c = cfg(bits, ModelOrder::First);
        let mut all = BTreeSet::new();
        for (s, t) in &sentences {
            all.extend(PreparedSentence::new(s).tree_indices(t, &c));
        }
        all.len() as f64
    };
    let big = distinct(30);
    for bits in [22, 24, 26] {
        let small = distinct(bits);
        assert!((big - small).abs() / big < 0.01, "bits={bits}: {small} vs {big}");
    }
}

#[test]
fn one_edge_tree_equals_its_edge() {
    let c = cfg(20, ModelOrder::First);
    let s = Sentence::from_pairs([("x", "X")]).unwrap();
    let t = DependencyTree::new(vec![0]).unwrap();
    assert_eq!(tree_feature_vector(&s, &t, &c), extract_edge_features(&s, 0, 1, &c).unwrap());
}

#[test]
fn one_edge_change_is_edge_difference() {
    let c = cfg(20, ModelOrder::First);
    let s = Sentence::from_pairs([("a", "DT"), ("b", "NN"), ("c", "VB")]).unwrap();
    let t1 = DependencyTree::new(vec![2, 3, 0]).unwrap();
    let t2 = DependencyTree::new(vec![3, 3, 0]).unwrap();
    let lhs = tree_feature_vector(&s, &t1, &c).difference(&tree_feature_vector(&s, &t2, &c));
    let mut rhs = BTreeMap::new();
    signed(&extract_edge_features(&s, 2, 1, &c).unwrap(), 1, &mut rhs);
    signed(&extract_edge_features(&s, 3, 1, &c).unwrap(), -1, &mut rhs);
    rhs.retain(|_, v| *v != 0);
    assert_eq!(lhs, rhs.into_iter().collect::<Vec<_>>());
}

#[test]
fn mirrored_sentence_flips_sibling_directions() {
    let mut rng = common::rng(24);
    let c = cfg(22, ModelOrder::Second);
    for _ in 0..50 {
        let n = rng.gen_range(2..10);
        let s = common::random_sentence(&mut rng, n, 20, 5);
        let m = s.mirrored();
        let (p, pm) = (PreparedSentence::new(&s), PreparedSentence::new(&m));
        let t = common::random_projective_tree(&mut rng, n);
        let mirror = |i: usize| if i == 0 { 0 } else { n + 1 - i };
        // ROOT keeps position 0, so only parts below it mirror
        for_each_sibling_part(&t, |h, ch, sib| {
            if h == 0 {
                return;
            }
            let a = p.sibling_keys(h, ch, sib, &c).unwrap();
            let b = pm.sibling_keys(mirror(h), mirror(ch), sib.map(mirror), &c).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.template, y.template);
                assert_eq!(x.distance, y.distance);
                assert_eq!(x.atoms(), y.atoms());
                assert_eq!(x.direction.flipped(), y.direction);
            }
        });
        // distance-free head/child unigram templates mirror too
        for (h, ch) in t.edges().filter(|&(h, _)| h != 0) {
            let a = p.edge_keys(h, ch, &c).unwrap();
            let b = pm.edge_keys(mirror(h), mirror(ch), &c).unwrap();
            assert_eq!(a[0].atoms(), b[0].atoms());
            assert_eq!(a[0].direction, b[0].direction.flipped());
            assert_ne!(Direction::of(h, ch), Direction::of(mirror(h), mirror(ch)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tree_vector_is_sum_of_parts(seed in any::<u64>(), n in 1usize..14, second in any::<bool>()) {
        let order = if second { ModelOrder::Second } else { ModelOrder::First };
        let c = cfg(18, order);
        let mut rng = common::rng(seed);
        let s = common::random_sentence(&mut rng, n, 30, 6);
        let t = common::random_projective_tree(&mut rng, n);
        let mut sum: HashMap<u32, u32> = HashMap::new();
        for (h, ch) in t.edges() {
            for &(i, k) in extract_edge_features(&s, h, ch, &c).unwrap().entries() {
                *sum.entry(i).or_default() += k;
            }
        }
        if second {
            for_each_sibling_part(&t, |h, ch, sib| {
                for &(i, k) in extract_sibling_features(&s, h, ch, sib, &c).unwrap().entries() {
                    *sum.entry(i).or_default() += k;
                }
            });
        }
        let mut expected: Vec<(u32, u32)> = sum.into_iter().collect();
        expected.sort_unstable();
        let got = tree_feature_vector(&s, &t, &c);
        prop_assert_eq!(got.entries(), &expected[..]);
    }

    #[test]
    fn difference_is_signed_edge_symmetric_difference(seed in any::<u64>(), n in 1usize..14) {
        let c = cfg(18, ModelOrder::First);
        let mut rng = common::rng(seed);
        let s = common::random_sentence(&mut rng, n, 30, 6);
        let (t1, t2) = (common::random_projective_tree(&mut rng, n), common::random_projective_tree(&mut rng, n));
        let e1: BTreeSet<_> = t1.edges().collect();
        let e2: BTreeSet<_> = t2.edges().collect();
        let mut rhs = BTreeMap::new();
        for &(h, ch) in e1.difference(&e2) {
            signed(&extract_edge_features(&s, h, ch, &c).unwrap(), 1, &mut rhs);
        }
        for &(h, ch) in e2.difference(&e1) {
            signed(&extract_edge_features(&s, h, ch, &c).unwrap(), -1, &mut rhs);
        }
        rhs.retain(|_, v| *v != 0);
        let lhs = tree_feature_vector(&s, &t1, &c).difference(&tree_feature_vector(&s, &t2, &c));
        prop_assert_eq!(lhs, rhs.into_iter().collect::<Vec<_>>());
    }
}
