#![allow(dead_code)]

use parperc::{DependencyTree, Sentence};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_sentence(rng: &mut impl Rng, n: usize, vocab: usize, tags: usize) -> Sentence {
    Sentence::from_pairs((0..n).map(|_| {
        let w = rng.gen_range(0..vocab);
        (format!("w{w}"), format!("T{}", rng.gen_range(0..tags)))
    }))
    .unwrap()
}

/// Random projective tree: pick a head inside the span, recurse on both sides.
pub fn random_projective_tree(rng: &mut impl Rng, n: usize) -> DependencyTree {
    fn fill(rng: &mut impl Rng, lo: usize, hi: usize, head: usize, heads: &mut [usize]) {
        if lo > hi {
            return;
        }
        let r = rng.gen_range(lo..=hi);
        heads[r - 1] = head;
        fill(rng, lo, r - 1, r, heads);
        fill(rng, r + 1, hi, r, heads);
    }
    let mut heads = vec![0; n];
    // ROOT may take several children: split into consecutive root spans
    let mut lo = 1;
    while lo <= n {
        let hi = rng.gen_range(lo..=n);
        fill(rng, lo, hi, 0, &mut heads);
        lo = hi + 1;
    }
    DependencyTree::new(heads).unwrap()
}

/// Random tree, projective or not: attach tokens in random order to an
/// already attached node.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> DependencyTree {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut attached = vec![0usize];
    let mut heads = vec![0; n];
    for j in order {
        heads[j - 1] = *attached.choose(rng).unwrap();
        attached.push(j);
    }
    DependencyTree::new(heads).unwrap()
}

/// Every valid tree over n tokens, by exhaustive head assignment.
pub fn all_trees(n: usize) -> Vec<DependencyTree> {
    let total = (n + 1).pow(n as u32);
    (0..total)
        .filter_map(|mut code| {
            let heads: Vec<usize> = (0..n)
                .map(|_| {
                    let h = code % (n + 1);
                    code /= n + 1;
                    h
                })
                .collect();
            DependencyTree::new(heads).ok()
        })
        .collect()
}

/// Projectivity by the crossing-edge definition over all edge pairs.
pub fn crossing_free(tree: &DependencyTree) -> bool {
    let edges: Vec<(usize, usize)> = tree
        .edges()
        .map(|(h, c)| (h.min(c), h.max(c)))
        .collect();
    for &(a, b) in &edges {
        for &(c, d) in &edges {
            if a < c && c < b && b < d {
                return false;
            }
        }
    }
    true
}

/// C(3n, n) / (2n + 1).
pub fn projective_tree_count(n: usize) -> u64 {
    let mut binom: u128 = 1;
    for i in 0..n as u128 {
        binom = binom * (3 * n as u128 - i) / (i + 1);
    }
    (binom / (2 * n as u128 + 1)) as u64
}
