//! Hashed first- and second-order feature templates.
//!
//! Every template instance becomes a [`FeatureKey`] (template id, direction,
//! optional distance bucket and up to four atom hashes), which is hashed with
//! a fixed seedless 64-bit function and reduced to `hash_bits` bits. Word and
//! tag strings are hashed once per sentence in [`PreparedSentence`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DependencyTree, Sentence};

pub const DEFAULT_HASH_BITS: u32 = 22;
pub const MIN_HASH_BITS: u32 = 16;
pub const MAX_HASH_BITS: u32 = 30;
/// Floor for [`FeatureConfig::small_table`], used by exhaustive oracle checks.
pub const MIN_SMALL_HASH_BITS: u32 = 8;

/// Upper bounds of the distance buckets: 1, 2, 3, 4, 5, 6-10, then 11+.
pub const DEFAULT_DISTANCE_BUCKETS: [u32; 6] = [1, 2, 3, 4, 5, 10];

const NO_DISTANCE: u8 = u8::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelOrder {
    First,
    Second,
}

impl ModelOrder {
    pub fn as_u32(self) -> u32 {
        match self {
            ModelOrder::First => 1,
            ModelOrder::Second => 2,
        }
    }

    pub fn from_u32(v: u32) -> Result<Self, FeatureError> {
        match v {
            1 => Ok(ModelOrder::First),
            2 => Ok(ModelOrder::Second),
            _ => Err(FeatureError::InvalidConfig(format!(
                "order must be 1 or 2, got {v}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub hash_bits: u32,
    pub order: ModelOrder,
    /// Increasing inclusive upper bounds; distances above the last bound
    /// share one overflow bucket.
    pub distance_buckets: Vec<u32>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hash_bits: DEFAULT_HASH_BITS,
            order: ModelOrder::First,
            distance_buckets: DEFAULT_DISTANCE_BUCKETS.to_vec(),
        }
    }
}

impl FeatureConfig {
    pub fn new(hash_bits: u32, order: ModelOrder) -> Result<Self, FeatureError> {
        let cfg = FeatureConfig {
            hash_bits,
            order,
            ..FeatureConfig::default()
        };
        if !(MIN_HASH_BITS..=MAX_HASH_BITS).contains(&hash_bits) {
            return Err(FeatureError::InvalidConfig(format!(
                "hash_bits must be in {MIN_HASH_BITS}..={MAX_HASH_BITS}, got {hash_bits}"
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`FeatureConfig::new`] but also accepts tables down to
    /// 2^[`MIN_SMALL_HASH_BITS`] slots, small enough for dense per-update
    /// snapshots. Collisions are heavy; not meant for real parsing.
    pub fn small_table(hash_bits: u32, order: ModelOrder) -> Result<Self, FeatureError> {
        let cfg = FeatureConfig {
            hash_bits,
            order,
            ..FeatureConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural check. Accepts small tables; [`FeatureConfig::new`] is
    /// stricter.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(MIN_SMALL_HASH_BITS..=MAX_HASH_BITS).contains(&self.hash_bits) {
            return Err(FeatureError::InvalidConfig(format!(
                "hash_bits must be in {MIN_SMALL_HASH_BITS}..={MAX_HASH_BITS}, got {}",
                self.hash_bits
            )));
        }
        if self.distance_buckets.is_empty() || self.distance_buckets.len() >= NO_DISTANCE as usize {
            return Err(FeatureError::InvalidConfig(
                "distance_buckets must hold 1..255 thresholds".into(),
            ));
        }
        if self.distance_buckets.windows(2).any(|w| w[0] >= w[1]) || self.distance_buckets[0] == 0 {
            return Err(FeatureError::InvalidConfig(
                "distance_buckets must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn table_size(&self) -> usize {
        1usize << self.hash_bits
    }

    fn mask(&self) -> u64 {
        (1u64 << self.hash_bits) - 1
    }

    pub fn distance_bucket(&self, distance: usize) -> u8 {
        self.distance_buckets
            .iter()
            .position(|&t| distance <= t as usize)
            .unwrap_or(self.distance_buckets.len()) as u8
    }

    pub fn index_of(&self, key: &FeatureKey) -> u32 {
        (key.hash() & self.mask()) as u32
    }
}

/// Side of the head the child sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Child to the left of the head.
    Left,
    /// Child to the right of the head.
    Right,
}

impl Direction {
    pub fn of(head: usize, child: usize) -> Direction {
        if child < head {
            Direction::Left
        } else {
            Direction::Right
        }
    }

    pub fn flipped(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

// Template ids. Edge templates and sibling templates share the id space.
mod tpl {
    pub const HW: u8 = 1;
    pub const HP: u8 = 2;
    pub const CW: u8 = 3;
    pub const CP: u8 = 4;
    pub const HW_HP: u8 = 5;
    pub const CW_CP: u8 = 6;
    pub const HW_CW: u8 = 7;
    pub const HW_CP: u8 = 8;
    pub const HP_CW: u8 = 9;
    pub const HP_CP: u8 = 10;
    pub const HP_HN_CPV_CP: u8 = 11;
    pub const HPV_HP_CPV_CP: u8 = 12;
    pub const HP_HN_CP_CN: u8 = 13;
    pub const HPV_HP_CP_CN: u8 = 14;
    pub const BETWEEN: u8 = 15;

    pub const SIB_HP_SP_CP: u8 = 32;
    pub const SIB_SP_CP: u8 = 33;
    pub const SIB_SW_CW: u8 = 34;
    pub const SIB_SW_CP: u8 = 35;
    pub const SIB_SP_CW: u8 = 36;
}

/// Number of edge templates that fire once per edge (in-between trigrams excluded).
pub const FIXED_EDGE_TEMPLATES: usize = 14;
/// Number of sibling templates.
pub const SIBLING_TEMPLATES: usize = 5;

/// Unhashed identity of one feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureKey {
    pub template: u8,
    pub direction: Direction,
    /// Distance bucket, or `None` for the distance-free copy.
    pub distance: Option<u8>,
    atoms: [u64; 4],
    arity: u8,
}

impl FeatureKey {
    fn new(template: u8, direction: Direction, distance: Option<u8>, atoms: &[u64]) -> Self {
        let mut a = [0u64; 4];
        a[..atoms.len()].copy_from_slice(atoms);
        FeatureKey {
            template,
            direction,
            distance,
            atoms: a,
            arity: atoms.len() as u8,
        }
    }

    pub fn atoms(&self) -> &[u64] {
        &self.atoms[..self.arity as usize]
    }

    pub fn hash(&self) -> u64 {
        let dir = match self.direction {
            Direction::Left => 1u64,
            Direction::Right => 2u64,
        };
        let dist = self.distance.unwrap_or(NO_DISTANCE) as u64;
        let mut h = mix(FNV_OFFSET, self.template as u64 | dir << 8 | dist << 16 | (self.arity as u64) << 24);
        for &a in self.atoms() {
            h = mix(h, a);
        }
        finalize(h)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Distance-free head-tag/child-tag feature, as emitted for any edge whose
/// head and child carry these tags.
pub fn head_child_tag_key(head_tag: &str, child_tag: &str, direction: Direction) -> FeatureKey {
    FeatureKey::new(tpl::HP_CP, direction, None, &[hash_str(head_tag), hash_str(child_tag)])
}

/// FNV-1a over the UTF-8 bytes of `s`.
pub fn hash_str(s: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[inline]
fn mix(h: u64, x: u64) -> u64 {
    (h ^ x).wrapping_mul(FNV_PRIME).rotate_left(29)
}

// murmur3 finalizer so that the low bits kept by the mask are well mixed
#[inline]
fn finalize(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    h
}

/// Sparse feature counts, sorted by index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    entries: Vec<(u32, u32)>,
}

impl FeatureVector {
    pub fn new() -> Self {
        FeatureVector::default()
    }

    /// Counts occurrences of each index.
    pub fn from_indices(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::with_capacity(indices.len());
        for i in indices {
            match entries.last_mut() {
                Some((last, c)) if *last == i => *c += 1,
                _ => entries.push((i, 1)),
            }
        }
        FeatureVector { entries }
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut indices = Vec::new();
        for (i, c) in counts {
            indices.extend(std::iter::repeat_n(i, c as usize));
        }
        FeatureVector::from_indices(indices)
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    /// Number of distinct indices.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> u32 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or(0)
    }

    /// Sum of all counts.
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|&(i, _)| i)
    }

    /// Entrywise sum.
    pub fn add(&self, other: &FeatureVector) -> FeatureVector {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(i, x)), Some(&&(j, y))) => {
                    if i == j {
                        out.push((i, x + y));
                        a.next();
                        b.next();
                    } else if i < j {
                        out.push((i, x));
                        a.next();
                    } else {
                        out.push((j, y));
                        b.next();
                    }
                }
                (Some(&&e), None) => {
                    out.push(e);
                    a.next();
                }
                (None, Some(&&e)) => {
                    out.push(e);
                    b.next();
                }
                (None, None) => break,
            }
        }
        FeatureVector { entries: out }
    }

    pub fn add_assign(&mut self, other: &FeatureVector) {
        *self = self.add(other);
    }

    /// Signed difference `self - other`, zero entries dropped.
    pub fn difference(&self, other: &FeatureVector) -> Vec<(u32, i64)> {
        let mut out = Vec::new();
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            let (i, d) = match (a.peek(), b.peek()) {
                (Some(&&(i, x)), Some(&&(j, y))) if i == j => {
                    a.next();
                    b.next();
                    (i, x as i64 - y as i64)
                }
                (Some(&&(i, x)), Some(&&(j, _))) if i < j => {
                    a.next();
                    (i, x as i64)
                }
                (Some(&&(i, x)), None) => {
                    a.next();
                    (i, x as i64)
                }
                (_, Some(&&(j, y))) => {
                    b.next();
                    (j, -(y as i64))
                }
                (None, None) => break,
            };
            if d != 0 {
                out.push((i, d));
            }
        }
        out
    }

    /// Euclidean norm of `self - other`.
    pub fn distance_to(&self, other: &FeatureVector) -> f64 {
        self.difference(other)
            .iter()
            .map(|&(_, d)| (d * d) as f64)
            .sum::<f64>()
            .sqrt()
    }
}

/// A sentence with word and tag strings hashed once.
#[derive(Clone, Debug)]
pub struct PreparedSentence {
    words: Vec<u64>,
    tags: Vec<u64>,
}

fn sentinel(name: &str) -> u64 {
    hash_str(&format!("\u{1}{name}"))
}

impl PreparedSentence {
    pub fn new(sentence: &Sentence) -> Self {
        let words = sentence
            .tokens()
            .iter()
            .map(|t| hash_str(&t.form.to_lowercase()))
            .collect();
        let tags = sentence.tokens().iter().map(|t| hash_str(&t.pos)).collect();
        PreparedSentence { words, tags }
    }

    /// Number of real tokens.
    pub fn len(&self) -> usize {
        self.words.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn tag_before(&self, i: usize) -> u64 {
        if i == 0 {
            sentinel("<s>")
        } else {
            self.tags[i - 1]
        }
    }

    fn tag_after(&self, i: usize) -> u64 {
        if i + 1 >= self.tags.len() {
            sentinel("</s>")
        } else {
            self.tags[i + 1]
        }
    }

    fn check_edge(&self, head: usize, child: usize) -> Result<(), FeatureError> {
        let n = self.len();
        if head > n || child == 0 || child > n || head == child {
            return Err(FeatureError::Contract(format!(
                "edge ({head}, {child}) invalid for a sentence of {n} tokens"
            )));
        }
        Ok(())
    }

    fn check_sibling(&self, head: usize, child: usize, sibling: Option<usize>) -> Result<(), FeatureError> {
        self.check_edge(head, child)?;
        if let Some(s) = sibling {
            let ok = if child > head {
                s > head && s < child
            } else {
                s < head && s > child
            };
            if !ok {
                return Err(FeatureError::Contract(format!(
                    "sibling {s} is not between head {head} and child {child}"
                )));
            }
        }
        Ok(())
    }

    /// Calls `sink` once per edge template instance.
    pub fn for_each_edge_key(
        &self,
        head: usize,
        child: usize,
        config: &FeatureConfig,
        mut sink: impl FnMut(FeatureKey),
    ) {
        let dir = Direction::of(head, child);
        let dist = Some(config.distance_bucket(head.abs_diff(child)));
        let (hw, hp, cw, cp) = (self.words[head], self.tags[head], self.words[child], self.tags[child]);
        let (hpv, hpn) = (self.tag_before(head), self.tag_after(head));
        let (cpv, cpn) = (self.tag_before(child), self.tag_after(child));
        let mut emit = |t: u8, atoms: &[u64]| {
            sink(FeatureKey::new(t, dir, dist, atoms));
            sink(FeatureKey::new(t, dir, None, atoms));
        };
        emit(tpl::HW, &[hw]);
        emit(tpl::HP, &[hp]);
        emit(tpl::CW, &[cw]);
        emit(tpl::CP, &[cp]);
        emit(tpl::HW_HP, &[hw, hp]);
        emit(tpl::CW_CP, &[cw, cp]);
        emit(tpl::HW_CW, &[hw, cw]);
        emit(tpl::HW_CP, &[hw, cp]);
        emit(tpl::HP_CW, &[hp, cw]);
        emit(tpl::HP_CP, &[hp, cp]);
        emit(tpl::HP_HN_CPV_CP, &[hp, hpn, cpv, cp]);
        emit(tpl::HPV_HP_CPV_CP, &[hpv, hp, cpv, cp]);
        emit(tpl::HP_HN_CP_CN, &[hp, hpn, cp, cpn]);
        emit(tpl::HPV_HP_CP_CN, &[hpv, hp, cp, cpn]);

        let (lo, hi) = if head < child { (head, child) } else { (child, head) };
        if hi - lo > 1 {
            let mut between: Vec<u64> = self.tags[lo + 1..hi].to_vec();
            between.sort_unstable();
            between.dedup();
            for bp in between {
                emit(tpl::BETWEEN, &[hp, bp, cp]);
            }
        }
    }

    /// Calls `sink` once per sibling template instance. `sibling` is the
    /// previous child on the same side (closer to the head), `None` when
    /// `child` is the first one.
    pub fn for_each_sibling_key(
        &self,
        head: usize,
        child: usize,
        sibling: Option<usize>,
        config: &FeatureConfig,
        mut sink: impl FnMut(FeatureKey),
    ) {
        let dir = Direction::of(head, child);
        let anchor = sibling.unwrap_or(head);
        let dist = Some(config.distance_bucket(anchor.abs_diff(child)));
        let (sw, sp) = match sibling {
            Some(s) => (self.words[s], self.tags[s]),
            None => (sentinel("<null-word>"), sentinel("<null-pos>")),
        };
        let (hp, cw, cp) = (self.tags[head], self.words[child], self.tags[child]);
        let mut emit = |t: u8, atoms: &[u64]| {
            sink(FeatureKey::new(t, dir, dist, atoms));
            sink(FeatureKey::new(t, dir, None, atoms));
        };
        emit(tpl::SIB_HP_SP_CP, &[hp, sp, cp]);
        emit(tpl::SIB_SP_CP, &[sp, cp]);
        emit(tpl::SIB_SW_CW, &[sw, cw]);
        emit(tpl::SIB_SW_CP, &[sw, cp]);
        emit(tpl::SIB_SP_CW, &[sp, cw]);
    }

    pub fn edge_keys(&self, head: usize, child: usize, config: &FeatureConfig) -> Result<Vec<FeatureKey>, FeatureError> {
        self.check_edge(head, child)?;
        let mut keys = Vec::new();
        self.for_each_edge_key(head, child, config, |k| keys.push(k));
        Ok(keys)
    }

    pub fn sibling_keys(
        &self,
        head: usize,
        child: usize,
        sibling: Option<usize>,
        config: &FeatureConfig,
    ) -> Result<Vec<FeatureKey>, FeatureError> {
        self.check_sibling(head, child, sibling)?;
        let mut keys = Vec::new();
        self.for_each_sibling_key(head, child, sibling, config, |k| keys.push(k));
        Ok(keys)
    }

    pub fn edge_vector(&self, head: usize, child: usize, config: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
        self.check_edge(head, child)?;
        let mut idx = Vec::with_capacity(2 * FIXED_EDGE_TEMPLATES + 8);
        self.for_each_edge_key(head, child, config, |k| idx.push(config.index_of(&k)));
        Ok(FeatureVector::from_indices(idx))
    }

    pub fn sibling_vector(
        &self,
        head: usize,
        child: usize,
        sibling: Option<usize>,
        config: &FeatureConfig,
    ) -> Result<FeatureVector, FeatureError> {
        self.check_sibling(head, child, sibling)?;
        let mut idx = Vec::with_capacity(2 * SIBLING_TEMPLATES);
        self.for_each_sibling_key(head, child, sibling, config, |k| idx.push(config.index_of(&k)));
        Ok(FeatureVector::from_indices(idx))
    }

    /// Feature indices of a whole tree, unsorted with repetition.
    pub fn tree_indices(&self, tree: &DependencyTree, config: &FeatureConfig) -> Vec<u32> {
        let mut idx = Vec::new();
        for (h, c) in tree.edges() {
            self.for_each_edge_key(h, c, config, |k| idx.push(config.index_of(&k)));
        }
        if config.order == ModelOrder::Second {
            for_each_sibling_part(tree, |h, c, s| {
                self.for_each_sibling_key(h, c, s, config, |k| idx.push(config.index_of(&k)));
            });
        }
        idx
    }

    pub fn tree_vector(&self, tree: &DependencyTree, config: &FeatureConfig) -> FeatureVector {
        FeatureVector::from_indices(self.tree_indices(tree, config))
    }
}

/// Visits every adjacent-sibling part `(head, child, previous sibling)` of a
/// tree. Children on each side are ordered outward from the head.
pub fn for_each_sibling_part(tree: &DependencyTree, mut visit: impl FnMut(usize, usize, Option<usize>)) {
    let n = tree.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (h, c) in tree.edges() {
        children[h].push(c);
    }
    for (h, kids) in children.iter().enumerate() {
        let mut prev = None;
        for &c in kids.iter().filter(|&&c| c < h).rev() {
            visit(h, c, prev);
            prev = Some(c);
        }
        let mut prev = None;
        for &c in kids.iter().filter(|&&c| c > h) {
            visit(h, c, prev);
            prev = Some(c);
        }
    }
}

pub fn extract_edge_features(
    sentence: &Sentence,
    head: usize,
    child: usize,
    config: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    PreparedSentence::new(sentence).edge_vector(head, child, config)
}

pub fn extract_sibling_features(
    sentence: &Sentence,
    head: usize,
    child: usize,
    prev_sibling: Option<usize>,
    config: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    PreparedSentence::new(sentence).sibling_vector(head, child, prev_sibling, config)
}

/// Φ(x, y): sum of edge vectors, plus sibling vectors for order 2.
pub fn tree_feature_vector(sentence: &Sentence, tree: &DependencyTree, config: &FeatureConfig) -> FeatureVector {
    PreparedSentence::new(sentence).tree_vector(tree, config)
}
