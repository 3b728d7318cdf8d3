//! Projective decoding: first-order Eisner, the adjacent-sibling
//! second-order extension, and exhaustive enumeration for small inputs.

use thiserror::Error;

use crate::corpus::DependencyTree;
use crate::features::for_each_sibling_part;

/// Largest sentence length the exhaustive decoder accepts.
pub const MAX_BRUTE_FORCE_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("contract violation: cannot decode an empty sentence")]
    Empty,
    #[error("contract violation: score tables disagree on length ({0} vs {1})")]
    Shape(usize, usize),
    #[error("refusing to enumerate trees for n = {n} (limit {limit})")]
    TooLong { n: usize, limit: usize },
}

/// `get(h, c)` is the score of attaching child `c` to head `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeScoreMatrix {
    n: usize,
    scores: Vec<f64>,
}

impl EdgeScoreMatrix {
    pub fn zeros(n: usize) -> Self {
        EdgeScoreMatrix {
            n,
            scores: vec![0.0; (n + 1) * (n + 1)],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = EdgeScoreMatrix::zeros(n);
        for h in 0..=n {
            for c in 1..=n {
                if h != c {
                    m.set(h, c, f(h, c));
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, head: usize, child: usize) -> f64 {
        self.scores[head * (self.n + 1) + child]
    }

    #[inline]
    pub fn set(&mut self, head: usize, child: usize, score: f64) {
        self.scores[head * (self.n + 1) + child] = score;
    }

    /// Σ over the tree's edges, in child order.
    pub fn tree_score(&self, tree: &DependencyTree) -> f64 {
        tree.edges().map(|(h, c)| self.get(h, c)).sum()
    }
}

/// Scores of adjacent-sibling parts `(head, child, previous sibling)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiblingScoreTable {
    n: usize,
    scores: Vec<f64>,
}

impl SiblingScoreTable {
    pub fn zeros(n: usize) -> Self {
        let w = n + 1;
        SiblingScoreTable {
            n,
            scores: vec![0.0; w * w * w],
        }
    }

    /// Fills every valid part from `f`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, Option<usize>) -> f64) -> Self {
        let mut t = SiblingScoreTable::zeros(n);
        for h in 0..=n {
            for c in 1..=n {
                if c == h {
                    continue;
                }
                t.set(h, c, None, f(h, c, None));
                let between = if c > h { h + 1..c } else { c + 1..h };
                for s in between {
                    t.set(h, c, Some(s), f(h, c, Some(s)));
                }
            }
        }
        t
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn slot(&self, head: usize, child: usize, sibling: Option<usize>) -> usize {
        let w = self.n + 1;
        // the head itself never is a sibling, so it encodes "none"
        (head * w + child) * w + sibling.unwrap_or(head)
    }

    #[inline]
    pub fn get(&self, head: usize, child: usize, sibling: Option<usize>) -> f64 {
        self.scores[self.slot(head, child, sibling)]
    }

    #[inline]
    pub fn set(&mut self, head: usize, child: usize, sibling: Option<usize>, score: f64) {
        let i = self.slot(head, child, sibling);
        self.scores[i] = score;
    }

    /// Σ over the tree's sibling parts.
    pub fn tree_score(&self, tree: &DependencyTree) -> f64 {
        let mut total = 0.0;
        for_each_sibling_part(tree, |h, c, s| total += self.get(h, c, s));
        total
    }
}

/// Edge score sum plus sibling score sum.
pub fn second_order_tree_score(matrix: &EdgeScoreMatrix, siblings: &SiblingScoreTable, tree: &DependencyTree) -> f64 {
    matrix.tree_score(tree) + siblings.tree_score(tree)
}

struct Chart {
    w: usize,
}

impl Chart {
    #[inline]
    fn at(&self, s: usize, t: usize) -> usize {
        s * self.w + t
    }
}

/// First-order Eisner decoding. Returns the best projective tree and its
/// score summed over its edges.
pub fn eisner_decode(matrix: &EdgeScoreMatrix) -> Result<(DependencyTree, f64), DecodeError> {
    let n = matrix.len();
    if n == 0 {
        return Err(DecodeError::Empty);
    }
    let w = n + 1;
    let ix = Chart { w };
    let neg = f64::NEG_INFINITY;
    let mut comp_r = vec![neg; w * w];
    let mut comp_l = vec![neg; w * w];
    let mut inc_r = vec![neg; w * w];
    let mut inc_l = vec![neg; w * w];
    let mut bp_comp_r = vec![0usize; w * w];
    let mut bp_comp_l = vec![0usize; w * w];
    let mut bp_inc = vec![0usize; w * w];
    for s in 0..w {
        comp_r[ix.at(s, s)] = 0.0;
        comp_l[ix.at(s, s)] = 0.0;
    }

    for len in 1..=n {
        for s in 0..=n - len {
            let t = s + len;
            let st = ix.at(s, t);

            let (mut best, mut arg) = (neg, s);
            for r in s..t {
                let v = comp_r[ix.at(s, r)] + comp_l[ix.at(r + 1, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            bp_inc[st] = arg;
            inc_r[st] = best + matrix.get(s, t);
            // ROOT never takes a head
            inc_l[st] = if s == 0 { neg } else { best + matrix.get(t, s) };

            let (mut best, mut arg) = (neg, s);
            for r in s..t {
                let v = comp_l[ix.at(s, r)] + inc_l[ix.at(r, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            comp_l[st] = best;
            bp_comp_l[st] = arg;

            let (mut best, mut arg) = (neg, t);
            for r in s + 1..=t {
                let v = inc_r[ix.at(s, r)] + comp_r[ix.at(r, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            comp_r[st] = best;
            bp_comp_r[st] = arg;
        }
    }

    #[derive(Clone, Copy)]
    enum Item {
        CompR(usize, usize),
        CompL(usize, usize),
        IncR(usize, usize),
        IncL(usize, usize),
    }
    let mut heads = vec![usize::MAX; n];
    let mut stack = vec![Item::CompR(0, n)];
    while let Some(item) = stack.pop() {
        match item {
            Item::CompR(s, t) | Item::CompL(s, t) if s == t => {}
            Item::CompR(s, t) => {
                let r = bp_comp_r[ix.at(s, t)];
                stack.push(Item::IncR(s, r));
                stack.push(Item::CompR(r, t));
            }
            Item::CompL(s, t) => {
                let r = bp_comp_l[ix.at(s, t)];
                stack.push(Item::CompL(s, r));
                stack.push(Item::IncL(r, t));
            }
            Item::IncR(s, t) => {
                heads[t - 1] = s;
                let r = bp_inc[ix.at(s, t)];
                stack.push(Item::CompR(s, r));
                stack.push(Item::CompL(r + 1, t));
            }
            Item::IncL(s, t) => {
                heads[s - 1] = t;
                let r = bp_inc[ix.at(s, t)];
                stack.push(Item::CompR(s, r));
                stack.push(Item::CompL(r + 1, t));
            }
        }
    }
    let tree = DependencyTree::from_heads_unchecked(heads);
    let score = matrix.tree_score(&tree);
    Ok((tree, score))
}

/// Second-order (adjacent sibling) Eisner decoding.
pub fn eisner_decode_second_order(
    matrix: &EdgeScoreMatrix,
    siblings: &SiblingScoreTable,
) -> Result<(DependencyTree, f64), DecodeError> {
    let n = matrix.len();
    if n == 0 {
        return Err(DecodeError::Empty);
    }
    if siblings.len() != n {
        return Err(DecodeError::Shape(n, siblings.len()));
    }
    let w = n + 1;
    let ix = Chart { w };
    let neg = f64::NEG_INFINITY;
    let mut comp_r = vec![neg; w * w];
    let mut comp_l = vec![neg; w * w];
    let mut inc_r = vec![neg; w * w];
    let mut inc_l = vec![neg; w * w];
    let mut sib = vec![neg; w * w];
    let mut bp_comp_r = vec![0usize; w * w];
    let mut bp_comp_l = vec![0usize; w * w];
    // usize::MAX marks "no previous sibling"
    let mut bp_inc_r = vec![usize::MAX; w * w];
    let mut bp_inc_l = vec![usize::MAX; w * w];
    let mut bp_sib = vec![0usize; w * w];
    for s in 0..w {
        comp_r[ix.at(s, s)] = 0.0;
        comp_l[ix.at(s, s)] = 0.0;
    }

    for len in 1..=n {
        for s in 0..=n - len {
            let t = s + len;
            let st = ix.at(s, t);

            // s and t as adjacent siblings of a common head outside [s, t]
            let (mut best, mut arg) = (neg, s);
            for r in s..t {
                let v = comp_r[ix.at(s, r)] + comp_l[ix.at(r + 1, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            sib[st] = best;
            bp_sib[st] = arg;

            // head s, child t
            let mut best = comp_l[ix.at(s + 1, t)] + siblings.get(s, t, None);
            let mut arg = usize::MAX;
            for r in s + 1..t {
                let v = inc_r[ix.at(s, r)] + sib[ix.at(r, t)] + siblings.get(s, t, Some(r));
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            inc_r[st] = best + matrix.get(s, t);
            bp_inc_r[st] = arg;

            // head t, child s
            if s == 0 {
                inc_l[st] = neg;
            } else {
                let mut best = comp_r[ix.at(s, t - 1)] + siblings.get(t, s, None);
                let mut arg = usize::MAX;
                for r in s + 1..t {
                    let v = sib[ix.at(s, r)] + inc_l[ix.at(r, t)] + siblings.get(t, s, Some(r));
                    if v > best {
                        best = v;
                        arg = r;
                    }
                }
                inc_l[st] = best + matrix.get(t, s);
                bp_inc_l[st] = arg;
            }

            let (mut best, mut arg) = (neg, s);
            for r in s..t {
                let v = comp_l[ix.at(s, r)] + inc_l[ix.at(r, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            comp_l[st] = best;
            bp_comp_l[st] = arg;

            let (mut best, mut arg) = (neg, t);
            for r in s + 1..=t {
                let v = inc_r[ix.at(s, r)] + comp_r[ix.at(r, t)];
                if v > best {
                    best = v;
                    arg = r;
                }
            }
            comp_r[st] = best;
            bp_comp_r[st] = arg;
        }
    }

    #[derive(Clone, Copy)]
    enum Item {
        CompR(usize, usize),
        CompL(usize, usize),
        IncR(usize, usize),
        IncL(usize, usize),
        Sib(usize, usize),
    }
    let mut heads = vec![usize::MAX; n];
    let mut stack = vec![Item::CompR(0, n)];
    while let Some(item) = stack.pop() {
        match item {
            Item::CompR(s, t) | Item::CompL(s, t) if s == t => {}
            Item::CompR(s, t) => {
                let r = bp_comp_r[ix.at(s, t)];
                stack.push(Item::IncR(s, r));
                stack.push(Item::CompR(r, t));
            }
            Item::CompL(s, t) => {
                let r = bp_comp_l[ix.at(s, t)];
                stack.push(Item::CompL(s, r));
                stack.push(Item::IncL(r, t));
            }
            Item::IncR(s, t) => {
                heads[t - 1] = s;
                match bp_inc_r[ix.at(s, t)] {
                    usize::MAX => stack.push(Item::CompL(s + 1, t)),
                    r => {
                        stack.push(Item::IncR(s, r));
                        stack.push(Item::Sib(r, t));
                    }
                }
            }
            Item::IncL(s, t) => {
                heads[s - 1] = t;
                match bp_inc_l[ix.at(s, t)] {
                    usize::MAX => stack.push(Item::CompR(s, t - 1)),
                    r => {
                        stack.push(Item::Sib(s, r));
                        stack.push(Item::IncL(r, t));
                    }
                }
            }
            Item::Sib(s, t) => {
                let r = bp_sib[ix.at(s, t)];
                stack.push(Item::CompR(s, r));
                stack.push(Item::CompL(r + 1, t));
            }
        }
    }
    let tree = DependencyTree::from_heads_unchecked(heads);
    let score = second_order_tree_score(matrix, siblings, &tree);
    Ok((tree, score))
}

/// Every projective tree over `n` tokens rooted at 0, in lexicographic
/// order of head arrays.
pub fn enumerate_projective_trees(n: usize) -> Result<Vec<DependencyTree>, DecodeError> {
    if n == 0 {
        return Err(DecodeError::Empty);
    }
    if n > MAX_BRUTE_FORCE_LEN {
        return Err(DecodeError::TooLong {
            n,
            limit: MAX_BRUTE_FORCE_LEN,
        });
    }
    let mut trees: Vec<DependencyTree> = forests(1, n, 0)
        .into_iter()
        .map(|arcs| {
            let mut heads = vec![0; n];
            for (c, h) in arcs {
                heads[c - 1] = h;
            }
            DependencyTree::from_heads_unchecked(heads)
        })
        .collect();
    trees.sort();
    Ok(trees)
}

/// All ways to cover tokens `l..=r` with consecutive projective subtrees
/// whose roots attach to `head`. Arcs are `(child, head)`.
fn forests(l: usize, r: usize, head: usize) -> Vec<Vec<(usize, usize)>> {
    if l > r {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for end in l..=r {
        let rest = forests(end + 1, r, head);
        for root in l..=end {
            let left = forests(l, root - 1, root);
            let right = forests(root + 1, end, root);
            for a in &left {
                for b in &right {
                    for c in &rest {
                        let mut arcs = Vec::with_capacity(r - l + 1);
                        arcs.push((root, head));
                        arcs.extend_from_slice(a);
                        arcs.extend_from_slice(b);
                        arcs.extend_from_slice(c);
                        out.push(arcs);
                    }
                }
            }
        }
    }
    out
}

/// Exact maximum of `score` over all projective trees of length `n`; ties go
/// to the lexicographically smallest head array.
pub fn brute_force_decode(
    score: impl Fn(&DependencyTree) -> f64,
    n: usize,
) -> Result<(DependencyTree, f64), DecodeError> {
    let mut best: Option<(DependencyTree, f64)> = None;
    for tree in enumerate_projective_trees(n)? {
        let s = score(&tree);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((tree, s));
        }
    }
    Ok(best.expect("at least one tree exists for n >= 1"))
}
