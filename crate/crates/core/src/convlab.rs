//! Convergence laboratory: separable synthetic corpora with a known unit
//! separator, exhaustive margin and radius computation, and checks of the
//! observed number of time steps against the mistake bounds.
//!
//! The separator lives in the hashed feature space. It puts equal weight on
//! the distance-free head-tag/child-tag/direction feature of a small random
//! set of tag "rules"; a tree's separator score is then the number of
//! licensed edges it contains. Gold trees are the separator-optimal trees,
//! and sentences whose optimum does not clear the target margin are
//! resampled.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DependencyTree, Sentence, Token};
use crate::decoder::{enumerate_projective_trees, DecodeError, MAX_BRUTE_FORCE_LEN};
use crate::features::{
    for_each_sibling_part, head_child_tag_key, Direction, FeatureConfig, FeatureVector, ModelOrder, PreparedSentence,
};
use crate::trainer::TrainTrace;

/// Longest sentence the generator produces.
pub const MAX_GENERATED_LEN: usize = 6;

#[derive(Debug, Error)]
pub enum ConvlabError {
    #[error("invalid separable spec: {0}")]
    Spec(String),
    #[error("could not reach margin {target} after {attempts} attempts for sentence {sentence} (best margin found {achieved})")]
    Budget {
        target: f64,
        achieved: f64,
        attempts: usize,
        sentence: usize,
    },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableSpec {
    pub n_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub target_margin: f64,
    pub seed: u64,
    /// Number of distinct tags in the generated grammar.
    pub n_tags: usize,
    /// Sampling attempts allowed per sentence.
    pub attempts_per_sentence: usize,
}

impl Default for SeparableSpec {
    fn default() -> Self {
        SeparableSpec {
            n_sentences: 100,
            min_len: 2,
            max_len: 5,
            vocab_size: 40,
            target_margin: 0.1,
            seed: 1,
            n_tags: 4,
            attempts_per_sentence: 5000,
        }
    }
}

impl SeparableSpec {
    pub fn validate(&self) -> Result<(), ConvlabError> {
        let bad = |m: &str| Err(ConvlabError::Spec(m.to_string()));
        if self.target_margin <= 0.0 || !self.target_margin.is_finite() {
            return bad("target margin must be a positive finite number");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.max_len > MAX_GENERATED_LEN {
            return bad("sentences longer than 6 tokens are not enumerable cheaply");
        }
        if self.n_tags == 0 || self.vocab_size < self.n_tags {
            return bad("need at least one tag and one word per tag");
        }
        if self.n_sentences == 0 {
            return bad("need at least one sentence");
        }
        if self.attempts_per_sentence == 0 {
            return bad("attempts_per_sentence must be positive");
        }
        Ok(())
    }
}

/// A sparse unit vector over the hashed feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separator {
    entries: HashMap<u32, f64>,
}

impl Separator {
    /// Normalizes arbitrary sparse weights to unit Euclidean norm.
    pub fn from_weights(weights: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut entries: HashMap<u32, f64> = HashMap::new();
        for (i, w) in weights {
            *entries.entry(i).or_insert(0.0) += w;
        }
        entries.retain(|_, w| *w != 0.0);
        let norm = entries.values().map(|w| w * w).sum::<f64>().sqrt();
        for w in entries.values_mut() {
            *w /= norm;
        }
        Separator { entries }
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries.get(&index).copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, fv: &FeatureVector) -> f64 {
        fv.entries().iter().map(|&(i, c)| c as f64 * self.get(i)).sum()
    }

    /// Entries sorted by index.
    pub fn entries(&self) -> Vec<(u32, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&i, &w)| (i, w)).collect();
        v.sort_unstable_by_key(|&(i, _)| i);
        v
    }
}

pub type Corpus = Vec<(Sentence, DependencyTree)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Rule {
    /// `None` is ROOT.
    head: Option<usize>,
    child: usize,
    right: bool,
}

fn tag_name(t: usize) -> String {
    format!("T{t}")
}

fn rule_key(rule: Rule, config: &FeatureConfig) -> u32 {
    let head_tag = rule.head.map(tag_name).unwrap_or_else(|| crate::corpus::ROOT_POS.to_string());
    let dir = if rule.right { Direction::Right } else { Direction::Left };
    config.index_of(&head_child_tag_key(&head_tag, &tag_name(rule.child), dir))
}

/// Size of the rule set so that a one-edge score gap clears `margin` after
/// normalization.
fn rule_budget(margin: f64) -> usize {
    (1.0 / (margin * margin)).floor() as usize
}

/// Builds a corpus that the returned separator separates with margin at
/// least `spec.target_margin`, verified by enumerating every candidate.
pub fn generate_separable_corpus(
    spec: &SeparableSpec,
    config: &FeatureConfig,
) -> Result<(Corpus, Separator), ConvlabError> {
    spec.validate()?;
    config.validate().map_err(|e| ConvlabError::Spec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let budget = rule_budget(spec.target_margin);
    if budget < 2 && spec.max_len >= 2 {
        return Err(ConvlabError::Spec(format!(
            "target margin {} is unreachable: at most {budget} grammar rule(s) fit",
            spec.target_margin
        )));
    }
    // one rule per unordered tag pair and no self rules: X -> X, or both
    // X -> Y and Y -> X, let chains and flat attachments tie
    let mut candidates: Vec<Rule> = Vec::new();
    for a in 0..spec.n_tags {
        for b in a + 1..spec.n_tags {
            let (h, c) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            candidates.push(Rule {
                head: Some(h),
                child: c,
                right: rng.gen_bool(0.5),
            });
        }
    }
    candidates.shuffle(&mut rng);
    let root_rule = Rule {
        head: None,
        child: rng.gen_range(0..spec.n_tags),
        right: true,
    };
    let n_rules = budget.min(1 + candidates.len()).max(1);
    let mut rules = vec![root_rule];
    rules.extend(candidates.into_iter().take(n_rules - 1));

    let separator = Separator::from_weights(rules.iter().map(|&r| (rule_key(r, config), 1.0)));

    let words_per_tag = spec.vocab_size / spec.n_tags;
    let mut corpus = Vec::with_capacity(spec.n_sentences);
    for sentence_idx in 0..spec.n_sentences {
        let mut best_seen = f64::NEG_INFINITY;
        let mut accepted = None;
        for _ in 0..spec.attempts_per_sentence {
            let Some(tags) = sample_tags(&rules, spec, &mut rng) else {
                continue;
            };
            let tokens: Vec<Token> = tags
                .iter()
                .map(|&t| {
                    let w = rng.gen_range(0..words_per_tag);
                    Token::new(format!("w{}", t * words_per_tag + w), tag_name(t))
                })
                .collect();
            let sentence = Sentence::new(tokens).expect("non-empty");
            let (gold, gap) = separator_optimum(&sentence, &separator, config)?;
            if gap >= spec.target_margin {
                accepted = Some((sentence, gold));
                break;
            }
            best_seen = best_seen.max(gap);
        }
        match accepted {
            Some(pair) => corpus.push(pair),
            None => {
                return Err(ConvlabError::Budget {
                    target: spec.target_margin,
                    achieved: best_seen,
                    attempts: spec.attempts_per_sentence,
                    sentence: sentence_idx,
                })
            }
        }
    }
    Ok((corpus, separator))
}

/// Samples a tag sequence by growing a random tree from the rules.
fn sample_tags(rules: &[Rule], spec: &SeparableSpec, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let target = rng.gen_range(spec.min_len..=spec.max_len);
    let root_children: Vec<&Rule> = rules.iter().filter(|r| r.head.is_none()).collect();
    let first = root_children.choose(rng)?.child;
    // a tree as nested (tag, left dependents, right dependents); linearized
    // in-order, which keeps it projective
    struct Node {
        tag: usize,
        left: Vec<usize>,
        right: Vec<usize>,
    }
    let mut nodes = vec![Node {
        tag: first,
        left: vec![],
        right: vec![],
    }];
    let mut frontier = vec![0usize];
    let mut roots = vec![0usize];
    while nodes.len() < target {
        if frontier.is_empty() {
            // start another dependent of ROOT
            let tag = root_children.choose(rng)?.child;
            nodes.push(Node {
                tag,
                left: vec![],
                right: vec![],
            });
            roots.push(nodes.len() - 1);
            frontier.push(nodes.len() - 1);
            continue;
        }
        let pick = rng.gen_range(0..frontier.len());
        let parent = frontier[pick];
        let options: Vec<&Rule> = rules
            .iter()
            .filter(|r| r.head == Some(nodes[parent].tag))
            .collect();
        if options.is_empty() || rng.gen_bool(0.2) {
            frontier.swap_remove(pick);
            continue;
        }
        let rule = *options.choose(rng)?;
        nodes.push(Node {
            tag: rule.child,
            left: vec![],
            right: vec![],
        });
        let id = nodes.len() - 1;
        if rule.right {
            nodes[parent].right.push(id);
        } else {
            nodes[parent].left.push(id);
        }
        frontier.push(id);
    }
    fn linearize(nodes: &[Node], id: usize, out: &mut Vec<usize>) {
        for &l in nodes[id].left.iter().rev() {
            linearize(nodes, l, out);
        }
        out.push(nodes[id].tag);
        for &r in &nodes[id].right {
            linearize(nodes, r, out);
        }
    }
    let mut tags = Vec::with_capacity(nodes.len());
    for &r in &roots {
        linearize(&nodes, r, &mut tags);
    }
    Some(tags)
}

/// Candidate trees with their feature vectors for one sentence.
struct CandidateSet {
    trees: Vec<DependencyTree>,
    features: Vec<FeatureVector>,
}

fn candidates(sentence: &Sentence, config: &FeatureConfig) -> Result<CandidateSet, ConvlabError> {
    let n = sentence.len();
    let prepared = PreparedSentence::new(sentence);
    let mut edge = vec![FeatureVector::new(); (n + 1) * (n + 1)];
    for h in 0..=n {
        for c in 1..=n {
            if h != c {
                edge[h * (n + 1) + c] = prepared.edge_vector(h, c, config).expect("valid edge");
            }
        }
    }
    let trees = enumerate_projective_trees(n)?;
    let features = trees
        .iter()
        .map(|t| {
            let mut fv = FeatureVector::new();
            for (h, c) in t.edges() {
                fv.add_assign(&edge[h * (n + 1) + c]);
            }
            if config.order == ModelOrder::Second {
                for_each_sibling_part(t, |h, c, s| {
                    fv.add_assign(&prepared.sibling_vector(h, c, s, config).expect("valid part"));
                });
            }
            fv
        })
        .collect();
    Ok(CandidateSet { trees, features })
}

/// Separator-optimal tree and its gap to the runner-up (infinite when the
/// sentence has a single candidate).
fn separator_optimum(
    sentence: &Sentence,
    separator: &Separator,
    config: &FeatureConfig,
) -> Result<(DependencyTree, f64), ConvlabError> {
    let set = candidates(sentence, config)?;
    let scores: Vec<f64> = set.features.iter().map(|fv| separator.dot(fv)).collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((set.trees[best].clone(), scores[best] - runner_up))
}

fn check_lengths(corpus: &[(Sentence, DependencyTree)]) -> Result<(), ConvlabError> {
    if let Some((s, _)) = corpus.iter().find(|(s, _)| s.len() > MAX_BRUTE_FORCE_LEN) {
        return Err(DecodeError::TooLong {
            n: s.len(),
            limit: MAX_BRUTE_FORCE_LEN,
        }
        .into());
    }
    Ok(())
}

/// δ: minimum over examples and incorrect candidates z of U·Φ(y) − U·Φ(z).
/// Infinite when no example has an incorrect candidate.
pub fn compute_margin(
    corpus: &[(Sentence, DependencyTree)],
    separator: &Separator,
    config: &FeatureConfig,
) -> Result<f64, ConvlabError> {
    check_lengths(corpus)?;
    let mut margin = f64::INFINITY;
    for (sentence, gold) in corpus {
        let set = candidates(sentence, config)?;
        let gold_score = separator.dot(&PreparedSentence::new(sentence).tree_vector(gold, config));
        for (tree, fv) in set.trees.iter().zip(&set.features) {
            if tree != gold {
                margin = margin.min(gold_score - separator.dot(fv));
            }
        }
    }
    Ok(margin)
}

/// R: maximum over examples and candidates z of ‖Φ(y) − Φ(z)‖₂.
pub fn compute_radius(corpus: &[(Sentence, DependencyTree)], config: &FeatureConfig) -> Result<f64, ConvlabError> {
    check_lengths(corpus)?;
    let mut radius: f64 = 0.0;
    for (sentence, gold) in corpus {
        let set = candidates(sentence, config)?;
        let gold_fv = PreparedSentence::new(sentence).tree_vector(gold, config);
        for fv in &set.features {
            radius = radius.max(gold_fv.distance_to(fv));
        }
    }
    Ok(radius)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub delta: f64,
    pub radius: f64,
    pub k: usize,
    pub source: String,
    /// Time steps counted against the bounds: full steps for a full-delay
    /// trace, `ceil(updates / k)` for a parallel training trace.
    pub steps_observed: u64,
    pub partial_steps: u64,
    pub separable: bool,
    pub bound_worst: Option<f64>,
    pub bound_optimal: Option<f64>,
    /// Worst-case verdict; only issued for full-delay traces.
    pub worst_case_holds: Option<bool>,
    /// steps_observed / bound_optimal.
    pub optimal_ratio: Option<f64>,
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "source          {}", self.source)?;
        writeln!(f, "k               {}", self.k)?;
        writeln!(f, "delta           {:.6}", self.delta)?;
        writeln!(f, "radius          {:.6}", self.radius)?;
        writeln!(f, "steps_observed  {}", self.steps_observed)?;
        writeln!(f, "partial_steps   {}", self.partial_steps)?;
        if !self.separable {
            return writeln!(f, "verdict         not separable; bounds vacuous");
        }
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        writeln!(f, "bound_worst     {}", opt(self.bound_worst))?;
        writeln!(f, "bound_optimal   {}", opt(self.bound_optimal))?;
        writeln!(f, "optimal_ratio   {}", opt(self.optimal_ratio))?;
        match self.worst_case_holds {
            Some(true) => writeln!(f, "worst_case      holds"),
            Some(false) => writeln!(f, "worst_case      VIOLATED"),
            None => writeln!(f, "worst_case      n/a"),
        }
    }
}

/// Compares a trace against t ≤ R²/δ² (worst case, full-delay traces only)
/// and records t / (R²/(kδ²)) for the optimal case.
pub fn verify_bounds(trace: &TrainTrace, delta: f64, radius: f64, k: usize) -> ConvergenceReport {
    let full_delay = trace.mode == "full-delay";
    let k = k.max(1);
    let (steps_observed, partial_steps) = if full_delay {
        (trace.full_steps() as u64, trace.partial_steps() as u64)
    } else {
        (trace.total_updates.div_ceil(k as u64), 0)
    };
    let mut report = ConvergenceReport {
        delta,
        radius,
        k,
        source: trace.mode.clone(),
        steps_observed,
        partial_steps,
        separable: delta > 0.0,
        bound_worst: None,
        bound_optimal: None,
        worst_case_holds: None,
        optimal_ratio: None,
    };
    if !report.separable {
        return report;
    }
    let worst = radius * radius / (delta * delta);
    let optimal = worst / k as f64;
    report.bound_worst = Some(worst);
    report.bound_optimal = Some(optimal);
    if full_delay {
        report.worst_case_holds = Some(steps_observed as f64 <= worst);
    }
    report.optimal_ratio = Some(if optimal > 0.0 {
        steps_observed as f64 / optimal
    } else if steps_observed == 0 {
        0.0
    } else {
        f64::INFINITY
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FeatureConfig {
        FeatureConfig::new(18, ModelOrder::First).unwrap()
    }

    #[test]
    fn spec_validation() {
        let with_margin = |target_margin| SeparableSpec {
            target_margin,
            ..SeparableSpec::default()
        };
        assert!(with_margin(0.0).validate().is_err());
        assert!(with_margin(f64::NAN).validate().is_err());
        let long = SeparableSpec {
            max_len: 7,
            ..SeparableSpec::default()
        };
        assert!(long.validate().is_err());
        assert!(matches!(generate_separable_corpus(&with_margin(0.9), &cfg()), Err(ConvlabError::Spec(_))));
    }

    #[test]
    fn singleton_sentences_are_trivially_separable() {
        let spec = SeparableSpec {
            min_len: 1,
            max_len: 1,
            n_sentences: 5,
            target_margin: 0.9,
            ..SeparableSpec::default()
        };
        let (corpus, u) = generate_separable_corpus(&spec, &cfg()).unwrap();
        assert_eq!(corpus.len(), 5);
        assert_eq!(compute_margin(&corpus, &u, &cfg()).unwrap(), f64::INFINITY);
        assert_eq!(compute_radius(&corpus, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn separator_is_unit() {
        let (_, u) = generate_separable_corpus(&SeparableSpec::default(), &cfg()).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-12);
        assert!(u.support() >= 2);
    }

    #[test]
    fn length_guard() {
        let s = Sentence::from_pairs((0..9).map(|i| (format!("w{i}"), "X"))).unwrap();
        let t = DependencyTree::new((0..9).collect()).unwrap();
        let u = Separator::from_weights([(1, 1.0)]);
        assert!(compute_margin(&[(s.clone(), t.clone())], &u, &cfg()).is_err());
        assert!(compute_radius(&[(s, t)], &cfg()).is_err());
    }

    #[test]
    fn non_separable_report() {
        let trace = TrainTrace {
            mode: "full-delay".into(),
            k: 2,
            ..TrainTrace::default()
        };
        let r = verify_bounds(&trace, -0.5, 3.0, 2);
        assert!(!r.separable);
        assert!(r.bound_worst.is_none());
        assert!(r.to_string().contains("bounds vacuous"));
    }

    #[test]
    fn k1_bounds_coincide() {
        let trace = TrainTrace {
            mode: "full-delay".into(),
            k: 1,
            steps: vec![1, 1, 1],
            ..TrainTrace::default()
        };
        let r = verify_bounds(&trace, 0.5, 2.0, 1);
        assert_eq!(r.bound_worst, Some(16.0));
        assert_eq!(r.bound_optimal, r.bound_worst);
        assert_eq!(r.steps_observed, 3);
        assert_eq!(r.worst_case_holds, Some(true));
    }
}
