//! Synthetic English-like treebank for desk-scale accuracy and speed runs.
//!
//! Trees are grown head-outward from a small generative grammar (clauses,
//! noun phrases, prepositional phrases, coordination, punctuation) and
//! linearized in order, so every tree is projective. Prepositional phrases
//! after an object noun attach to the noun or the verb with a per-preposition
//! preference, which leaves genuine attachment ambiguity for the learner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DependencyTree, Sentence, Token};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreebankSpec {
    pub n_sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for TreebankSpec {
    fn default() -> Self {
        TreebankSpec {
            n_sentences: 1000,
            min_len: 3,
            max_len: 40,
            seed: 1,
        }
    }
}

struct Node {
    form: String,
    tag: &'static str,
    /// Nearest first.
    left: Vec<Node>,
    /// Nearest first.
    right: Vec<Node>,
}

impl Node {
    fn leaf(form: String, tag: &'static str) -> Node {
        Node {
            form,
            tag,
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    fn size(&self) -> usize {
        1 + self.left.iter().map(Node::size).sum::<usize>() + self.right.iter().map(Node::size).sum::<usize>()
    }
}

const PREPOSITIONS: [&str; 10] = ["of", "in", "on", "with", "for", "at", "from", "by", "about", "under"];
// probability that a post-object PP headed by each preposition takes the noun
const NOUN_ATTACH: [f64; 10] = [0.97, 0.45, 0.5, 0.35, 0.55, 0.3, 0.6, 0.25, 0.8, 0.4];
const DETERMINERS: [&str; 6] = ["the", "a", "an", "this", "some", "every"];

struct Grammar {
    rng: ChaCha8Rng,
}

impl Grammar {
    fn zipf(&mut self, size: usize) -> usize {
        // skewed toward small indices, as word frequencies are
        let u: f64 = self.rng.gen();
        ((u * u * u) * size as f64) as usize % size
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn word(&mut self, stem: &str, size: usize) -> String {
        let i = self.zipf(size);
        format!("{stem}{i}")
    }

    fn noun_phrase(&mut self, depth: usize, allow_pp: bool) -> Node {
        let roll: f64 = self.rng.gen();
        let (tag, form) = if roll < 0.18 {
            ("PRP", self.word("pron", 8))
        } else if roll < 0.33 {
            ("NNP", self.word("Name", 300))
        } else if roll < 0.55 {
            ("NNS", self.word("things", 800))
        } else {
            ("NN", self.word("thing", 1500))
        };
        let mut np = Node::leaf(form, tag);
        if tag == "PRP" {
            return np;
        }
        if tag == "NNP" {
            while np.left.len() < 2 && self.chance(0.3) {
                let w = self.word("Name", 300);
                np.left.push(Node::leaf(w, "NNP"));
            }
        } else {
            if self.chance(0.12) {
                let w = self.word("thing", 1500);
                np.left.push(Node::leaf(w, "NN"));
            }
            while np.left.len() < 3 && self.chance(0.3) {
                let mut adj = Node::leaf(self.word("good", 400), "JJ");
                if self.chance(0.1) {
                    adj.left.push(Node::leaf(self.word("very", 30), "RB"));
                }
                np.left.push(adj);
            }
            if self.chance(0.05) {
                np.left.push(Node::leaf(self.word("num", 50), "CD"));
            }
            let det_p = if tag == "NN" { 0.75 } else { 0.3 };
            if self.chance(det_p) {
                let d = DETERMINERS[self.zipf(DETERMINERS.len())];
                np.left.push(Node::leaf(d.to_string(), "DT"));
            }
        }
        if allow_pp && depth < 3 && self.chance(0.12) {
            let p = self.rng.gen_range(0..PREPOSITIONS.len());
            np.right.push(self.prep_phrase(p, depth + 1));
        }
        np
    }

    fn prep_phrase(&mut self, prep: usize, depth: usize) -> Node {
        let mut pp = Node::leaf(PREPOSITIONS[prep].to_string(), "IN");
        pp.right.push(self.noun_phrase(depth, depth < 3));
        pp
    }

    fn clause(&mut self, depth: usize) -> Node {
        let aux = self.chance(0.15);
        let tag = if aux {
            "VB"
        } else if self.chance(0.5) {
            "VBD"
        } else {
            "VBZ"
        };
        let verb_id = self.zipf(600);
        let mut v = Node::leaf(format!("do{verb_id}"), tag);
        let transitive = verb_id % 4 != 3;

        if self.chance(0.08) {
            v.left.push(Node::leaf(self.word("often", 40), "RB"));
        }
        if aux {
            v.left.push(Node::leaf(self.word("will", 6), "MD"));
        }
        if self.chance(0.93) {
            v.left.push(self.noun_phrase(depth + 1, true));
        }

        if transitive && self.chance(0.85) {
            let mut obj = self.noun_phrase(depth + 1, false);
            let mut verb_pps = Vec::new();
            let mut n_pp = 0;
            while n_pp < 2 && self.chance(0.4) {
                n_pp += 1;
                let p = self.rng.gen_range(0..PREPOSITIONS.len());
                // verb identity nudges the preference a little
                let bias = if verb_id.is_multiple_of(3) { -0.15 } else { 0.05 };
                let pp = self.prep_phrase(p, depth + 2);
                if obj.tag != "PRP" && self.chance((NOUN_ATTACH[p] + bias).clamp(0.02, 0.98)) {
                    obj.right.push(pp);
                } else {
                    verb_pps.push(pp);
                }
            }
            v.right.push(obj);
            v.right.extend(verb_pps);
        } else if self.chance(0.5) {
            let p = self.rng.gen_range(0..PREPOSITIONS.len());
            v.right.push(self.prep_phrase(p, depth + 2));
        }
        if self.chance(0.08) {
            v.right.push(Node::leaf(self.word("often", 40), "RB"));
        }
        if depth < 1 && self.chance(0.08) {
            let mut sub = self.clause(depth + 1);
            sub.left.push(Node::leaf("that".to_string(), "IN"));
            v.right.push(sub);
        }
        if depth < 1 && self.chance(0.07) {
            v.right.push(Node::leaf(self.word("and", 3), "CC"));
            v.right.push(self.clause(depth + 1));
        }
        v
    }

    fn sentence(&mut self) -> Node {
        let mut root = self.clause(0);
        if self.chance(0.9) {
            root.right.push(Node::leaf(".".to_string(), "."));
        }
        root
    }
}

fn linearize(node: &Node, head: usize, tokens: &mut Vec<Token>, heads: &mut Vec<usize>) {
    // reserve this node's slot after its left subtree is laid out
    let left_size: usize = node.left.iter().map(Node::size).sum();
    let me = tokens.len() + left_size + 1;
    for l in node.left.iter().rev() {
        linearize(l, me, tokens, heads);
    }
    tokens.push(Token::new(node.form.clone(), node.tag));
    heads.push(head);
    debug_assert_eq!(tokens.len(), me);
    for r in &node.right {
        linearize(r, me, tokens, heads);
    }
}

/// Generates a deterministic projective treebank.
pub fn synthetic_treebank(spec: &TreebankSpec) -> Vec<(Sentence, DependencyTree)> {
    let mut g = Grammar {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    let mut out = Vec::with_capacity(spec.n_sentences);
    while out.len() < spec.n_sentences {
        let root = g.sentence();
        let size = root.size();
        if size < spec.min_len || size > spec.max_len {
            continue;
        }
        let mut tokens = Vec::with_capacity(size);
        let mut heads = Vec::with_capacity(size);
        linearize(&root, 0, &mut tokens, &mut heads);
        let sentence = Sentence::new(tokens).expect("non-empty");
        let tree = DependencyTree::new(heads).expect("generated trees are valid");
        out.push((sentence, tree));
    }
    out
}
