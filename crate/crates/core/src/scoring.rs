//! Builds score tables from live weights and runs the matching decoder.

use crate::corpus::{DependencyTree, Sentence};
use crate::decoder::{eisner_decode, eisner_decode_second_order, EdgeScoreMatrix, SiblingScoreTable};
use crate::features::{ModelOrder, PreparedSentence};
use crate::model::WeightModel;

/// Edge scores s(h, c) = α · f(h, c) for every candidate edge.
pub fn edge_matrix(model: &WeightModel, sentence: &PreparedSentence) -> EdgeScoreMatrix {
    let cfg = model.config();
    EdgeScoreMatrix::from_fn(sentence.len(), |h, c| {
        let mut s = 0.0;
        sentence.for_each_edge_key(h, c, cfg, |k| s += model.weight(cfg.index_of(&k)));
        s
    })
}

pub fn sibling_table(model: &WeightModel, sentence: &PreparedSentence) -> SiblingScoreTable {
    let cfg = model.config();
    SiblingScoreTable::from_fn(sentence.len(), |h, c, sib| {
        let mut s = 0.0;
        sentence.for_each_sibling_key(h, c, sib, cfg, |k| s += model.weight(cfg.index_of(&k)));
        s
    })
}

/// Result of decoding one sentence against the weights as they were read.
pub struct Decoded {
    pub tree: DependencyTree,
    pub score: f64,
    pub edges: EdgeScoreMatrix,
    pub siblings: Option<SiblingScoreTable>,
}

impl Decoded {
    /// Score of another tree under the same score tables.
    pub fn score_of(&self, tree: &DependencyTree) -> f64 {
        let mut s = self.edges.tree_score(tree);
        if let Some(sib) = &self.siblings {
            s += sib.tree_score(tree);
        }
        s
    }
}

pub fn decode(model: &WeightModel, sentence: &PreparedSentence) -> Decoded {
    let edges = edge_matrix(model, sentence);
    match model.config().order {
        ModelOrder::First => {
            let (tree, score) = eisner_decode(&edges).expect("sentences are non-empty");
            Decoded {
                tree,
                score,
                edges,
                siblings: None,
            }
        }
        ModelOrder::Second => {
            let siblings = sibling_table(model, sentence);
            let (tree, score) = eisner_decode_second_order(&edges, &siblings).expect("sentences are non-empty");
            Decoded {
                tree,
                score,
                edges,
                siblings: Some(siblings),
            }
        }
    }
}

pub fn parse_sentence(model: &WeightModel, sentence: &Sentence) -> DependencyTree {
    decode(model, &PreparedSentence::new(sentence)).tree
}
