//! Graph-based dependency parsing with structured perceptron training in
//! sequential, locked-parallel and lock-free parallel modes, plus tools for
//! measuring perceptron convergence against its mistake bounds.

pub mod cli;
pub mod convlab;
pub mod corpus;
pub mod decoder;
pub mod evalbench;
pub mod features;
pub mod model;
pub mod scoring;
pub mod synth;
pub mod trainer;

pub use corpus::{parse_conll, write_conll, DependencyTree, Sentence, Token};
pub use decoder::{eisner_decode, eisner_decode_second_order, EdgeScoreMatrix, SiblingScoreTable};
pub use features::{FeatureConfig, FeatureVector, ModelOrder};
pub use model::WeightModel;
pub use trainer::{train, TrainConfig, TrainMode, TrainTrace};
