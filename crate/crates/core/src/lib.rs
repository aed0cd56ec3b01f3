//! Constituency parsing laboratory: an unstructured span-chart parser and a
//! structured in-order shift-reduce parser over hashed features or imported
//! word vectors, with evalb-style evaluation and cross-domain reporting.

pub mod chart;
pub mod eval;
pub mod experiment;
pub mod inorder;
pub mod linear;
pub mod persist;
pub mod repr;
pub mod synthetic;
pub mod train;
pub mod tree;
pub mod treebank;

use thiserror::Error;

pub use chart::{cky_decode, score_spans, train_chart, ChartModel, SpanScoreGrid};
pub use eval::{
    corpus_f1, delta_err, err_reduction, eval_brackets, exact_match, f1_min_span_length, BracketSet, EvalConfig,
    F1Score, GapStat,
};
pub use inorder::{beam_decode, execute, oracle_actions, train_inorder, Action, InOrderModel, ParserState};
pub use repr::{load_vector_table, FeatureHasher, FeatureVector, Projection, VectorTable};
pub use train::{lr_schedule, Corpus, TrainConfig};
pub use tree::{CollapsedLabel, ParseTree, Span, Word};

/// Errors shared by decoding and training.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot parse an empty sentence")]
    EmptySentence,
    #[error("model was trained with imported vectors but none were given")]
    MissingVectors,
    #[error("{found} vectors given for a sentence of {expected} words")]
    VectorRows { expected: usize, found: usize },
    #[error(transparent)]
    Vector(#[from] repr::VectorError),
    #[error(transparent)]
    Tree(#[from] tree::TreeError),
    #[error(transparent)]
    Transition(#[from] inorder::TransitionError),
    #[error("training treebank is empty")]
    EmptyTreebank,
    #[error("development treebank is empty")]
    EmptyDev,
    #[error(transparent)]
    Config(#[from] train::ConfigError),
}

/// Order-preserving map, parallel when the `parallel` feature is on.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
