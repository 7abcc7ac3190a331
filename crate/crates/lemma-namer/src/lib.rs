//! Suggests names for Coq lemmas from their statements and elaborated terms,
//! using multi-input encoder-decoder models with attention and copying, plus
//! a tf-idf retrieval baseline and evaluation metrics.

pub mod corpus;
pub mod metrics;
pub mod nnet;
pub mod retrieval;
pub mod seq2seq;
pub mod sexp;
pub mod subtok;
pub mod synth;
pub mod tree;
