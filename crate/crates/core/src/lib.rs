//! Treebank-to-report toolkit: CoNLL-U handling, auxiliary verb construction
//! extraction, a BiLSTM arc-hybrid parser with optional subtree composition,
//! CBOW embeddings, diagnostic probes and result statistics.

pub mod cbow;
pub mod conllu;
pub mod numeric;
pub mod parser;
pub mod pipeline;
pub mod probe;
pub mod stats;
pub mod synthetic;
pub mod treebank;
