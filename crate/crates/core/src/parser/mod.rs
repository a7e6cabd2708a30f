//! Greedy arc-hybrid parser with a swap transition, BiLSTM features and
//! optional recursive composition of auxiliary verb constructions.

mod eval;
mod io;
mod model;
mod oracle;
mod train;
mod transition;
mod vocab;

pub use self::eval::{evaluate_las, EvalReport, LabelScore};
pub use self::io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use self::model::{Encoded, ModelConfig, ParseOutput, ParserModel, TokenVectors};
pub use self::oracle::{min_cost, oracle_costs, static_transition, GoldTree, Oracle};
pub use self::train::{parse_treebank, render_log, sentence_loss, train_parser, EpochLog, TrainConfig, TrainedParser};
pub use self::transition::{Configuration, Move, Transition, ROOT};
pub use self::vocab::{Vocab, UNKNOWN};

use thiserror::Error;

use crate::numeric::NumericError;

#[derive(Debug, Error)]
pub enum ParserError {
    #[error(transparent)]
    Numeric(#[from] NumericError),

    #[error("{0}")]
    Usage(String),

    #[error("misaligned treebanks: {0}")]
    Alignment(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error("corrupt model file: {0}")]
    Integrity(String),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
pub(crate) mod tests;
