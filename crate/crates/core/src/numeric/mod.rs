//! Dense f64 tensors with a tape-based reverse-mode autodiff graph, LSTM
//! cells and the Adam optimizer.

mod graph;
mod lstm;
mod optim;
mod params;
mod tensor;

pub use self::graph::{Graph, Var};
pub use self::lstm::{bilstm_encode, lstm_step, BiLstm, LstmParams};
pub use self::optim::{Adam, AdamConfig};
pub use self::params::{rng_from_seed, Gradients, Init, ParamId, ParamSet};
pub use self::tensor::Tensor;

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum NumericError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}: non-finite value")]
    NonFinite(&'static str),

    #[error("{0}")]
    Usage(String),
}
