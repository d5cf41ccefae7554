//! Small dense neural-network kernel with hand-written backward passes.
//!
//! Every layer owns its [`Param`]s and exposes a `forward` that returns a
//! cache plus a `backward` that consumes the cache, accumulates parameter
//! gradients and returns input gradients. Recurrent cells share the
//! [`RecurrentCell`] interface so [`BiRnn`] can drive either a [`Gru`] or an
//! [`Lstm`].

mod attention;
mod checkpoint;
mod dense;
mod dropout;
pub mod gradcheck;
mod gru;
pub mod init;
pub mod linalg;
mod loss;
mod lstm;
mod optim;
mod param;
mod rnn;
mod tensor;

pub use attention::{Attention, AttentionCache};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dense::Dense;
pub use dropout::{dropout, DropoutMask, Mode};
pub use gru::{Gru, GruCache};
pub use loss::{softmax, softmax_xent};
pub use lstm::{Lstm, LstmCache, LstmState};
pub use optim::{adam_step, clip_grad_norm, Adam, AdamConfig, Sgd};
pub(crate) use param::{visit_child, visit_child_mut};
pub use param::{Param, ParamSet, Parameters};
pub use rnn::{BiRnn, BiRnnCache, RecurrentCell};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("tensor shape {shape:?} does not match data length {len}")]
    Shape { shape: Vec<usize>, len: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Dimension { what, expected, got })
    }
}
