//! Dense arithmetic, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState, WeightDecay};
pub use ops::{
    cosine_matrix, dropout, dropout_mask, leaky_relu, masked_row_softmax, row_log_softmax, row_softmax,
    DEFAULT_LEAKY_SLOPE,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{cosine_sim, Tensor2, COSINE_EPS};
