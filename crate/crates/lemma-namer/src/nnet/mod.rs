//! Differentiable computation core: dense arrays, a reverse-mode tape,
//! the layer set used by the sequence models, and finite-difference
//! gradient checking.

pub mod gradcheck;
pub mod layers;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckError};
pub use layers::{
    dropout_mask, Affine, Attention, AttentionScoring, BiLstmEncoder, CopyGate, Encoded, Fusion,
    LstmCell,
};
pub use tape::{NodeId, Tape};
pub use tensor::{GradStore, ParamSet, Tensor};
