//! Minimal differentiable-operation substrate: tensors, conv/LSTM/MLP
//! primitives with explicit backwards, Adam, checkpointing, and a
//! finite-difference gradient checker.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod ops;
pub mod scalar;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    export_params, import_params, read_checkpoint, write_checkpoint, CheckpointEntry,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{BiLstm, LstmCell};
pub use ops::{
    act_backward, apply_act, conv1d, conv1d_backward, conv1d_transposed,
    conv1d_transposed_backward, sigmoid, ActKind, Conv1d, ConvTranspose1d, Linear, Mlp,
};
pub use scalar::{Dtype, Scalar};
pub use tensor::{
    for_each_param, param_count, randomize_params, zero_grads, Activation, Param, Parameterized,
    Tensor,
};
