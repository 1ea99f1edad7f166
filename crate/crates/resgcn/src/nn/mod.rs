//! Minimal training substrate: dense tensors, recorded reverse-mode
//! gradients, and Adam. No GPU, no mixed precision — everything is f64 and
//! deterministic for a fixed seed.

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Tape, Var};
pub use tensor::{exp_neg, glorot_init, relu, sigmoid, sigmoid_scalar, Tensor2};
