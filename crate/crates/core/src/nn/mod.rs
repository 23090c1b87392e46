//! Dense tensors, reverse-mode differentiation and attention layers.

pub mod adam;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{
    encoder_block, multi_head_attention, tau_schedule, tau_schedule_with, temperature_softmax,
};
pub use params::{Attention, EncoderBlock, Linear, Norm, ParamTree};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
