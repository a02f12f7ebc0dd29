//! Dense-tensor math with reverse-mode autodiff, optimizer, schedule, RNG,
//! parameter registry, and the checkpoint archive format.

pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;

pub use optim::{adamw_step, cosine_lr, AdamW, AdamWConfig};
pub use params::{is_lora_name, Param, ParamStore};
pub use scalar::{sc, Dtype, Precision, Scalar};
pub use tape::{Tape, Tensor, TensorId};
