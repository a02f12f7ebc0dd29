//! Bidirectional transformer editor: projector + tied-embedding backbone
//! with LoRA adapters, the editing objective, and parallel inference.

pub mod config;
pub mod infer;
pub mod inputs;
pub mod loss;
pub mod model;

pub use config::{EditorConfig, LoraTargets};
pub use infer::{edit, multi_step_edit};
pub use inputs::EditConditions;
pub use loss::{cr_only_loss, editor_loss, LossGraph, LossParts};
pub use model::{EditorModel, ModelGraph};
