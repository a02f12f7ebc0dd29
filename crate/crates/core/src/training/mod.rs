//! Training orchestration: configuration, the deterministic pipeline,
//! identity (copying-only) pretraining, and the ablation suite.

pub mod ablation;
pub mod config;
pub mod identity;
pub mod pipeline;

pub use ablation::{ablation_suite, AblationRow};
pub use config::{AblationFlags, TrainConfig, Variant};
pub use identity::{identity_pretrain, IdentityConfig, IdentityOutcome};
pub use pipeline::{load_checkpoint, resume, train, Trained};
