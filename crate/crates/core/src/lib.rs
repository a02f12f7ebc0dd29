//! Non-autoregressive transcript editing with latent CTC alignments.
//!
//! A compact end-to-end system: a synthetic noise-channel corpus stands in
//! for a speech front-end, a small bidirectional transformer with LoRA
//! adapters edits noisy hypotheses over interleaved insertion-slot layouts,
//! and an exact log-space CTC objective with a copying regularizer drives
//! training. Includes an autoregressive baseline, WER decomposition, sweeps,
//! and a parallelism benchmark.
//!
//! Core math is generic over the scalar type (`numerics::Scalar`); f64 is
//! used by test oracles, f32 for training throughput. Concrete aliases are
//! exported at the crate root.

pub mod error;
pub mod numerics;

pub use error::{Error, Result};

/// f64 tape: mandatory for oracles and gradient checks.
pub type Tape64 = numerics::Tape<f64>;
/// f32 tape: permitted for training throughput.
pub type Tape32 = numerics::Tape<f32>;
pub type ParamStore64 = numerics::ParamStore<f64>;
pub type ParamStore32 = numerics::ParamStore<f32>;

pub mod ctc;

/// Token index into the shared vocabulary (blank included).
pub type TokenId = usize;

pub mod interleave;

pub mod corpus;

pub mod editor;

pub mod baselines;

pub mod eval;
pub mod parallel;

pub mod training;

pub mod selftest;
