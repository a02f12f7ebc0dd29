//! Editor/backbone configuration.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LoraTargets {
    pub attention: bool,
    pub mlp: bool,
}

impl Default for LoraTargets {
    fn default() -> Self {
        LoraTargets {
            attention: true,
            mlp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EditorConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    /// Feature width of the pseudo-acoustic frames.
    pub d_frame: usize,
    /// 0 disables LoRA parameters entirely.
    pub lora_rank: usize,
    pub lora_targets: LoraTargets,
    pub bidirectional: bool,
    pub tie_embeddings: bool,
    pub projector_downsample: usize,
    pub max_positions: usize,
    /// Present as an operation; the base configuration keeps it off.
    pub dropout: f64,
    pub ln_eps: f64,
}

impl Default for EditorConfig {
    fn default() -> Self {
        // Sized for a few-minute training run on a couple of CPU cores.
        EditorConfig {
            layers: 2,
            d_model: 64,
            heads: 2,
            d_ff: 256,
            vocab_size: crate::corpus::vocab::VOCAB_SIZE,
            d_frame: crate::corpus::FrameConfig::default().d_frame(),
            lora_rank: 16,
            lora_targets: LoraTargets::default(),
            bidirectional: true,
            tie_embeddings: true,
            projector_downsample: 5,
            max_positions: 512,
            dropout: 0.0,
            ln_eps: 1e-5,
        }
    }
}

impl EditorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.layers == 0 || self.heads == 0 {
            return Err(Error::Config("layers, d_model, heads must be >= 1".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.projector_downsample == 0 {
            return Err(Error::Config("projector_downsample must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}
