//! Training configuration and the plain-text key/value config format.
//! The canonical key/value rendering is what gets hashed into checkpoint
//! and run manifests.

use crate::editor::{EditorConfig, LoraTargets};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AblationFlags {
    pub no_cr: bool,
    pub no_bidirect: bool,
    pub end_padding: bool,
    pub no_audio_emb: bool,
    pub no_ctc_hyp: bool,
    pub no_lora: bool,
}

impl AblationFlags {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_cr {
            parts.push("NoCR");
        }
        if self.no_bidirect {
            parts.push("NoBidirect");
        }
        if self.end_padding {
            parts.push("EndPadding");
        }
        if self.no_audio_emb {
            parts.push("NoAudioEmb");
        }
        if self.no_ctc_hyp {
            parts.push("NoCTCHyp");
        }
        if self.no_lora {
            parts.push("NoLoRA");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    Editor,
    Ar,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Editor => "editor",
            Variant::Ar => "ar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub steps: u64,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub min_lr_frac: f64,
    pub lambda_cr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub density: usize,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    /// Causal next-token pretraining steps for the base model.
    pub base_steps: u64,
    /// Leading adapter steps trained with the copying objective only,
    /// instilling the identity bias before the CTC term joins. Counted
    /// within `steps`.
    pub cr_warmup_steps: u64,
    pub base_peak_lr: f64,
    /// Validation utterances per evaluation (fixed subset, fixed order).
    pub valid_cap: usize,
    pub workers: usize,
    pub ablation: AblationFlags,
    pub model: EditorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Editor,
            steps: 5000,
            batch_size: 32,
            peak_lr: 2e-3,
            warmup_frac: 0.05,
            min_lr_frac: 0.01,
            lambda_cr: 0.02,
            weight_decay: 0.01,
            seed: 7,
            density: 1,
            eval_every: 500,
            checkpoint_every: 1000,
            base_steps: 800,
            cr_warmup_steps: 300,
            base_peak_lr: 2e-3,
            valid_cap: 200,
            workers: 1,
            ablation: AblationFlags::default(),
            model: EditorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.peak_lr <= 0.0 || self.base_peak_lr <= 0.0 {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config(format!(
                "warmup_frac {} outside [0,1)",
                self.warmup_frac
            )));
        }
        if self.lambda_cr < 0.0 {
            return Err(Error::Config("lambda_cr must be >= 0".into()));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("steps and batch_size must be >= 1".into()));
        }
        if self.density == 0 {
            return Err(Error::Config("density must be >= 1".into()));
        }
        self.model.validate()
    }

    /// Canonical key/value rendering (sorted keys); its hash identifies the
    /// run configuration in manifests.
    pub fn to_kv(&self) -> String {
        let flags = &self.ablation;
        let m = &self.model;
        let mut pairs: Vec<(String, String)> = vec![
            ("train.variant".into(), self.variant.name().into()),
            ("train.steps".into(), self.steps.to_string()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            ("train.peak_lr".into(), self.peak_lr.to_string()),
            ("train.warmup_frac".into(), self.warmup_frac.to_string()),
            ("train.min_lr_frac".into(), self.min_lr_frac.to_string()),
            ("train.lambda_cr".into(), self.lambda_cr.to_string()),
            ("train.weight_decay".into(), self.weight_decay.to_string()),
            ("train.seed".into(), self.seed.to_string()),
            ("train.density".into(), self.density.to_string()),
            ("train.eval_every".into(), self.eval_every.to_string()),
            (
                "train.checkpoint_every".into(),
                self.checkpoint_every.to_string(),
            ),
            ("train.base_steps".into(), self.base_steps.to_string()),
            (
                "train.cr_warmup_steps".into(),
                self.cr_warmup_steps.to_string(),
            ),
            ("train.base_peak_lr".into(), self.base_peak_lr.to_string()),
            ("train.valid_cap".into(), self.valid_cap.to_string()),
            ("train.workers".into(), self.workers.to_string()),
            ("ablation.no_cr".into(), flags.no_cr.to_string()),
            ("ablation.no_bidirect".into(), flags.no_bidirect.to_string()),
            ("ablation.end_padding".into(), flags.end_padding.to_string()),
            ("ablation.no_audio_emb".into(), flags.no_audio_emb.to_string()),
            ("ablation.no_ctc_hyp".into(), flags.no_ctc_hyp.to_string()),
            ("ablation.no_lora".into(), flags.no_lora.to_string()),
            ("model.layers".into(), m.layers.to_string()),
            ("model.d_model".into(), m.d_model.to_string()),
            ("model.heads".into(), m.heads.to_string()),
            ("model.d_ff".into(), m.d_ff.to_string()),
            ("model.vocab_size".into(), m.vocab_size.to_string()),
            ("model.d_frame".into(), m.d_frame.to_string()),
            ("model.lora_rank".into(), m.lora_rank.to_string()),
            (
                "model.lora_attention".into(),
                m.lora_targets.attention.to_string(),
            ),
            ("model.lora_mlp".into(), m.lora_targets.mlp.to_string()),
            ("model.bidirectional".into(), m.bidirectional.to_string()),
            (
                "model.tie_embeddings".into(),
                m.tie_embeddings.to_string(),
            ),
            (
                "model.projector_downsample".into(),
                m.projector_downsample.to_string(),
            ),
            ("model.max_positions".into(), m.max_positions.to_string()),
            ("model.dropout".into(), m.dropout.to_string()),
            ("model.ln_eps".into(), m.ln_eps.to_string()),
        ];
        pairs.sort();
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn config_hash(&self) -> String {
        crate::numerics::checkpoint::content_hash(self.to_kv().as_bytes())
    }

    /// Apply one key/value pair (the config-file grammar).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
        }
        match key {
            "train.variant" => {
                self.variant = match value {
                    "editor" => Variant::Editor,
                    "ar" => Variant::Ar,
                    other => {
                        return Err(Error::Config(format!("unknown variant {other:?}")))
                    }
                }
            }
            "train.steps" => self.steps = p(key, value)?,
            "train.batch_size" => self.batch_size = p(key, value)?,
            "train.peak_lr" => self.peak_lr = p(key, value)?,
            "train.warmup_frac" => self.warmup_frac = p(key, value)?,
            "train.min_lr_frac" => self.min_lr_frac = p(key, value)?,
            "train.lambda_cr" => self.lambda_cr = p(key, value)?,
            "train.weight_decay" => self.weight_decay = p(key, value)?,
            "train.seed" => self.seed = p(key, value)?,
            "train.density" => self.density = p(key, value)?,
            "train.eval_every" => self.eval_every = p(key, value)?,
            "train.checkpoint_every" => self.checkpoint_every = p(key, value)?,
            "train.base_steps" => self.base_steps = p(key, value)?,
            "train.cr_warmup_steps" => self.cr_warmup_steps = p(key, value)?,
            "train.base_peak_lr" => self.base_peak_lr = p(key, value)?,
            "train.valid_cap" => self.valid_cap = p(key, value)?,
            "train.workers" => self.workers = p(key, value)?,
            "ablation.no_cr" => self.ablation.no_cr = p(key, value)?,
            "ablation.no_bidirect" => self.ablation.no_bidirect = p(key, value)?,
            "ablation.end_padding" => self.ablation.end_padding = p(key, value)?,
            "ablation.no_audio_emb" => self.ablation.no_audio_emb = p(key, value)?,
            "ablation.no_ctc_hyp" => self.ablation.no_ctc_hyp = p(key, value)?,
            "ablation.no_lora" => self.ablation.no_lora = p(key, value)?,
            "model.layers" => self.model.layers = p(key, value)?,
            "model.d_model" => self.model.d_model = p(key, value)?,
            "model.heads" => self.model.heads = p(key, value)?,
            "model.d_ff" => self.model.d_ff = p(key, value)?,
            "model.vocab_size" => self.model.vocab_size = p(key, value)?,
            "model.d_frame" => self.model.d_frame = p(key, value)?,
            "model.lora_rank" => self.model.lora_rank = p(key, value)?,
            "model.lora_attention" => self.model.lora_targets.attention = p(key, value)?,
            "model.lora_mlp" => self.model.lora_targets.mlp = p(key, value)?,
            "model.bidirectional" => self.model.bidirectional = p(key, value)?,
            "model.tie_embeddings" => self.model.tie_embeddings = p(key, value)?,
            "model.projector_downsample" => {
                self.model.projector_downsample = p(key, value)?
            }
            "model.max_positions" => self.model.max_positions = p(key, value)?,
            "model.dropout" => self.model.dropout = p(key, value)?,
            "model.ln_eps" => self.model.ln_eps = p(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines (# starts a comment) on top of defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key = value", no + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Make the model honor the ablation flags, and resolve the LoRA toggle.
    pub fn effective_model(&self) -> EditorConfig {
        let mut m = self.model.clone();
        if self.ablation.no_bidirect {
            m.bidirectional = false;
        }
        if self.variant == Variant::Ar {
            // the AR baseline is causal by construction
            m.bidirectional = false;
        }
        m
    }

    pub fn edit_conditions(&self) -> crate::editor::EditConditions {
        crate::editor::EditConditions {
            density: self.density,
            end_padding: self.ablation.end_padding,
            blank_hypothesis: self.ablation.no_ctc_hyp,
            zero_frames: self.ablation.no_audio_emb,
        }
    }

    pub fn effective_lambda(&self) -> f64 {
        if self.ablation.no_cr {
            0.0
        } else {
            self.lambda_cr
        }
    }

    /// The NoCR ablation removes the copying objective entirely, warmup
    /// included.
    pub fn effective_cr_warmup(&self) -> u64 {
        if self.ablation.no_cr {
            0
        } else {
            self.cr_warmup_steps
        }
    }
}

// keep LoraTargets referenced so config files can set both flags
const _: fn() -> LoraTargets = LoraTargets::default;
