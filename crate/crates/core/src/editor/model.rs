//! The bidirectional editor backbone: tied-embedding transformer blocks with
//! frozen base weights plus LoRA adapters, and a mean-pool + linear projector
//! that maps pseudo-acoustic frames into the model width.
//!
//! One parameter store serves three roles: the causal base LM (pretraining
//! and the restore-toggle contract), the bidirectional editor (LoRA +
//! projector), and the causal AR baseline (same backbone, causal attention,
//! next-token objective).

use super::config::EditorConfig;
use crate::numerics::checkpoint::{self, Entry, Manifest};
use crate::numerics::rng::{labeled, normal_f64};
use crate::numerics::scalar::{sc, Scalar};
use crate::numerics::tape::{Tape, TensorId};
use crate::numerics::ParamStore;
use crate::{Error, Result, TokenId};
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicU64, Ordering};

pub struct EditorModel<S: Scalar> {
    pub config: EditorConfig,
    pub store: ParamStore<S>,
    pub seed: u64,
    lora_enabled: bool,
    forward_calls: AtomicU64,
}

/// A built forward graph plus the mapping from store indices to tape leaves,
/// used to pull per-parameter gradients after backward.
pub struct ModelGraph<S: Scalar> {
    pub tape: Tape<S>,
    leaves: Vec<Option<TensorId>>,
}

impl<S: Scalar> ModelGraph<S> {
    /// Gradients aligned with the store; None for parameters that were not
    /// trainable leaves in this graph.
    pub fn collect_grads(&self) -> Vec<Option<Vec<S>>> {
        self.leaves
            .iter()
            .map(|l| {
                l.and_then(|id| self.tape.grad(id).map(|g| g.to_vec()))
            })
            .collect()
    }

    pub fn leaf_of(&self, store_idx: usize) -> Option<TensorId> {
        self.leaves[store_idx]
    }
}

struct Builder<'m, S: Scalar> {
    tape: Tape<S>,
    model: &'m EditorModel<S>,
    leaves: Vec<Option<TensorId>>,
    grad_mode: bool,
}

impl<'m, S: Scalar> Builder<'m, S> {
    fn new(model: &'m EditorModel<S>, grad_mode: bool) -> Self {
        Builder {
            tape: Tape::new(),
            model,
            leaves: vec![None; model.store.len()],
            grad_mode,
        }
    }

    fn param(&mut self, name: &str) -> Result<TensorId> {
        let idx = self
            .model
            .store
            .id_of(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        if let Some(id) = self.leaves[idx] {
            return Ok(id);
        }
        let p = self.model.store.get(idx);
        let rg = self.grad_mode && p.trainable;
        let id = self.tape.leaf(&p.shape, p.value.clone(), rg)?;
        self.leaves[idx] = Some(id);
        Ok(id)
    }

    fn linear(&mut self, x: TensorId, base: &str, lora: bool) -> Result<TensorId> {
        let w = self.param(&format!("{base}.w"))?;
        let mut y = self.tape.matmul(x, w)?;
        if lora {
            let a = self.param(&format!("{base}.lora_a"))?;
            let b = self.param(&format!("{base}.lora_b"))?;
            let xa = self.tape.matmul(x, a)?;
            let delta = self.tape.matmul(xa, b)?;
            y = self.tape.add(y, delta)?;
        }
        Ok(y)
    }

    fn attention(
        &mut self,
        x: TensorId,
        layer: usize,
        causal: bool,
        lora: bool,
    ) -> Result<TensorId> {
        let heads = self.model.config.heads;
        let q = self.linear(x, &format!("layer{layer}.attn.q"), lora)?;
        let k = self.linear(x, &format!("layer{layer}.attn.k"), lora)?;
        let v = self.linear(x, &format!("layer{layer}.attn.v"), lora)?;
        let ctx = self.tape.mha(q, k, v, heads, causal)?;
        self.linear(ctx, &format!("layer{layer}.attn.o"), lora)
    }

    fn block(&mut self, x: TensorId, layer: usize, causal: bool, lora: bool) -> Result<TensorId> {
        let eps = sc::<S>(self.model.config.ln_eps);
        let g1 = self.param(&format!("layer{layer}.ln1.g"))?;
        let b1 = self.param(&format!("layer{layer}.ln1.b"))?;
        let h = self.tape.layer_norm(x, g1, b1, eps)?;
        let attn_lora = lora && self.model.config.lora_targets.attention;
        let attn = self.attention(h, layer, causal, attn_lora)?;
        let x = self.tape.add(x, attn)?;

        let g2 = self.param(&format!("layer{layer}.ln2.g"))?;
        let b2 = self.param(&format!("layer{layer}.ln2.b"))?;
        let h = self.tape.layer_norm(x, g2, b2, eps)?;
        let mlp_lora = lora && self.model.config.lora_targets.mlp;
        let a = self.linear(h, &format!("layer{layer}.mlp.fc1"), mlp_lora)?;
        let a = self.tape.gelu(a);
        let o = self.linear(a, &format!("layer{layer}.mlp.fc2"), mlp_lora)?;
        self.tape.add(x, o)
    }

    fn projector(
        &mut self,
        frames: &crate::corpus::Frames<S>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<TensorId> {
        let cfg = &self.model.config;
        if frames.cols != cfg.d_frame {
            return Err(Error::Dimension {
                op: "projector",
                lhs: vec![frames.rows, frames.cols],
                rhs: vec![cfg.d_frame],
            });
        }
        let f = self
            .tape
            .constant(&[frames.rows, frames.cols], frames.data.clone())?;
        let pooled = self.tape.mean_pool_rows(f, cfg.projector_downsample)?;
        let w = self.param("proj.w")?;
        let b = self.param("proj.b")?;
        let proj = self.tape.matmul(pooled, w)?;
        let mut proj = self.tape.add_row(proj, b)?;
        // dropout only during gradient-mode passes; validation and
        // inference always run it off
        if cfg.dropout > 0.0 && self.grad_mode {
            let rng = dropout_rng.ok_or_else(|| {
                Error::Config("dropout enabled but no dropout rng supplied".into())
            })?;
            proj = self.tape.dropout(proj, cfg.dropout, rng)?;
        }
        Ok(proj)
    }
}

fn sinusoidal_table<S: Scalar>(positions: usize, d: usize, amplitude: f64) -> Vec<S> {
    let mut out = vec![S::zero(); positions * d];
    for p in 0..positions {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            let angle = p as f64 * freq;
            out[p * d + 2 * i] = sc::<S>(amplitude * angle.sin());
            out[p * d + 2 * i + 1] = sc::<S>(amplitude * angle.cos());
        }
    }
    out
}

impl<S: Scalar> EditorModel<S> {
    pub fn init(config: EditorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let d = config.d_model;
        let v = config.vocab_size;
        let ff = config.d_ff;
        let r = config.lora_rank;

        let gauss = |name: &str, shape: &[usize], std: f64| -> (Vec<usize>, Vec<S>) {
            let mut rng = labeled(seed, &format!("init/{name}"));
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| sc::<S>(std * normal_f64(&mut rng))).collect();
            (shape.to_vec(), data)
        };
        let full = |shape: &[usize], value: S| -> (Vec<usize>, Vec<S>) {
            (shape.to_vec(), vec![value; shape.iter().product()])
        };

        let add = |store: &mut ParamStore<S>, name: &str, sv: (Vec<usize>, Vec<S>)| {
            store.add(name, sv.0, sv.1, true).map(|_| ())
        };

        add(&mut store, "embed.tok", gauss("embed.tok", &[v, d], 0.02))?;
        // Fixed sinusoidal position codes covering every position the
        // concatenated [acoustic; text] sequence can reach. They are never
        // trained, so disabling the adapters restores base behavior exactly
        // even though editor sequences use positions the base LM never saw.
        add(
            &mut store,
            "embed.pos",
            (
                vec![config.max_positions, d],
                sinusoidal_table::<S>(config.max_positions, d, 0.1),
            ),
        )?;
        add(&mut store, "proj.w", gauss("proj.w", &[config.d_frame, d], 0.02))?;
        add(&mut store, "proj.b", full(&[d], S::zero()))?;
        for i in 0..config.layers {
            for ln in ["ln1", "ln2"] {
                add(&mut store, &format!("layer{i}.{ln}.g"), full(&[d], S::one()))?;
                add(&mut store, &format!("layer{i}.{ln}.b"), full(&[d], S::zero()))?;
            }
            for proj in ["q", "k", "v", "o"] {
                let base = format!("layer{i}.attn.{proj}");
                add(&mut store, &format!("{base}.w"), gauss(&format!("{base}.w"), &[d, d], 0.02))?;
                if r > 0 && config.lora_targets.attention {
                    add(
                        &mut store,
                        &format!("{base}.lora_a"),
                        gauss(&format!("{base}.lora_a"), &[d, r], 0.02),
                    )?;
                    add(&mut store, &format!("{base}.lora_b"), full(&[r, d], S::zero()))?;
                }
            }
            let fc1 = format!("layer{i}.mlp.fc1");
            let fc2 = format!("layer{i}.mlp.fc2");
            add(&mut store, &format!("{fc1}.w"), gauss(&format!("{fc1}.w"), &[d, ff], 0.02))?;
            add(&mut store, &format!("{fc2}.w"), gauss(&format!("{fc2}.w"), &[ff, d], 0.02))?;
            if r > 0 && config.lora_targets.mlp {
                add(
                    &mut store,
                    &format!("{fc1}.lora_a"),
                    gauss(&format!("{fc1}.lora_a"), &[d, r], 0.02),
                )?;
                add(&mut store, &format!("{fc1}.lora_b"), full(&[r, ff], S::zero()))?;
                add(
                    &mut store,
                    &format!("{fc2}.lora_a"),
                    gauss(&format!("{fc2}.lora_a"), &[ff, r], 0.02),
                )?;
                add(&mut store, &format!("{fc2}.lora_b"), full(&[r, d], S::zero()))?;
            }
        }
        add(&mut store, "final_ln.g", full(&[d], S::one()))?;
        add(&mut store, "final_ln.b", full(&[d], S::zero()))?;
        if !config.tie_embeddings {
            add(&mut store, "out.w", gauss("out.w", &[d, v], 0.02))?;
        }

        Ok(EditorModel {
            config,
            store,
            seed,
            lora_enabled: true,
            forward_calls: AtomicU64::new(0),
        })
    }

    pub fn lora_enabled(&self) -> bool {
        self.lora_enabled
    }

    /// Enable or disable the LoRA adapters (disabling restores the base
    /// model's behavior exactly; base weights are never touched by
    /// adaptation).
    pub fn set_lora_enabled(&mut self, on: bool) {
        self.lora_enabled = on;
    }

    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn reset_forward_calls(&self) {
        self.forward_calls.store(0, Ordering::Relaxed);
    }

    /// Point the projector at the token-embedding space: frame dimension c
    /// (the one-hot slot of vocab symbol c) maps to that symbol's embedding
    /// row, extra noise dimensions to zero. Run after base pretraining so
    /// projected frames look like text to the frozen backbone from the
    /// first adapter step.
    pub fn init_projector_from_embeddings(&mut self) -> Result<()> {
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        let tok = self
            .store
            .by_name("embed.tok")
            .ok_or_else(|| Error::Config("missing embed.tok".into()))?
            .value
            .clone();
        let idx = self
            .store
            .id_of("proj.w")
            .ok_or_else(|| Error::Config("missing proj.w".into()))?;
        let p = self.store.get_mut(idx);
        p.value.iter_mut().for_each(|x| *x = S::zero());
        for c in 0..v.min(self.config.d_frame) {
            p.value[c * d..(c + 1) * d].copy_from_slice(&tok[c * d..(c + 1) * d]);
        }
        Ok(())
    }

    /// Mark base weights trainable (pretraining phase); adapters, projector,
    /// and the fixed position codes stay frozen.
    pub fn set_trainable_base(&mut self) {
        self.store.set_trainable(|n| {
            !crate::numerics::is_lora_name(n) && !n.starts_with("proj.") && n != "embed.pos"
        });
    }

    /// Mark only the adaptation parameters trainable: the projector, plus
    /// LoRA when `include_lora` (the NoLoRA ablation trains projector only).
    pub fn set_trainable_adapters(&mut self, include_lora: bool) {
        self.store.set_trainable(|n| {
            n.starts_with("proj.") || (include_lora && crate::numerics::is_lora_name(n))
        });
    }

    pub fn set_all_frozen(&mut self) {
        self.store.set_trainable(|_| false);
    }

    /// Concatenated [projected frames; embedded text] forward pass.
    ///
    /// Returns logits for the text positions only. `causal` overrides come
    /// from the configuration (`bidirectional: false` is the NoBidirect
    /// ablation); the AR baseline builds its own causal pass.
    pub fn forward_editor(
        &self,
        frames: &crate::corpus::Frames<S>,
        text: &[TokenId],
        grad_mode: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(ModelGraph<S>, TensorId)> {
        let causal = !self.config.bidirectional;
        self.forward_concat(frames, text, causal, self.lora_enabled, grad_mode, dropout_rng)
    }

    /// Causal forward over [frames; text] used by the AR baseline.
    pub fn forward_causal_with_frames(
        &self,
        frames: &crate::corpus::Frames<S>,
        text: &[TokenId],
        grad_mode: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(ModelGraph<S>, TensorId)> {
        self.forward_concat(frames, text, true, self.lora_enabled, grad_mode, dropout_rng)
    }

    fn forward_concat(
        &self,
        frames: &crate::corpus::Frames<S>,
        text: &[TokenId],
        causal: bool,
        lora: bool,
        grad_mode: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(ModelGraph<S>, TensorId)> {
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let cfg = &self.config;
        let lora = lora && cfg.lora_rank > 0;
        let t_down = frames.rows.div_ceil(cfg.projector_downsample);
        let total = t_down + text.len();
        if total > cfg.max_positions {
            return Err(Error::Length {
                length: total,
                max_positions: cfg.max_positions,
            });
        }
        let mut b = Builder::new(self, grad_mode);
        let proj = b.projector(frames, dropout_rng)?;
        let tok = b.param("embed.tok")?;
        let emb = b.tape.embedding(tok, text)?;
        let z = b.tape.concat_rows(proj, emb)?;
        let pos_table = b.param("embed.pos")?;
        let pos = b.tape.slice_rows(pos_table, 0, total)?;
        let mut x = b.tape.add(z, pos)?;
        for layer in 0..cfg.layers {
            x = b.block(x, layer, causal, lora)?;
        }
        let gf = b.param("final_ln.g")?;
        let bf = b.param("final_ln.b")?;
        let eps = sc::<S>(cfg.ln_eps);
        let h = b.tape.layer_norm(x, gf, bf, eps)?;
        let h_text = b.tape.slice_rows(h, t_down, total)?;
        let logits = self.output_logits(&mut b, h_text)?;
        Ok((
            ModelGraph {
                tape: b.tape,
                leaves: b.leaves,
            },
            logits,
        ))
    }

    /// Causal next-token forward with LoRA off and no acoustic input: the
    /// base language model, exactly as pretrained.
    pub fn base_mode_forward(
        &self,
        tokens: &[TokenId],
        grad_mode: bool,
    ) -> Result<(ModelGraph<S>, TensorId)> {
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let cfg = &self.config;
        if tokens.len() > cfg.max_positions {
            return Err(Error::Length {
                length: tokens.len(),
                max_positions: cfg.max_positions,
            });
        }
        let mut b = Builder::new(self, grad_mode);
        let tok = b.param("embed.tok")?;
        let emb = b.tape.embedding(tok, tokens)?;
        let pos_table = b.param("embed.pos")?;
        let pos = b.tape.slice_rows(pos_table, 0, tokens.len())?;
        let mut x = b.tape.add(emb, pos)?;
        for layer in 0..cfg.layers {
            x = b.block(x, layer, true, false)?;
        }
        let gf = b.param("final_ln.g")?;
        let bf = b.param("final_ln.b")?;
        let eps = sc::<S>(cfg.ln_eps);
        let h = b.tape.layer_norm(x, gf, bf, eps)?;
        let logits = self.output_logits(&mut b, h)?;
        Ok((
            ModelGraph {
                tape: b.tape,
                leaves: b.leaves,
            },
            logits,
        ))
    }

    fn output_logits(&self, b: &mut Builder<'_, S>, h: TensorId) -> Result<TensorId> {
        if self.config.tie_embeddings {
            let tok = b.param("embed.tok")?;
            b.tape.matmul_nt(h, tok)
        } else {
            let w = b.param("out.w")?;
            b.tape.matmul(h, w)
        }
    }

    pub fn save(&self, path: &std::path::Path, manifest: &Manifest) -> Result<()> {
        let entries: Vec<Entry<S>> = self
            .store
            .iter()
            .map(|p| Entry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.value.clone(),
            })
            .collect();
        checkpoint::save(path, manifest, &entries)
    }

    /// Load parameter values from an archive into a freshly initialized
    /// model with the same configuration. Extra archive entries (e.g.
    /// optimizer state) are returned untouched.
    pub fn load_into(&mut self, path: &std::path::Path) -> Result<(Manifest, Vec<Entry<S>>)> {
        let (manifest, entries) = checkpoint::load::<S>(path)?;
        let mut extra = Vec::new();
        for e in entries {
            match self.store.id_of(&e.name) {
                Some(idx) => {
                    let p = self.store.get_mut(idx);
                    if p.shape != e.shape {
                        return Err(Error::Checkpoint(format!(
                            "shape mismatch for {}: {:?} vs {:?}",
                            e.name, p.shape, e.shape
                        )));
                    }
                    p.value = e.data;
                }
                None => extra.push(e),
            }
        }
        Ok((manifest, extra))
    }

    /// Snapshot of every parameter value, for bit-exactness checks.
    pub fn snapshot(&self) -> Vec<(String, Vec<S>)> {
        self.store
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }
}
