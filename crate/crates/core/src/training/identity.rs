//! Copying-only pretraining: trains the model to reproduce its interleaved
//! input, the operational form of the identity-mapping bias. After a couple
//! hundred steps on random inputs, editing must return held-out inputs
//! unchanged nearly always.

use crate::corpus::vocab::Vocab;
use crate::corpus::{render_frames, FrameConfig};
use crate::editor::{cr_only_loss, edit, EditConditions, EditorModel};
use crate::numerics::rng::labeled;
use crate::numerics::scalar::Scalar;
use crate::numerics::{AdamW, AdamWConfig};
use crate::parallel::run_ordered;
use crate::{Result, TokenId};
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct IdentityConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            steps: 200,
            batch_size: 16,
            lr: 3e-3,
            min_len: 4,
            max_len: 16,
            n_eval: 300,
            seed: 13,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOutcome {
    pub exact_match_rate: f64,
    pub n_eval: usize,
}

fn random_sequence(seed: u64, label: &str, min_len: usize, max_len: usize) -> Vec<TokenId> {
    let mut rng = labeled(seed, label);
    let len = rng.gen_range(min_len..=max_len);
    let content = Vocab.content_ids();
    (0..len)
        .map(|_| content.start + rng.gen_range(0..content.len()))
        .collect()
}

/// Train with only the copying objective on random interleaved inputs, then
/// measure the exact-reproduction rate of `edit` on held-out inputs.
pub fn identity_pretrain<S: Scalar>(
    model: &mut EditorModel<S>,
    frame_cfg: &FrameConfig,
    cfg: &IdentityConfig,
) -> Result<IdentityOutcome> {
    model.store.set_trainable(|_| true);
    let conds = EditConditions::default();
    let mut opt = AdamW::new(AdamWConfig::default(), model.store.len());
    for step in 1..=cfg.steps {
        let batch: Vec<usize> = (0..cfg.batch_size).collect();
        let results = run_ordered(&batch, cfg.workers, |&b| -> Result<Vec<Option<Vec<S>>>> {
            let tokens = random_sequence(
                cfg.seed,
                &format!("idpre/{step}/{b}"),
                cfg.min_len,
                cfg.max_len,
            );
            let mut frame_rng = labeled(cfg.seed, &format!("idpre-frames/{step}/{b}"));
            let frames = render_frames::<S>(&tokens, frame_cfg, &mut frame_rng);
            let layout = conds.text_layout(&tokens)?;
            let lg = cr_only_loss(model, &frames, &layout.tokens, true)?;
            let mut graph = lg.graph;
            graph.tape.backward(lg.total);
            Ok(graph.collect_grads())
        });
        let mut grads = Vec::with_capacity(cfg.batch_size);
        for r in results {
            grads.push(r?);
        }
        let avg = super::pipeline::average_grads(grads, model.store.len());
        opt.step(model.store.params_mut(), &avg, cfg.lr)?;
    }

    // held-out reproduction check
    let eval: Vec<usize> = (0..cfg.n_eval).collect();
    let hits = run_ordered(&eval, cfg.workers, |&i| -> Result<bool> {
        let tokens = random_sequence(cfg.seed, &format!("idpre-eval/{i}"), cfg.min_len, cfg.max_len);
        let mut frame_rng = labeled(cfg.seed, &format!("idpre-eval-frames/{i}"));
        let frames = render_frames::<S>(&tokens, frame_cfg, &mut frame_rng);
        let out = edit(model, &frames, &tokens, &conds)?;
        Ok(out == tokens)
    });
    let mut n_hit = 0usize;
    for h in hits {
        if h? {
            n_hit += 1;
        }
    }
    Ok(IdentityOutcome {
        exact_match_rate: n_hit as f64 / cfg.n_eval.max(1) as f64,
        n_eval: cfg.n_eval,
    })
}
