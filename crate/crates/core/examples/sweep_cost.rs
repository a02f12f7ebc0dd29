//! Cost attribution by config sweep.

use nle_core::corpus::{generate, GenConfig};
use nle_core::editor::{editor_loss, EditConditions, EditorConfig, EditorModel};
use std::time::Instant;

fn cost(cfg: EditorConfig, corpus: &nle_core::corpus::Corpus, grad: bool) -> f64 {
    let mut model = EditorModel::<f32>::init(cfg, 7).unwrap();
    model.set_trainable_adapters(true);
    let conds = EditConditions::default();
    let start = Instant::now();
    let mut n = 0;
    for u in corpus.utterances.iter().take(48) {
        let frames = u.frames::<f32>(&corpus.frame_config);
        let layout = conds.text_layout(&u.hypothesis_tokens()).unwrap();
        if grad {
            let lg = editor_loss(&model, &frames, &layout.tokens, &u.reference_tokens(), 0.02, true, None).unwrap();
            let mut g = lg.graph;
            g.tape.backward(lg.total);
            let _ = g.collect_grads();
        } else {
            let _ = model.forward_editor(&frames, &layout.tokens, false, None).unwrap();
        }
        n += 1;
    }
    start.elapsed().as_secs_f64() * 1e3 / n as f64
}

fn main() {
    let corpus = generate(&GenConfig {
        n_utts: 48,
        ..GenConfig::default()
    })
    .unwrap();
    let base = EditorConfig::default();
    for (label, cfg) in [
        ("base 2L/d64/h4/ff256/r16", base.clone()),
        ("1 layer", EditorConfig { layers: 1, ..base.clone() }),
        ("heads=1", EditorConfig { heads: 1, ..base.clone() }),
        ("heads=2", EditorConfig { heads: 2, ..base.clone() }),
        ("ff=64", EditorConfig { d_ff: 64, ..base.clone() }),
        ("rank=0", EditorConfig { lora_rank: 0, ..base.clone() }),
        ("rank=8", EditorConfig { lora_rank: 8, ..base.clone() }),
    ] {
        println!(
            "{label}: fwd {:.2} ms  fwd+bwd {:.2} ms",
            cost(cfg.clone(), &corpus, false),
            cost(cfg, &corpus, true)
        );
    }
}
