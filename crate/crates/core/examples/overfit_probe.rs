//! Single-batch overfit sanity check with configurable trainable set / lr.

use nle_core::corpus::vocab::{BOS, EOS};
use nle_core::corpus::{generate, GenConfig};
use nle_core::editor::{editor_loss, EditConditions, EditorModel};
use nle_core::numerics::{AdamW, AdamWConfig};
use nle_core::training::pipeline::average_grads;
use rand::Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let mode = args.get(2).map(String::as_str).unwrap_or("all");
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(300);
    let base_steps: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    let corpus = generate(&GenConfig {
        n_utts: 8,
        min_words: 4,
        max_words: 8,
        ..GenConfig::default()
    })
    .unwrap();
    let big = generate(&GenConfig {
        n_utts: 2000,
        ..GenConfig::default()
    })
    .unwrap();
    let mut model = EditorModel::<f32>::init(Default::default(), 7).unwrap();

    if base_steps > 0 {
        model.set_trainable_base();
        let mut opt = AdamW::new(AdamWConfig::default(), model.store.len());
        let mut rng = nle_core::numerics::rng::labeled(1, "probe-base");
        for step in 1..=base_steps {
            let mut grads = Vec::new();
            let mut total = 0.0;
            for _ in 0..32 {
                let u = &big.utterances[rng.gen_range(0..big.len())];
                let r = u.reference_tokens();
                let mut input = vec![BOS];
                input.extend_from_slice(&r);
                let mut targets = r.clone();
                targets.push(EOS);
                let (mut g, logits) = model.base_mode_forward(&input, true).unwrap();
                let loss = g.tape.cross_entropy_mean(logits, &targets).unwrap();
                g.tape.backward(loss);
                total += g.tape.value(loss) as f64;
                grads.push(g.collect_grads());
            }
            let avg = average_grads(grads, model.store.len());
            opt.step(model.store.params_mut(), &avg, 2e-3).unwrap();
            if step % 200 == 0 || step == 1 {
                println!("base step {step}: ntp {:.3}", total / 32.0);
            }
        }
    }

    match mode {
        "all" => model.store.set_trainable(|_| true),
        "adapters" => model.set_trainable_adapters(true),
        other => panic!("mode {other}?"),
    }
    let conds = EditConditions::default();
    let mut opt = AdamW::new(AdamWConfig::default(), model.store.len());
    let ids: Vec<usize> = (0..corpus.len()).collect();
    for step in 1..=steps {
        let mut grads = Vec::new();
        let mut total = 0.0;
        for &i in &ids {
            let u = &corpus.utterances[i];
            let frames = u.frames::<f32>(&corpus.frame_config);
            let layout = conds.text_layout(&u.hypothesis_tokens()).unwrap();
            let lg = editor_loss(&model, &frames, &layout.tokens, &u.reference_tokens(), 0.02, true, None).unwrap();
            let mut g = lg.graph;
            g.tape.backward(lg.total);
            grads.push(g.collect_grads());
            total += lg.parts.total;
        }
        let avg = average_grads(grads, model.store.len());
        opt.step(model.store.params_mut(), &avg, lr).unwrap();
        if step % 50 == 0 || step <= 3 {
            println!("step {step}: mean loss {:.3}", total / ids.len() as f64);
        }
    }
}
