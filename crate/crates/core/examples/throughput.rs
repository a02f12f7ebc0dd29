//! Rough training-throughput probe used to size desk-scale defaults.
//! Run: cargo run --release -p nle-core --example throughput

use nle_core::corpus::{generate, GenConfig, Split};
use nle_core::editor::{editor_loss, EditConditions, EditorConfig, EditorModel};
use nle_core::training::pipeline;
use std::time::Instant;

fn main() {
    let gen_cfg = GenConfig {
        n_utts: 400,
        ..GenConfig::default()
    };
    let corpus = generate(&gen_cfg).unwrap();
    let cfg = EditorConfig::default();
    let mut model = EditorModel::<f32>::init(cfg, 7).unwrap();
    model.set_trainable_adapters(true);
    let train_idx = corpus.indices_of(Split::Train);
    let conds = EditConditions::default();

    let mut mean_chars = 0usize;
    for u in &corpus.utterances {
        mean_chars += u.reference.chars().count();
    }
    println!(
        "utterances: {} mean ref chars: {:.1}",
        corpus.len(),
        mean_chars as f64 / corpus.len() as f64
    );

    for workers in [1usize, 2] {
        let steps = 6;
        let batch = 32;
        let start = Instant::now();
        for step in 0..steps {
            let ids: Vec<usize> = (0..batch)
                .map(|b| train_idx[(step * batch + b) % train_idx.len()])
                .collect();
            let grads: Vec<_> = nle_core::parallel::run_ordered(&ids, workers, |&i| {
                let utt = &corpus.utterances[i];
                let frames = utt.frames::<f32>(&corpus.frame_config);
                let layout = conds.text_layout(&utt.hypothesis_tokens()).unwrap();
                let lg = editor_loss(
                    &model,
                    &frames,
                    &layout.tokens,
                    &utt.reference_tokens(),
                    0.02,
                    true,
                    None,
                )
                .unwrap();
                let mut graph = lg.graph;
                graph.tape.backward(lg.total);
                graph.collect_grads()
            });
            let _avg = pipeline::average_grads(grads, model.store.len());
        }
        let dt = start.elapsed().as_secs_f64();
        println!(
            "workers={workers}: {:.3} s/step ({} steps of batch {batch}) -> {:.1} min for 5000 steps",
            dt / steps as f64,
            steps,
            dt / steps as f64 * 5000.0 / 60.0
        );
    }
}
