//! Component-level timing: raw matmul GFLOPS, forward only, forward+backward,
//! CTC loss alone.

use nle_core::corpus::{generate, GenConfig};
use nle_core::ctc::ctc_loss_grad;
use nle_core::editor::{editor_loss, EditConditions, EditorConfig, EditorModel};
use nle_core::numerics::tape::matmul_acc;
use std::time::Instant;

fn main() {
    // raw matmul: [180x64] x [64x64]
    let (m, k, n) = (180usize, 64usize, 64usize);
    let a = vec![1.0f32; m * k];
    let b = vec![1.0f32; k * n];
    let mut c = vec![0.0f32; m * n];
    let reps = 2000;
    let start = Instant::now();
    for _ in 0..reps {
        c.iter_mut().for_each(|v| *v = 0.0);
        matmul_acc(&a, &b, m, k, n, &mut c);
    }
    let dt = start.elapsed().as_secs_f64();
    let flops = 2.0 * (m * k * n) as f64 * reps as f64;
    println!("matmul_acc {m}x{k}x{n}: {:.1} GFLOPS", flops / dt / 1e9);

    let corpus = generate(&GenConfig {
        n_utts: 64,
        ..GenConfig::default()
    })
    .unwrap();
    let cfg = EditorConfig::default();
    let mut model = EditorModel::<f32>::init(cfg, 7).unwrap();
    model.set_trainable_adapters(true);
    let conds = EditConditions::default();

    // forward only
    let start = Instant::now();
    let mut count = 0;
    for u in &corpus.utterances {
        let frames = u.frames::<f32>(&corpus.frame_config);
        let layout = conds.text_layout(&u.hypothesis_tokens()).unwrap();
        let (_g, _l) = model.forward_editor(&frames, &layout.tokens, false, None).unwrap();
        count += 1;
    }
    println!("forward only: {:.2} ms/utt", start.elapsed().as_secs_f64() * 1e3 / count as f64);

    // full loss + backward
    let start = Instant::now();
    for u in &corpus.utterances {
        let frames = u.frames::<f32>(&corpus.frame_config);
        let layout = conds.text_layout(&u.hypothesis_tokens()).unwrap();
        let lg = editor_loss(&model, &frames, &layout.tokens, &u.reference_tokens(), 0.02, true, None).unwrap();
        let mut graph = lg.graph;
        graph.tape.backward(lg.total);
        let _ = graph.collect_grads();
    }
    println!("fwd+loss+bwd+grads: {:.2} ms/utt", start.elapsed().as_secs_f64() * 1e3 / count as f64);

    // CTC alone at typical sizes
    let start = Instant::now();
    let mut reps = 0;
    for u in &corpus.utterances {
        let layout = conds.text_layout(&u.hypothesis_tokens()).unwrap();
        let p = layout.len();
        let logits = vec![0.1f32; p * 30];
        let target = u.reference_tokens();
        let _ = ctc_loss_grad(&logits, p, 30, &target, 0).unwrap();
        reps += 1;
    }
    println!("ctc loss+grad: {:.2} ms/utt", start.elapsed().as_secs_f64() * 1e3 / reps as f64);
}
