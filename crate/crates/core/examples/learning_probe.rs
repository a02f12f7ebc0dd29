//! Medium-scale learning check: train briefly, compare edited WER to the
//! passthrough baseline. Args: steps n_utts repeat_factor mode
//! (mode: full | acoustic | nowarmup)

use nle_core::corpus::{generate, GenConfig, Split};
use nle_core::eval::{evaluate, System};
use nle_core::training::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let n_utts: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let repeat: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let mode = args.get(4).cloned().unwrap_or_else(|| "full".into());

    let mut gen_cfg = GenConfig {
        n_utts,
        ..GenConfig::default()
    };
    gen_cfg.frame.repeat_factor = repeat;
    let corpus = generate(&gen_cfg).unwrap();
    let mut cfg = TrainConfig {
        steps,
        eval_every: 100,
        checkpoint_every: steps,
        workers: 2,
        ..TrainConfig::default()
    };
    match mode.as_str() {
        "full" => {}
        "acoustic" => {
            cfg.ablation.no_ctc_hyp = true;
            cfg.cr_warmup_steps = 0;
        }
        "nowarmup" => cfg.cr_warmup_steps = 0,
        other => panic!("unknown mode {other}"),
    }
    let dir = std::env::temp_dir().join(format!("nle_probe_{mode}_r{repeat}"));
    let _ = std::fs::remove_dir_all(&dir);
    let start = Instant::now();
    let trained = train::<f32>(&cfg, &corpus, "probe", &dir).unwrap();
    println!(
        "mode={mode} repeat={repeat}: trained {} steps in {:.1} s (skipped {})",
        steps,
        start.elapsed().as_secs_f64(),
        trained.skipped_infeasible
    );
    let metrics = std::fs::read_to_string(&trained.metrics_path).unwrap();
    println!("valid curve:");
    for line in metrics.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if !cols[5].is_empty() {
            println!("  step {} valid {}", cols[0], cols[5]);
        }
    }

    let test_idx: Vec<usize> = corpus.indices_of(Split::Test).into_iter().take(300).collect();
    let pass = evaluate::<f32>(&System::Passthrough, &corpus, &test_idx, 2).unwrap();
    println!("{}", pass.summary("passthrough"));
    let edited = evaluate(
        &System::Editor {
            model: &trained.model,
            conds: cfg.edit_conditions(),
            steps: 1,
        },
        &corpus,
        &test_idx,
        2,
    )
    .unwrap();
    println!("{}", edited.summary("editor"));
    println!("wer ratio: {:.3}", edited.wer() / pass.wer());
}
