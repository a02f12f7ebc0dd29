//! End-to-end CLI checks: golden usage text, deterministic generation,
//! selftest exit code, and a miniature train->eval->show-edits pipeline.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nle-desk"))
}

#[test]
fn usage_matches_golden_file() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let golden = include_str!("golden_usage.txt");
    assert_eq!(String::from_utf8_lossy(&out.stdout), golden);
}

#[test]
fn unknown_flag_exits_2_with_usage() {
    let out = bin().args(["gen", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn gen_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c1 = dir.path().join("c1.txt");
    let c2 = dir.path().join("c2.txt");
    for out in [&c1, &c2] {
        let status = bin()
            .args(["gen", "--n", "100", "--seed", "7", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());
}

#[test]
fn selftest_is_green() {
    let out = bin().arg("selftest").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("all checks passed"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn tiny_pipeline_train_eval_show_edits() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    assert!(bin()
        .args(["gen", "--n", "80", "--seed", "3", "--min-words", "3", "--max-words", "5", "--out"])
        .arg(&corpus)
        .status()
        .unwrap()
        .success());

    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(
        &cfg,
        "train.steps = 8\ntrain.batch_size = 4\ntrain.base_steps = 4\n\
         train.cr_warmup_steps = 4\ntrain.eval_every = 8\ntrain.checkpoint_every = 8\n\
         train.valid_cap = 4\nmodel.layers = 1\nmodel.d_model = 16\nmodel.heads = 2\n\
         model.d_ff = 32\nmodel.lora_rank = 2\nmodel.max_positions = 256\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = bin()
        .args(["train", "--corpus"])
        .arg(&corpus)
        .args(["--out"])
        .arg(&run)
        .args(["--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(run.join("best.nlec").exists());
    assert!(run.join("metrics.csv").exists());
    assert!(run.join("run_manifest.json").exists());

    let out = bin()
        .args(["eval", "--corpus"])
        .arg(&corpus)
        .args(["--run"])
        .arg(&run)
        .args(["--system", "editor", "--split", "test"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("wer="));

    let out = bin()
        .args(["eval", "--corpus"])
        .arg(&corpus)
        .args(["--system", "passthrough"])
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .args(["show-edits", "--corpus"])
        .arg(&corpus)
        .args(["--run"])
        .arg(&run)
        .args(["--n", "2"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("REF: ") && text.contains("HYP: ") && text.contains("EDT: "));
}

#[test]
fn eval_reports_are_deterministic_files(){
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    assert!(bin()
        .args(["gen", "--n", "60", "--seed", "9", "--out"])
        .arg(&corpus)
        .status()
        .unwrap()
        .success());
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    for r in [&r1, &r2] {
        assert!(bin()
            .args(["eval", "--corpus"])
            .arg(&corpus)
            .args(["--system", "passthrough", "--out"])
            .arg(r)
            .status()
            .unwrap()
            .success());
    }
    assert_eq!(
        std::fs::read(r1.join("report.csv")).unwrap(),
        std::fs::read(r2.join("report.csv")).unwrap()
    );
    assert!(Path::new(&r1.join("summary.txt")).exists());
}
