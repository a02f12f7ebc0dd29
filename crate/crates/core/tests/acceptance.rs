//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured values. Heavier criteria share one trained pipeline built on
//! first use.

use nle_core::baselines::ArModel;
use nle_core::corpus::{self, generate, Corpus, GenConfig, Split};
use nle_core::ctc;
use nle_core::editor::{EditConditions, EditorConfig, EditorModel};
use nle_core::eval::{self, System};
use nle_core::interleave;
use nle_core::numerics::gradcheck;
use nle_core::numerics::rng::labeled;
use nle_core::training::{self, IdentityConfig, TrainConfig, Variant};
use rand::Rng;
use std::sync::OnceLock;
use std::time::Instant;

/// End-to-end gain threshold for criterion 6: the spec's 0.6 target,
/// validated by the first full run (which measured a ratio well below it)
/// and frozen with margin. See notes in the criterion body.
const WER_RATIO_LIMIT: f64 = 0.6;

fn pass(criterion: &str, detail: String) {
    println!("ACCEPTANCE PASS [{criterion}]: {detail}");
}

// -------------------------------------------------------------------------
// Shared full pipeline (criteria 5, 6, 8, 9)
// -------------------------------------------------------------------------

struct Pipeline {
    corpus: Corpus,
    editor: training::Trained<f32>,
    ar: training::Trained<f32>,
    editor_cfg: TrainConfig,
    test_idx: Vec<usize>,
    dir: tempfile::TempDir,
}

static PIPELINE: OnceLock<Pipeline> = OnceLock::new();

fn full_train_config() -> TrainConfig {
    TrainConfig {
        workers: 2,
        ..TrainConfig::default()
    }
}

fn pipeline() -> &'static Pipeline {
    PIPELINE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate(&GenConfig::default()).unwrap();
        assert_eq!(corpus.len(), 20_000);
        let editor_cfg = full_train_config();
        let start = Instant::now();
        let editor =
            training::train::<f32>(&editor_cfg, &corpus, "acceptance", &dir.path().join("editor"))
                .unwrap();
        eprintln!(
            "[pipeline] editor training ({} steps): {:.1} min",
            editor_cfg.steps,
            start.elapsed().as_secs_f64() / 60.0
        );
        let mut ar_cfg = full_train_config();
        ar_cfg.variant = Variant::Ar;
        ar_cfg.steps = 1500;
        let start = Instant::now();
        let ar = training::train::<f32>(&ar_cfg, &corpus, "acceptance", &dir.path().join("ar"))
            .unwrap();
        eprintln!(
            "[pipeline] ar training ({} steps): {:.1} min",
            ar_cfg.steps,
            start.elapsed().as_secs_f64() / 60.0
        );
        let test_idx = corpus.indices_of(Split::Test);
        Pipeline {
            corpus,
            editor,
            ar,
            editor_cfg,
            test_idx,
            dir,
        }
    })
}

// -------------------------------------------------------------------------
// Criterion 1: CTC oracle equivalence
// -------------------------------------------------------------------------

#[test]
fn criterion_1_ctc_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = labeled(1001, "acceptance/ctc-oracle");
    let cases = 500;
    let mut max_diff = 0.0f64;
    for case in 0..cases {
        let p = rng.gen_range(1..=6);
        let v = rng.gen_range(2..=4);
        let tlen = rng.gen_range(0..=3.min(p));
        let target: Vec<usize> = (0..tlen).map(|_| rng.gen_range(1..v)).collect();
        let logits: Vec<f64> = (0..p * v).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
        let oracle = ctc::ctc_oracle(&logits, p, v, &target, 0).unwrap();
        match ctc::ctc_loss_value(&logits, p, v, &target, 0) {
            Ok(loss) => {
                let diff = (loss - oracle).abs();
                assert!(diff < 1e-10, "case {case}: |{loss} - {oracle}| = {diff}");
                max_diff = max_diff.max(diff);
            }
            Err(nle_core::Error::InfeasibleTarget { .. }) => {
                assert!(oracle.is_infinite(), "case {case}: feasibility disagreement");
            }
            Err(e) => panic!("case {case}: {e}"),
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs() < 60, "runtime {dt:?} exceeds 1 min");
    pass(
        "1 ctc-oracle",
        format!("{cases} instances, max |loss - oracle| = {max_diff:.2e}, {dt:?}"),
    );
}

// -------------------------------------------------------------------------
// Criterion 2: gradient checks for every op and both full losses
// -------------------------------------------------------------------------

#[test]
fn criterion_2_gradient_checks() {
    let start = Instant::now();
    let mut worst: (f64, &'static str) = (0.0, "none");
    let mut note = |name: &'static str, err: f64| {
        assert!(err < 1e-4, "{name}: rel err {err}");
        if err > worst.0 {
            worst = (err, name);
        }
    };

    // individual differentiable ops over random small tensors
    note("matmul", fd_matmul());
    note("matmul_nt", fd_matmul_nt());
    note("softmax", fd_unary(|t, x| Ok(t.softmax_rows(x))));
    note("gelu", fd_unary(|t, x| Ok(t.gelu(x))));
    note("scale", fd_unary(|t, x| Ok(t.scale(x, 1.7))));
    note("mean_pool", fd_unary(|t, x| t.mean_pool_rows(x, 2)));
    note("slice_rows", fd_unary(|t, x| t.slice_rows(x, 1, 3)));
    note("slice_cols", fd_unary(|t, x| t.slice_cols(x, 1, 3)));
    note("layer_norm", fd_layer_norm());
    note("add_row", fd_add_row());
    note("embedding", fd_embedding());
    note("cross_entropy", fd_cross_entropy());
    note("mha", fd_mha(false));
    note("mha_causal", fd_mha(true));
    note("ctc_loss", fd_ctc());
    note("dropout", fd_dropout());

    // both full losses on tiny f64 models
    note("editor_total_loss", fd_editor_loss());
    note("ar_cross_entropy", fd_ar_loss());

    let dt = start.elapsed();
    assert!(dt.as_secs() < 120, "runtime {dt:?} exceeds 2 min");
    pass(
        "2 gradient-checks",
        format!("18 checks, worst rel err {:.2e} ({}), {dt:?}", worst.0, worst.1),
    );
}

type Tape64 = nle_core::numerics::Tape<f64>;
type Tid = nle_core::numerics::TensorId;

fn rand_vec(n: usize, label: &str) -> Vec<f64> {
    let mut rng = labeled(77, label);
    (0..n)
        .map(|_| nle_core::numerics::rng::normal_f64(&mut rng))
        .collect()
}

/// FD-check d(weighted sum of op(x)) / dx for a unary op on a [4x4] input.
fn fd_unary(
    op: impl Fn(&mut Tape64, Tid) -> nle_core::Result<Tid>,
) -> f64 {
    let x0 = rand_vec(16, "fd_unary");
    let weights = |n: usize| -> Vec<f64> { (0..n).map(|i| ((i % 5) as f64) - 1.6).collect() };
    let run = |x: &[f64], rg: bool| -> (Tape64, Tid, Tid) {
        let mut t = Tape64::new();
        let a = t.leaf(&[4, 4], x.to_vec(), rg).unwrap();
        let y = op(&mut t, a).unwrap();
        let w = weights(t.data(y).len());
        let val: f64 = t.data(y).iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let loss = t.scalar_fn(y, val, w).unwrap();
        (t, a, loss)
    };
    let f = |x: &[f64]| -> f64 {
        let (t, _, loss) = run(x, false);
        t.value(loss)
    };
    let analytic = {
        let (mut t, a, loss) = run(&x0, true);
        t.backward(loss);
        t.grad(a).unwrap().to_vec()
    };
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &x0, 1e-6))
}

fn fd_matmul() -> f64 {
    // gradient of sum(a . b) w.r.t. a equals ones(m x n) . b^T
    let a0 = rand_vec(12, "fd_mm_a");
    let b0 = rand_vec(8, "fd_mm_b");
    let f = |x: &[f64]| -> f64 {
        let mut t = Tape64::new();
        let a = t.leaf(&[3, 4], x.to_vec(), false).unwrap();
        let b = t.leaf(&[4, 2], b0.clone(), false).unwrap();
        let c = t.matmul(a, b).unwrap();
        let s = t.sum_all(c);
        t.value(s)
    };
    let analytic = {
        let mut t = Tape64::new();
        let a = t.leaf(&[3, 4], a0.clone(), true).unwrap();
        let b = t.leaf(&[4, 2], b0.clone(), false).unwrap();
        let c = t.matmul(a, b).unwrap();
        let s = t.sum_all(c);
        t.backward(s);
        t.grad(a).unwrap().to_vec()
    };
    // closed form: ones . b^T, checked at the spec's 1e-6 (64-bit) bound
    let mut closed = vec![0.0; 12];
    nle_core::numerics::tape::matmul_nt_acc(&vec![1.0; 6], &b0, 3, 2, 4, &mut closed);
    let closed_err = gradcheck::max_rel_err(&analytic, &closed);
    assert!(closed_err < 1e-6, "closed-form check {closed_err}");
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &a0, 1e-6))
}

fn fd_matmul_nt() -> f64 {
    let a0 = rand_vec(12, "fd_nt_a");
    let b0 = rand_vec(8, "fd_nt_b");
    let f = |x: &[f64]| -> f64 {
        let mut t = Tape64::new();
        let a = t.leaf(&[3, 4], a0.clone(), false).unwrap();
        let b = t.leaf(&[2, 4], x.to_vec(), false).unwrap();
        let c = t.matmul_nt(a, b).unwrap();
        let s = t.sum_all(c);
        t.value(s)
    };
    let analytic = {
        let mut t = Tape64::new();
        let a = t.leaf(&[3, 4], a0.clone(), false).unwrap();
        let b = t.leaf(&[2, 4], b0.clone(), true).unwrap();
        let c = t.matmul_nt(a, b).unwrap();
        let s = t.sum_all(c);
        t.backward(s);
        t.grad(b).unwrap().to_vec()
    };
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &b0, 1e-6))
}

fn fd_layer_norm() -> f64 {
    fd_unary(|t, x| {
        let g = t.leaf(&[4], vec![1.2, 0.8, 1.0, 1.1], true)?;
        let b = t.leaf(&[4], vec![0.1, -0.2, 0.0, 0.3], true)?;
        t.layer_norm(x, g, b, 1e-5)
    })
}

fn fd_add_row() -> f64 {
    fd_unary(|t, x| {
        let r = t.leaf(&[4], vec![0.5, -0.5, 1.0, 0.0], true)?;
        t.add_row(x, r)
    })
}

fn fd_embedding() -> f64 {
    // gradient w.r.t. the table
    let t0 = rand_vec(20, "fd_emb");
    let ids = vec![3usize, 1, 4, 1, 0, 2];
    let f = |x: &[f64]| -> f64 {
        let mut t = Tape64::new();
        let table = t.leaf(&[5, 4], x.to_vec(), false).unwrap();
        let e = t.embedding(table, &ids).unwrap();
        let w: Vec<f64> = (0..24).map(|i| ((i % 7) as f64) - 3.0).collect();
        let val: f64 = t.data(e).iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let loss = t.scalar_fn(e, val, w).unwrap();
        t.value(loss)
    };
    let analytic = {
        let mut t = Tape64::new();
        let table = t.leaf(&[5, 4], t0.clone(), true).unwrap();
        let e = t.embedding(table, &ids).unwrap();
        let w: Vec<f64> = (0..24).map(|i| ((i % 7) as f64) - 3.0).collect();
        let val: f64 = t.data(e).iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let loss = t.scalar_fn(e, val, w).unwrap();
        t.backward(loss);
        t.grad(table).unwrap().to_vec()
    };
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &t0, 1e-6))
}

fn fd_cross_entropy() -> f64 {
    let x0 = rand_vec(12, "fd_ce");
    let targets = vec![2usize, 0, 1];
    let f = |x: &[f64]| -> f64 {
        let mut t = Tape64::new();
        let a = t.leaf(&[3, 4], x.to_vec(), false).unwrap();
        let l = t.cross_entropy_mean(a, &targets).unwrap();
        t.value(l)
    };
    let analytic = {
        let mut t = Tape64::new();
        let a = t.leaf(&[3, 4], x0.clone(), true).unwrap();
        let l = t.cross_entropy_mean(a, &targets).unwrap();
        t.backward(l);
        t.grad(a).unwrap().to_vec()
    };
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &x0, 1e-6))
}

fn fd_mha(causal: bool) -> f64 {
    let x0 = rand_vec(3 * 4 * 6, "fd_mha");
    let run = |x: &[f64], rg: bool| -> (Tape64, [Tid; 3], Tid) {
        let mut t = Tape64::new();
        let q = t.leaf(&[4, 6], x[..24].to_vec(), rg).unwrap();
        let k = t.leaf(&[4, 6], x[24..48].to_vec(), rg).unwrap();
        let v = t.leaf(&[4, 6], x[48..].to_vec(), rg).unwrap();
        let o = t.mha(q, k, v, 2, causal).unwrap();
        let w: Vec<f64> = (0..24).map(|i| ((i % 5) as f64) - 2.0).collect();
        let val: f64 = t.data(o).iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let loss = t.scalar_fn(o, val, w).unwrap();
        (t, [q, k, v], loss)
    };
    let f = |x: &[f64]| -> f64 {
        let (t, _, loss) = run(x, false);
        t.value(loss)
    };
    let analytic = {
        let (mut t, [q, k, v], loss) = run(&x0, true);
        t.backward(loss);
        let mut g = Vec::new();
        g.extend_from_slice(t.grad(q).unwrap());
        g.extend_from_slice(t.grad(k).unwrap());
        g.extend_from_slice(t.grad(v).unwrap());
        g
    };
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &x0, 1e-6))
}

fn fd_ctc() -> f64 {
    let x0 = rand_vec(12, "fd_ctc");
    let target = vec![1usize, 2];
    let f = |x: &[f64]| ctc::ctc_loss_value(x, 4, 3, &target, 0).unwrap();
    let (_, analytic) = ctc::ctc_loss_grad(&x0, 4, 3, &target, 0).unwrap();
    gradcheck::max_rel_err(&analytic, &gradcheck::finite_diff(f, &x0, 1e-6))
}

fn fd_dropout() -> f64 {
    // fixed mask: dropout is a deterministic function of its stored mask
    fd_unary(|t, x| {
        let mut rng = labeled(9, "fd_dropout_mask");
        t.dropout(x, 0.3, &mut rng)
    })
}

fn fd_editor_loss() -> f64 {
    let cfg = EditorConfig {
        layers: 1,
        d_model: 16,
        heads: 2,
        d_ff: 32,
        lora_rank: 2,
        max_positions: 128,
        ..EditorConfig::default()
    };
    let mut model = EditorModel::<f64>::init(cfg, 41).unwrap();
    model.set_trainable_adapters(true);
    let reference = vec![5usize, 6, 7, 29, 8];
    let hypothesis = vec![5usize, 7, 29, 8];
    let frames = {
        let mut rng = labeled(42, "fd_editor_frames");
        corpus::render_frames::<f64>(&reference, &corpus::FrameConfig::default(), &mut rng)
    };
    let layout = EditConditions::default().text_layout(&hypothesis).unwrap();
    let idx = model.store.id_of("layer0.attn.q.lora_a").unwrap();
    let base = model.store.get(idx).value.clone();

    let lg = nle_core::editor::editor_loss(
        &model, &frames, &layout.tokens, &reference, 0.02, true, None,
    )
    .unwrap();
    let mut graph = lg.graph;
    graph.tape.backward(lg.total);
    let analytic = graph
        .tape
        .grad(graph.leaf_of(idx).unwrap())
        .unwrap()
        .to_vec();

    let mut numeric = vec![0.0; base.len()];
    let h = 1e-5;
    for i in 0..base.len() {
        for (sign, slot) in [(1.0, 0), (-1.0, 1)] {
            let mut xp = base.clone();
            xp[i] += sign * h;
            model.store.get_mut(idx).value = xp;
            let lg = nle_core::editor::editor_loss(
                &model, &frames, &layout.tokens, &reference, 0.02, false, None,
            )
            .unwrap();
            if slot == 0 {
                numeric[i] = lg.parts.total;
            } else {
                numeric[i] = (numeric[i] - lg.parts.total) / (2.0 * h);
            }
        }
    }
    model.store.get_mut(idx).value = base;
    gradcheck::max_rel_err(&analytic, &numeric)
}

fn fd_ar_loss() -> f64 {
    let cfg = EditorConfig {
        layers: 1,
        d_model: 16,
        heads: 2,
        d_ff: 32,
        lora_rank: 2,
        max_positions: 128,
        ..EditorConfig::default()
    };
    let mut backbone = EditorModel::<f64>::init(cfg, 43).unwrap();
    backbone.set_trainable_adapters(true);
    let reference = vec![5usize, 6, 29, 7];
    let frames = {
        let mut rng = labeled(44, "fd_ar_frames");
        corpus::render_frames::<f64>(&reference, &corpus::FrameConfig::default(), &mut rng)
    };
    let ar = ArModel::new(backbone);
    let idx = ar.backbone.store.id_of("proj.w").unwrap();
    let base = ar.backbone.store.get(idx).value.clone();

    let (mut graph, loss) = ar.loss_graph(&frames, &reference, true, None).unwrap();
    graph.tape.backward(loss);
    let analytic = graph
        .tape
        .grad(graph.leaf_of(idx).unwrap())
        .unwrap()
        .to_vec();

    let mut ar = ar;
    let h = 1e-5;
    let mut numeric = vec![0.0; base.len()];
    for i in (0..base.len()).step_by(11) {
        let mut xp = base.clone();
        xp[i] += h;
        ar.backbone.store.get_mut(idx).value = xp.clone();
        let (g, l) = ar.loss_graph(&frames, &reference, false, None).unwrap();
        let fp = g.tape.value(l);
        xp[i] -= 2.0 * h;
        ar.backbone.store.get_mut(idx).value = xp;
        let (g, l) = ar.loss_graph(&frames, &reference, false, None).unwrap();
        let fm = g.tape.value(l);
        numeric[i] = (fp - fm) / (2.0 * h);
    }
    ar.backbone.store.get_mut(idx).value = base;
    let checked: Vec<usize> = (0..numeric.len()).step_by(11).collect();
    let a: Vec<f64> = checked.iter().map(|&i| analytic[i]).collect();
    let n: Vec<f64> = checked.iter().map(|&i| numeric[i]).collect();
    gradcheck::max_rel_err(&a, &n)
}

// -------------------------------------------------------------------------
// Criterion 3: interleave laws
// -------------------------------------------------------------------------

#[test]
fn criterion_3_interleave_laws() {
    for n in [0usize, 1, 5, 8, 9, 20] {
        let tokens: Vec<usize> = (1..=n).collect();
        let seq = interleave::build_interleaved(&tokens, 1, 0).unwrap();
        assert_eq!(seq.len(), 2 * n.max(8) + 1, "length law at N={n}");
    }
    let tokens: Vec<usize> = (1..=10).collect();
    let seq = interleave::build_interleaved(&tokens, 1, 0).unwrap();
    for m in 1..=4usize {
        let insert: Vec<usize> = (100..100 + m).collect();
        let (_, changed) = interleave::insertion_oracle(&seq, 5, &insert).unwrap();
        assert_eq!(changed, 2 * m - 1, "worked pattern at m={m}");
    }
    // capacity N+1 enforced
    let cap = seq.insert_capacity();
    assert_eq!(cap, 11);
    let at: Vec<usize> = (200..200 + cap).collect();
    assert!(interleave::insertion_oracle(&seq, 5, &at).is_ok());
    let over: Vec<usize> = (200..200 + cap + 1).collect();
    assert!(matches!(
        interleave::insertion_oracle(&seq, 5, &over),
        Err(nle_core::Error::InfeasibleInsert { .. })
    ));
    pass(
        "3 interleave-laws",
        "2N+1 length, changed = 2m-1 for m in 1..=4, capacity N+1".into(),
    );
}

// -------------------------------------------------------------------------
// Criterion 4: identity-bias endpoint
// -------------------------------------------------------------------------

#[test]
fn criterion_4_identity_bias_endpoint() {
    let cfg = EditorConfig {
        layers: 2,
        d_model: 32,
        heads: 2,
        d_ff: 64,
        lora_rank: 4,
        max_positions: 256,
        ..EditorConfig::default()
    };
    let mut model = EditorModel::<f32>::init(cfg, 4040).unwrap();
    let id_cfg = IdentityConfig {
        steps: 200,
        batch_size: 16,
        lr: 3e-3,
        n_eval: 300,
        workers: 2,
        ..IdentityConfig::default()
    };
    let outcome =
        training::identity_pretrain(&mut model, &corpus::FrameConfig::default(), &id_cfg).unwrap();
    assert!(
        outcome.exact_match_rate >= 0.99,
        "reproduction rate {} < 0.99",
        outcome.exact_match_rate
    );
    pass(
        "4 identity-bias",
        format!(
            "{} CR-only steps -> {:.1}% of {} held-out inputs reproduced exactly",
            id_cfg.steps,
            outcome.exact_match_rate * 100.0,
            outcome.n_eval
        ),
    );
}

// -------------------------------------------------------------------------
// Criterion 5: LoRA toggle restores the base bit-exactly
// -------------------------------------------------------------------------

#[test]
fn criterion_5_lora_toggle_restores_base() {
    let p = pipeline();
    // load the pre-adaptation snapshot
    let mut base = EditorModel::<f32>::init(p.editor_cfg.effective_model(), p.editor_cfg.seed)
        .unwrap();
    base.load_into(&p.editor.base_path).unwrap();

    // parameter-level: every base tensor untouched by adaptation
    for (name_value, snap) in p.editor.model.snapshot().iter().zip(base.snapshot()) {
        let (name, value) = name_value;
        assert_eq!(*name, snap.0);
        if !nle_core::numerics::is_lora_name(name) && !name.starts_with("proj.") {
            for (a, b) in value.iter().zip(&snap.1) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name} drifted");
            }
        }
    }

    // behavior-level: disabled-LoRA causal forward is bit-identical
    let mut trained = EditorModel::<f32>::init(p.editor_cfg.effective_model(), p.editor_cfg.seed)
        .unwrap();
    trained.load_into(&p.editor.best_path).unwrap();
    trained.set_lora_enabled(false);
    let mut rng = labeled(5050, "acceptance/toggle");
    for case in 0..10 {
        let len = rng.gen_range(3..=20);
        let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(0..30)).collect();
        let (g1, l1) = trained.base_mode_forward(&tokens, false).unwrap();
        let (g2, l2) = base.base_mode_forward(&tokens, false).unwrap();
        for (a, b) in g1.tape.data(l1).iter().zip(g2.tape.data(l2)) {
            assert_eq!(a.to_bits(), b.to_bits(), "case {case}: logits differ");
        }
    }
    pass(
        "5 lora-toggle",
        "disabled-LoRA causal forward bit-identical to the pre-adaptation snapshot (10 inputs)"
            .into(),
    );
}

// -------------------------------------------------------------------------
// Criterion 6: end-to-end editing gain
// -------------------------------------------------------------------------

#[test]
fn criterion_6_end_to_end_editing_gain() {
    let p = pipeline();
    let passthrough =
        eval::evaluate::<f32>(&System::Passthrough, &p.corpus, &p.test_idx, 2).unwrap();
    let edited = eval::evaluate(
        &System::Editor {
            model: &p.editor.model,
            conds: p.editor_cfg.edit_conditions(),
            steps: 1,
        },
        &p.corpus,
        &p.test_idx,
        2,
    )
    .unwrap();
    let ratio = edited.wer() / passthrough.wer();
    println!("{}", passthrough.summary("passthrough"));
    println!("{}", edited.summary("editor"));
    assert!(
        ratio <= WER_RATIO_LIMIT,
        "wer ratio {ratio:.4} > {WER_RATIO_LIMIT}"
    );
    pass(
        "6 editing-gain",
        format!(
            "editor wer {:.4} vs passthrough {:.4}: ratio {ratio:.3} <= {WER_RATIO_LIMIT}",
            edited.wer(),
            passthrough.wer()
        ),
    );
}

// -------------------------------------------------------------------------
// Criterion 7: ablation trends (soft: reported, not gated)
// -------------------------------------------------------------------------

#[test]
fn criterion_7_ablation_trends_reported() {
    let corpus = generate(&GenConfig {
        n_utts: 2500,
        seed: 7,
        ..GenConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        steps: 700,
        base_steps: 400,
        cr_warmup_steps: 150,
        eval_every: 700,
        checkpoint_every: 700,
        valid_cap: 100,
        workers: 2,
        model: EditorConfig {
            layers: 2,
            d_model: 48,
            heads: 2,
            d_ff: 128,
            lora_rank: 8,
            max_positions: 512,
            ..EditorConfig::default()
        },
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let rows = training::ablation_suite::<f32>(&cfg, &corpus, "acceptance", dir.path()).unwrap();
    assert_eq!(rows.len(), 7);
    let full = rows.iter().find(|r| r.name == "full").unwrap().final_valid;
    assert!(rows.iter().all(|r| r.final_valid.is_finite()));
    let mut violations = 0;
    for r in &rows {
        let margin = r.final_valid - full;
        let flag = if r.name != "full" && margin < 0.0 {
            violations += 1;
            "  [trend violation]"
        } else {
            ""
        };
        println!(
            "ablation {:<11} final_valid {:>10.4}  margin vs full {:+.4}{}",
            r.name, r.final_valid, margin, flag
        );
    }
    pass(
        "7 ablation-trends",
        format!(
            "7 variants trained at shared seed; full model lowest in {}/6 comparisons (soft criterion, violations logged above)",
            6 - violations
        ),
    );
}

// -------------------------------------------------------------------------
// Criterion 8: multi-step behavior
// -------------------------------------------------------------------------

#[test]
fn criterion_8_multi_step_behavior() {
    let p = pipeline();
    let subset: Vec<usize> = p.test_idx.iter().copied().take(250).collect();
    let rows = eval::multistep_sweep(
        &p.editor.model,
        &p.corpus,
        &subset,
        3,
        &p.editor_cfg.edit_conditions(),
        1,
    )
    .unwrap();
    let calls: Vec<f64> = rows.iter().map(|r| r.forward_calls_per_utt).collect();
    assert_eq!(calls, vec![0.0, 1.0, 2.0, 3.0], "forward-call counts");
    assert!(
        rows[1].wer < rows[0].wer,
        "step-1 wer {} not below step-0 {}",
        rows[1].wer,
        rows[0].wer
    );
    for r in &rows {
        println!(
            "multistep steps={} wer={:.4} forward_calls={}",
            r.steps, r.wer, r.forward_calls_per_utt
        );
    }
    pass(
        "8 multi-step",
        format!(
            "calls [0,1,2,3] exact; wer {:.4} -> {:.4} -> {:.4} -> {:.4} (steps 2-3 reported)",
            rows[0].wer, rows[1].wer, rows[2].wer, rows[3].wer
        ),
    );
}

// -------------------------------------------------------------------------
// Criterion 9: parallelism contract
// -------------------------------------------------------------------------

#[test]
fn criterion_9_parallelism_contract() {
    let p = pipeline();
    let subset: Vec<usize> = p.test_idx.iter().copied().take(24).collect();
    let ar = ArModel::new({
        let mut m =
            EditorModel::<f32>::init(p.editor_cfg.effective_model(), p.editor_cfg.seed).unwrap();
        m.load_into(&p.ar.best_path).unwrap();
        m.set_all_frozen();
        m
    });
    // parallelism_bench asserts editor == 1 call/utt and AR == len+1 inside
    let rows = eval::parallelism_bench(
        &p.editor.model,
        &ar,
        &p.corpus,
        &subset,
        &p.editor_cfg.edit_conditions(),
        400,
    )
    .unwrap();
    for r in &rows {
        println!(
            "bench {}: calls/utt {:.2}, wall {:.2} ms/utt, mean output len {:.1}",
            r.system, r.forward_calls_per_utt, r.wall_ms_per_utt, r.mean_output_len
        );
    }
    assert_eq!(rows[0].forward_calls_per_utt, 1.0);
    assert!(rows[1].forward_calls_per_utt > 1.0);
    pass(
        "9 parallelism",
        format!(
            "editor 1 call/utt vs ar {:.1} calls/utt; wall times reported above (not asserted)",
            rows[1].forward_calls_per_utt
        ),
    );
}

// -------------------------------------------------------------------------
// Criterion 10: eval identity and decomposition oracle
// -------------------------------------------------------------------------

#[test]
fn criterion_10_eval_identity_and_decomposition() {
    // decomposition matches brute force on all pairs of combined length <= 10
    let symbols = [0u8, 1];
    let mut seqs: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..5 {
        let mut next = Vec::new();
        for s in &seqs {
            for &c in &symbols {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        seqs.extend(next);
    }
    let mut pairs = 0;
    for r in &seqs {
        for h in &seqs {
            if r.len() + h.len() > 10 {
                continue;
            }
            let dp = eval::edit_distance_decompose(r, h);
            let (min, set) = eval::brute_force_min_scripts(r, h);
            assert_eq!(dp.total(), min, "{r:?} vs {h:?}");
            assert!(set.contains(&dp), "{r:?} vs {h:?}: {dp:?} not minimal");
            pairs += 1;
        }
    }

    // wer == ins + del + sub on real reports
    let corpus = generate(&GenConfig {
        n_utts: 400,
        seed: 31,
        ..GenConfig::default()
    })
    .unwrap();
    let indices: Vec<usize> = (0..corpus.len()).collect();
    let rep = eval::evaluate::<f32>(&System::Passthrough, &corpus, &indices, 2).unwrap();
    assert_eq!(rep.wer(), rep.ins_rate() + rep.del_rate() + rep.sub_rate());
    let total: usize = rep
        .per_utt
        .iter()
        .map(|u| u.word_counts.total())
        .sum();
    assert_eq!(total, rep.word_counts.total());
    pass(
        "10 eval-identity",
        format!("wer == ins+del+sub exactly; {pairs} brute-force pairs matched"),
    );
}

// -------------------------------------------------------------------------
// Criterion 11: determinism
// -------------------------------------------------------------------------

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();

    // gen: byte-identical corpus files
    let g = GenConfig {
        n_utts: 300,
        seed: 7,
        ..GenConfig::default()
    };
    let c1 = dir.path().join("c1.txt");
    let c2 = dir.path().join("c2.txt");
    corpus::save(&generate(&g).unwrap(), &c1).unwrap();
    corpus::save(&generate(&g).unwrap(), &c2).unwrap();
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());

    // train twice: byte-identical metrics and checkpoints
    let corpus = corpus::load(&c1).unwrap();
    let cfg = TrainConfig {
        steps: 10,
        batch_size: 4,
        base_steps: 4,
        cr_warmup_steps: 3,
        eval_every: 5,
        checkpoint_every: 5,
        valid_cap: 6,
        model: EditorConfig {
            layers: 1,
            d_model: 16,
            heads: 2,
            d_ff: 32,
            lora_rank: 2,
            max_positions: 256,
            ..EditorConfig::default()
        },
        ..TrainConfig::default()
    };
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    training::train::<f32>(&cfg, &corpus, "h", &r1).unwrap();
    training::train::<f32>(&cfg, &corpus, "h", &r2).unwrap();
    for file in ["metrics.csv", "last.nlec", "best.nlec", "base.nlec"] {
        assert_eq!(
            std::fs::read(r1.join(file)).unwrap(),
            std::fs::read(r2.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }

    // checkpoint-resume equivalence
    let full = dir.path().join("full");
    training::train::<f32>(&cfg, &corpus, "h", &full).unwrap();
    let interrupted = dir.path().join("interrupted");
    let t =
        training::pipeline::train_until::<f32>(&cfg, &corpus, "h", &interrupted, Some(5)).unwrap();
    let resumed = dir.path().join("resumed");
    training::resume::<f32>(&cfg, &corpus, &t.last_path, &resumed).unwrap();
    let full_rows: Vec<String> = std::fs::read_to_string(full.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let resumed_rows: Vec<String> = std::fs::read_to_string(resumed.join("metrics.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(&resumed_rows[1..], &full_rows[6..], "resume equivalence");

    // eval reruns
    let idx: Vec<usize> = (0..corpus.len()).collect();
    let e1 = eval::evaluate::<f32>(&System::Passthrough, &corpus, &idx, 1).unwrap();
    let e2 = eval::evaluate::<f32>(&System::Passthrough, &corpus, &idx, 2).unwrap();
    assert_eq!(e1.to_csv(), e2.to_csv());

    pass(
        "11 determinism",
        "gen/train/eval byte-identical across reruns; resume matches uninterrupted run".into(),
    );
}
