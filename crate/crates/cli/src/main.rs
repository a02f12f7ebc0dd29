//! nle-desk: corpus generation, editor/baseline training, evaluation,
//! sweeps, diff visualization, and benchmarks behind one binary.
//!
//! All randomness funnels through --seed; NLE_DESK_PRECISION={f32,f64}
//! selects the scalar type for a run (checkpoints are dtype-tagged).

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use nle_core::corpus::{self, GenConfig, NoiseProfile, Split};
use nle_core::editor::EditorModel;
use nle_core::eval::{self, System};
use nle_core::numerics::checkpoint::content_hash;
use nle_core::numerics::{Precision, Scalar};
use nle_core::training::{self, TrainConfig, Variant};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "nle-desk",
    version,
    about = "Non-autoregressive transcript editing over interleaved insertion slots, at desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic noise-channel corpus file
    Gen(GenArgs),
    /// Train the editor (or the AR baseline) on a corpus
    Train(TrainArgs),
    /// Evaluate a trained run or the passthrough baseline on a split
    Eval(EvalArgs),
    /// Train and compare the full model against the six ablations
    Ablate(AblateArgs),
    /// Train and evaluate one model per blank density
    DensitySweep(DensitySweepArgs),
    /// Evaluate iterated editing at step counts 0..=max-steps
    MultistepSweep(MultistepSweepArgs),
    /// Compare editor and AR forward-call counts and wall time
    Bench(BenchArgs),
    /// Print aligned reference/hypothesis/edited triplets
    ShowEdits(ShowEditsArgs),
    /// Run the built-in oracle and property suites
    Selftest,
}

#[derive(Args)]
struct GenArgs {
    /// Number of utterances
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    /// Substitution rate of the noise channel
    #[arg(long, default_value_t = 0.10)]
    sub: f64,
    /// Deletion rate of the noise channel
    #[arg(long, default_value_t = 0.05)]
    del: f64,
    /// Insertion rate of the noise channel
    #[arg(long, default_value_t = 0.05)]
    ins: f64,
    /// Corpus seed; all utterance streams derive from it
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Minimum words per utterance
    #[arg(long, default_value_t = 4)]
    min_words: usize,
    /// Maximum words per utterance
    #[arg(long, default_value_t = 14)]
    max_words: usize,
    /// Frames rendered per reference character
    #[arg(long, default_value_t = 4)]
    repeat_factor: usize,
    /// Gaussian noise on the pseudo-acoustic frames
    #[arg(long, default_value_t = 0.25)]
    frame_sigma: f64,
    /// Output corpus file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus file from `gen`
    #[arg(long)]
    corpus: PathBuf,
    /// Run directory for checkpoints, metrics, and the manifest
    #[arg(long)]
    out: PathBuf,
    /// key = value config file (defaults + CLI flags otherwise)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Optimizer steps of the adapter phase
    #[arg(long)]
    steps: Option<u64>,
    /// Insertion-slot density K
    #[arg(long)]
    density: Option<usize>,
    /// Worker threads for batch gradients and validation
    #[arg(long)]
    workers: Option<usize>,
    /// Model variant: editor | ar
    #[arg(long)]
    variant: Option<String>,
    /// Drop the copying-regularization term
    #[arg(long)]
    no_cr: bool,
    /// Keep causal attention instead of bidirectional
    #[arg(long)]
    no_bidirect: bool,
    /// Put all insertion slots after the content
    #[arg(long)]
    end_padding: bool,
    /// Zero the acoustic embeddings
    #[arg(long)]
    no_audio_emb: bool,
    /// Replace the hypothesis with blanks of equal length
    #[arg(long)]
    no_ctc_hyp: bool,
    /// Freeze the backbone entirely (projector still trains)
    #[arg(long)]
    no_lora: bool,
    /// Resume from a checkpoint written by an earlier run
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this step while keeping the full schedule (interruption)
    #[arg(long)]
    stop_after: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Run directory of a trained model (omit for --system passthrough)
    #[arg(long)]
    run: Option<PathBuf>,
    /// System to decode with: editor | ar | passthrough
    #[arg(long, default_value = "editor")]
    system: String,
    /// Corpus split: train | valid | test
    #[arg(long, default_value = "test")]
    split: String,
    /// Editing steps (editor system only)
    #[arg(long, default_value_t = 1)]
    steps: usize,
    /// Max decode length (ar system only)
    #[arg(long, default_value_t = 256)]
    max_len: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for the per-utterance CSV report
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to load: best | last | base
    #[arg(long, default_value = "best")]
    checkpoint: String,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DensitySweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Densities to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 3])]
    densities: Vec<usize>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Test utterances to evaluate per density
    #[arg(long, default_value_t = 300)]
    eval_utts: usize,
}

#[derive(Args)]
struct MultistepSweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 3)]
    max_steps: usize,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Run directory of the trained editor
    #[arg(long)]
    editor_run: PathBuf,
    /// Run directory of the trained AR baseline
    #[arg(long)]
    ar_run: PathBuf,
    /// Utterances to benchmark
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 256)]
    max_len: usize,
}

#[derive(Args)]
struct ShowEditsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    run: PathBuf,
    /// Utterances to display
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value = "test")]
    split: String,
}

fn main() {
    let cli = Cli::parse();
    let precision = match Precision::from_env() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    let outcome = match precision {
        Precision::F32 => run::<f32>(cli),
        Precision::F64 => run::<f64>(cli),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run<S: Scalar>(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train::<S>(args),
        Command::Eval(args) => cmd_eval::<S>(args),
        Command::Ablate(args) => cmd_ablate::<S>(args),
        Command::DensitySweep(args) => cmd_density_sweep::<S>(args),
        Command::MultistepSweep(args) => cmd_multistep_sweep::<S>(args),
        Command::Bench(args) => cmd_bench::<S>(args),
        Command::ShowEdits(args) => cmd_show_edits::<S>(args),
        Command::Selftest => cmd_selftest(),
    }
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<i32> {
    let cfg = GenConfig {
        n_utts: args.n,
        min_words: args.min_words,
        max_words: args.max_words,
        noise: NoiseProfile::new(args.sub, args.del, args.ins)?,
        seed: args.seed,
        frame: nle_core::corpus::FrameConfig {
            repeat_factor: args.repeat_factor,
            noise_sigma: args.frame_sigma,
            ..Default::default()
        },
    };
    let corpus = corpus::generate(&cfg)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    corpus::save(&corpus, &args.out)?;
    let splits = corpus.splits();
    let count = |s: Split| splits.iter().filter(|&&x| x == s).count();
    println!(
        "gen: wrote {} utterances ({} train / {} valid / {} test) to {}",
        corpus.len(),
        count(Split::Train),
        count(Split::Valid),
        count(Split::Test),
        args.out.display()
    );
    Ok(0)
}

fn load_train_config(path: Option<&Path>) -> anyhow::Result<TrainConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(TrainConfig::from_kv_text(&text)?)
        }
        None => Ok(TrainConfig::default()),
    }
}

fn cmd_train<S: Scalar>(args: TrainArgs) -> anyhow::Result<i32> {
    let mut cfg = load_train_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(density) = args.density {
        cfg.density = density;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(variant) = &args.variant {
        cfg.variant = match variant.as_str() {
            "editor" => Variant::Editor,
            "ar" => Variant::Ar,
            other => bail!("unknown variant {other:?} (editor | ar)"),
        };
    }
    cfg.ablation.no_cr |= args.no_cr;
    cfg.ablation.no_bidirect |= args.no_bidirect;
    cfg.ablation.end_padding |= args.end_padding;
    cfg.ablation.no_audio_emb |= args.no_audio_emb;
    cfg.ablation.no_ctc_hyp |= args.no_ctc_hyp;
    cfg.ablation.no_lora |= args.no_lora;
    cfg.validate()?;

    let corpus_bytes = std::fs::read(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let corpus_hash = content_hash(&corpus_bytes);
    let corpus = corpus::load(&args.corpus)?;

    let trained = match &args.resume {
        Some(ckpt) => training::resume::<S>(&cfg, &corpus, ckpt, &args.out)?,
        None => training::pipeline::train_until::<S>(
            &cfg,
            &corpus,
            &corpus_hash,
            &args.out,
            args.stop_after,
        )?,
    };
    println!(
        "train[{}/{}]: final valid {:.4}, best valid {:.4}, skipped {} infeasible, artifacts in {}",
        cfg.variant.name(),
        cfg.ablation.label(),
        trained.final_valid,
        trained.best_valid,
        trained.skipped_infeasible,
        args.out.display()
    );
    Ok(0)
}

/// Read a run directory: its training config and the requested checkpoint.
fn load_run<S: Scalar>(run: &Path, which: &str) -> anyhow::Result<(TrainConfig, EditorModel<S>)> {
    let manifest_path = run.join("run_manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?,
    )?;
    let kv = manifest["config_kv"]
        .as_str()
        .ok_or_else(|| anyhow!("run manifest lacks config_kv"))?;
    let cfg = TrainConfig::from_kv_text(kv)?;
    let mut model = EditorModel::<S>::init(cfg.effective_model(), cfg.seed)?;
    let ckpt = run.join(format!("{which}.nlec"));
    model.load_into(&ckpt)?;
    if cfg.ablation.no_lora {
        model.set_lora_enabled(false);
    }
    model.set_all_frozen();
    Ok((cfg, model))
}

fn split_indices(corpus: &corpus::Corpus, split: &str) -> anyhow::Result<Vec<usize>> {
    let split = match split {
        "train" => Split::Train,
        "valid" => Split::Valid,
        "test" => Split::Test,
        other => bail!("unknown split {other:?}"),
    };
    Ok(corpus.indices_of(split))
}

fn cmd_eval<S: Scalar>(args: EvalArgs) -> anyhow::Result<i32> {
    let corpus = corpus::load(&args.corpus)?;
    let indices = split_indices(&corpus, &args.split)?;
    let report = match args.system.as_str() {
        "passthrough" => eval::evaluate::<S>(&System::Passthrough, &corpus, &indices, args.workers)?,
        "editor" => {
            let run = args.run.as_ref().ok_or_else(|| anyhow!("--run required"))?;
            let (cfg, model) = load_run::<S>(run, &args.checkpoint)?;
            eval::evaluate(
                &System::Editor {
                    model: &model,
                    conds: cfg.edit_conditions(),
                    steps: args.steps,
                },
                &corpus,
                &indices,
                args.workers,
            )?
        }
        "ar" => {
            let run = args.run.as_ref().ok_or_else(|| anyhow!("--run required"))?;
            let (_, model) = load_run::<S>(run, &args.checkpoint)?;
            let ar = nle_core::baselines::ArModel::new(model);
            eval::evaluate(
                &System::Ar {
                    model: &ar,
                    max_len: args.max_len,
                },
                &corpus,
                &indices,
                args.workers,
            )?
        }
        other => bail!("unknown system {other:?} (editor | ar | passthrough)"),
    };
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.csv"), report.to_csv())?;
        std::fs::write(
            out.join("summary.txt"),
            report.summary(&args.system) + "\n",
        )?;
    }
    println!("{}", report.summary(&args.system));
    Ok(0)
}

fn cmd_ablate<S: Scalar>(args: AblateArgs) -> anyhow::Result<i32> {
    let mut cfg = load_train_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    let corpus_bytes = std::fs::read(&args.corpus)?;
    let corpus_hash = content_hash(&corpus_bytes);
    let corpus = corpus::load(&args.corpus)?;
    let rows = training::ablation_suite::<S>(&cfg, &corpus, &corpus_hash, &args.out)?;
    let full = rows
        .iter()
        .find(|r| r.name == "full")
        .map(|r| r.final_valid)
        .unwrap_or(f64::NAN);
    println!("variant,final_valid,margin_vs_full");
    for r in &rows {
        println!("{},{},{}", r.name, r.final_valid, r.final_valid - full);
    }
    Ok(0)
}

fn cmd_density_sweep<S: Scalar>(args: DensitySweepArgs) -> anyhow::Result<i32> {
    let mut cfg = load_train_config(args.config.as_deref())?;
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    let corpus_bytes = std::fs::read(&args.corpus)?;
    let corpus_hash = content_hash(&corpus_bytes);
    let corpus = corpus::load(&args.corpus)?;
    let test_idx: Vec<usize> = split_indices(&corpus, "test")?
        .into_iter()
        .take(args.eval_utts)
        .collect();
    std::fs::create_dir_all(&args.out)?;
    let rows = eval::density_sweep(
        |k| {
            let mut kcfg = cfg.clone();
            kcfg.density = k;
            let out = args.out.join(format!("density{k}"));
            Ok(training::train::<S>(&kcfg, &corpus, &corpus_hash, &out)?.model)
        },
        &corpus,
        &test_idx,
        &args.densities,
        cfg.workers,
    )?;
    let mut csv = String::from("density,wer,positions_per_utt\n");
    println!("density,wer,positions_per_utt");
    for r in &rows {
        println!("{},{},{}", r.density, r.wer, r.positions_per_utt);
        csv.push_str(&format!("{},{},{}\n", r.density, r.wer, r.positions_per_utt));
    }
    std::fs::write(args.out.join("density_sweep.csv"), csv)?;
    Ok(0)
}

fn cmd_multistep_sweep<S: Scalar>(args: MultistepSweepArgs) -> anyhow::Result<i32> {
    let corpus = corpus::load(&args.corpus)?;
    let indices = split_indices(&corpus, &args.split)?;
    let (cfg, model) = load_run::<S>(&args.run, "best")?;
    let rows = eval::multistep_sweep(
        &model,
        &corpus,
        &indices,
        args.max_steps,
        &cfg.edit_conditions(),
        args.workers,
    )?;
    let mut csv = String::from("steps,wer,forward_calls_per_utt\n");
    println!("steps,wer,forward_calls_per_utt");
    for r in &rows {
        println!("{},{},{}", r.steps, r.wer, r.forward_calls_per_utt);
        csv.push_str(&format!("{},{},{}\n", r.steps, r.wer, r.forward_calls_per_utt));
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("multistep_sweep.csv"), csv)?;
    }
    Ok(0)
}

fn cmd_bench<S: Scalar>(args: BenchArgs) -> anyhow::Result<i32> {
    let corpus = corpus::load(&args.corpus)?;
    let indices: Vec<usize> = split_indices(&corpus, "test")?
        .into_iter()
        .take(args.n)
        .collect();
    let (cfg, editor) = load_run::<S>(&args.editor_run, "best")?;
    let (_, ar_backbone) = load_run::<S>(&args.ar_run, "best")?;
    let ar = nle_core::baselines::ArModel::new(ar_backbone);
    let rows = eval::parallelism_bench(
        &editor,
        &ar,
        &corpus,
        &indices,
        &cfg.edit_conditions(),
        args.max_len,
    )?;
    println!("system,forward_calls_per_utt,wall_ms_per_utt,mean_output_len");
    for r in &rows {
        println!(
            "{},{},{:.3},{:.1}",
            r.system, r.forward_calls_per_utt, r.wall_ms_per_utt, r.mean_output_len
        );
    }
    Ok(0)
}

fn cmd_show_edits<S: Scalar>(args: ShowEditsArgs) -> anyhow::Result<i32> {
    let corpus = corpus::load(&args.corpus)?;
    let indices: Vec<usize> = split_indices(&corpus, &args.split)?
        .into_iter()
        .take(args.n)
        .collect();
    let (cfg, model) = load_run::<S>(&args.run, "best")?;
    let conds = cfg.edit_conditions();
    for &i in &indices {
        let utt = &corpus.utterances[i];
        let frames = utt.frames::<S>(&corpus.frame_config);
        let edited = nle_core::editor::edit(&model, &frames, &utt.hypothesis_tokens(), &conds)?;
        let edited_text = corpus::Vocab.decode(&edited)?;
        println!(
            "utt {}\n{}",
            utt.id,
            eval::annotate_triplet(&utt.reference, &utt.hypothesis, &edited_text)
        );
    }
    Ok(0)
}

fn cmd_selftest() -> anyhow::Result<i32> {
    let mut failed = 0;
    for check in nle_core::selftest::run_all() {
        match check.outcome {
            Ok(detail) => println!("PASS {} ({detail})", check.name),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e}", check.name);
            }
        }
    }
    if failed > 0 {
        println!("selftest: {failed} check(s) failed");
        Ok(1)
    } else {
        println!("selftest: all checks passed");
        Ok(0)
    }
}
