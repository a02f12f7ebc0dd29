//! Deterministic training: causal base pretraining, then adapter training
//! (LoRA + projector) with the editing objective or the AR objective.
//!
//! Batch composition depends only on (seed, step), gradients accumulate in
//! utterance order, and all RNG streams derive from labeled splits, so a
//! rerun with the same seed is byte-identical and a resumed run continues
//! exactly where the interrupted one would have been.

use super::config::{TrainConfig, Variant};
use crate::corpus::vocab::{BOS, EOS};
use crate::corpus::{Corpus, Split};
use crate::editor::{editor_loss, EditorModel};
use crate::numerics::checkpoint::{self, Entry, Manifest};
use crate::numerics::rng::labeled;
use crate::numerics::scalar::Scalar;
use crate::numerics::{cosine_lr, AdamW, AdamWConfig};
use crate::parallel::run_ordered;
use crate::{Error, Result};
use rand::Rng;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct Trained<S: Scalar> {
    pub model: EditorModel<S>,
    pub out_dir: PathBuf,
    pub base_path: PathBuf,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
    pub metrics_path: PathBuf,
    pub final_valid: f64,
    pub best_valid: f64,
    pub skipped_infeasible: u64,
}

fn sample_batch(seed: u64, label: &str, step: u64, pool: &[usize], n: usize) -> Vec<usize> {
    let mut rng = labeled(seed, &format!("{label}/{step}"));
    (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
}

/// Average per-parameter gradients over the successful utterances of a
/// batch, in utterance order.
pub fn average_grads<S: Scalar>(
    per_utt: Vec<Vec<Option<Vec<S>>>>,
    n_params: usize,
) -> Vec<Option<Vec<S>>> {
    let n_ok = per_utt.len();
    let mut acc: Vec<Option<Vec<S>>> = vec![None; n_params];
    for grads in per_utt {
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                match &mut acc[i] {
                    None => acc[i] = Some(g),
                    Some(a) => {
                        for (av, gv) in a.iter_mut().zip(g) {
                            *av += gv;
                        }
                    }
                }
            }
        }
    }
    if n_ok > 1 {
        let inv = crate::numerics::sc::<S>(1.0 / n_ok as f64);
        for a in acc.iter_mut().flatten() {
            for v in a.iter_mut() {
                *v *= inv;
            }
        }
    }
    acc
}

struct MetricsLog {
    path: PathBuf,
    file: std::fs::File,
}

impl MetricsLog {
    fn create(path: PathBuf) -> Result<Self> {
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "step,lr,total,ctc,cr,valid_total").map_err(|e| Error::io(&path, e))?;
        Ok(MetricsLog { path, file })
    }

    fn row(
        &mut self,
        step: u64,
        lr: f64,
        total: f64,
        ctc: f64,
        cr: f64,
        valid: Option<f64>,
    ) -> Result<()> {
        let valid = valid.map(|v| v.to_string()).unwrap_or_default();
        writeln!(self.file, "{step},{lr},{total},{ctc},{cr},{valid}")
            .map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }
}

fn save_checkpoint<S: Scalar>(
    model: &EditorModel<S>,
    opt: Option<&AdamW<S>>,
    path: &Path,
    config_hash: &str,
    seed: u64,
    step: u64,
    best_valid: f64,
) -> Result<()> {
    let mut entries: Vec<Entry<S>> = model
        .store
        .iter()
        .map(|p| Entry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.value.clone(),
        })
        .collect();
    if let Some(opt) = opt {
        for (idx, m, v) in opt.export_state() {
            let name = &model.store.get(idx).name;
            entries.push(Entry {
                name: format!("opt.m.{name}"),
                shape: vec![m.len()],
                data: m.to_vec(),
            });
            entries.push(Entry {
                name: format!("opt.v.{name}"),
                shape: vec![v.len()],
                data: v.to_vec(),
            });
        }
    }
    let mut extra = std::collections::BTreeMap::new();
    extra.insert("best_valid".to_string(), best_valid.to_string());
    let manifest = Manifest {
        dtype: S::DTYPE.name().into(),
        config_hash: config_hash.into(),
        seed,
        step,
        extra,
    };
    checkpoint::save(path, &manifest, &entries)
}

/// Load a checkpoint produced by `save_checkpoint` into a freshly
/// initialized model/optimizer pair. Returns (step, best_valid).
pub fn load_checkpoint<S: Scalar>(
    model: &mut EditorModel<S>,
    opt: &mut AdamW<S>,
    path: &Path,
) -> Result<(u64, f64)> {
    let (manifest, extra_entries) = model.load_into(path)?;
    let mut opt_entries: Vec<(usize, Vec<S>, Vec<S>)> = Vec::new();
    let mut m_parts: std::collections::HashMap<String, Vec<S>> = Default::default();
    let mut v_parts: std::collections::HashMap<String, Vec<S>> = Default::default();
    for e in extra_entries {
        if let Some(name) = e.name.strip_prefix("opt.m.") {
            m_parts.insert(name.to_string(), e.data);
        } else if let Some(name) = e.name.strip_prefix("opt.v.") {
            v_parts.insert(name.to_string(), e.data);
        } else {
            return Err(Error::Checkpoint(format!("unknown entry {}", e.name)));
        }
    }
    for (name, m) in m_parts {
        let idx = model
            .store
            .id_of(&name)
            .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown {name}")))?;
        let v = v_parts
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing opt.v for {name}")))?;
        opt_entries.push((idx, m, v));
    }
    opt.import_state(manifest.step, opt_entries);
    let best_valid = manifest
        .extra
        .get("best_valid")
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::INFINITY);
    Ok((manifest.step, best_valid))
}

/// Mean loss over one utterance batch index list (gradient mode off).
fn validation_loss<S: Scalar>(
    cfg: &TrainConfig,
    model: &EditorModel<S>,
    corpus: &Corpus,
    indices: &[usize],
) -> Result<f64> {
    let conds = cfg.edit_conditions();
    let lambda = cfg.effective_lambda();
    let results = run_ordered(indices, cfg.workers, |&i| -> Result<Option<f64>> {
        let utt = &corpus.utterances[i];
        let frames = conds.conditioned_frames(&utt.frames::<S>(&corpus.frame_config));
        match cfg.variant {
            Variant::Editor => {
                let layout = conds.text_layout(&utt.hypothesis_tokens())?;
                match editor_loss(
                    model,
                    &frames,
                    &layout.tokens,
                    &utt.reference_tokens(),
                    lambda,
                    false,
                    None,
                ) {
                    Ok(lg) => Ok(Some(lg.parts.total)),
                    Err(Error::InfeasibleTarget { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            }
            Variant::Ar => {
                let ar = ArRef(model);
                let (graph, loss) = ar.loss(&frames, &utt.reference_tokens())?;
                Ok(Some(graph.tape.value(loss).to_f64().unwrap()))
            }
        }
    });
    let mut total = 0.0;
    let mut n = 0usize;
    for r in results {
        if let Some(v) = r? {
            total += v;
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// Borrowed AR view over a backbone (avoids moving the model).
struct ArRef<'a, S: Scalar>(&'a EditorModel<S>);

impl<'a, S: Scalar> ArRef<'a, S> {
    fn loss(
        &self,
        frames: &crate::corpus::Frames<S>,
        reference: &[usize],
    ) -> Result<(crate::editor::ModelGraph<S>, crate::numerics::TensorId)> {
        let mut input = Vec::with_capacity(reference.len() + 1);
        input.push(BOS);
        input.extend_from_slice(reference);
        let mut targets = Vec::with_capacity(reference.len() + 1);
        targets.extend_from_slice(reference);
        targets.push(EOS);
        let (mut graph, logits) = self.0.forward_causal_with_frames(frames, &input, false, None)?;
        let loss = graph.tape.cross_entropy_mean(logits, &targets)?;
        Ok((graph, loss))
    }
}

/// Causal next-token pretraining of the base weights on the references.
/// Logs (step, lr, loss) to base_metrics.csv.
fn pretrain_base<S: Scalar>(
    cfg: &TrainConfig,
    model: &mut EditorModel<S>,
    corpus: &Corpus,
    train_idx: &[usize],
    out_dir: &Path,
) -> Result<()> {
    if cfg.base_steps == 0 {
        return Ok(());
    }
    let base_csv = out_dir.join("base_metrics.csv");
    let mut log = std::fs::File::create(&base_csv).map_err(|e| Error::io(&base_csv, e))?;
    writeln!(log, "step,lr,loss").map_err(|e| Error::io(&base_csv, e))?;
    model.set_trainable_base();
    let adamw_cfg = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(adamw_cfg, model.store.len());
    for step in 1..=cfg.base_steps {
        let batch = sample_batch(cfg.seed, "base-batch", step, train_idx, cfg.batch_size);
        let results = run_ordered(&batch, cfg.workers, |&i| -> Result<(Vec<Option<Vec<S>>>, f64)> {
            let utt = &corpus.utterances[i];
            let reference = utt.reference_tokens();
            let mut input = Vec::with_capacity(reference.len() + 1);
            input.push(BOS);
            input.extend_from_slice(&reference);
            let mut targets = Vec::with_capacity(reference.len() + 1);
            targets.extend_from_slice(&reference);
            targets.push(EOS);
            let (mut graph, logits) = model.base_mode_forward(&input, true)?;
            let loss = graph.tape.cross_entropy_mean(logits, &targets)?;
            graph.tape.backward(loss);
            Ok((graph.collect_grads(), graph.tape.value(loss).to_f64().unwrap()))
        });
        let mut grads = Vec::with_capacity(batch.len());
        let mut loss_sum = 0.0;
        for r in results {
            let (g, l) = r?;
            grads.push(g);
            loss_sum += l;
        }
        let mean_loss = loss_sum / batch.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NanLoss {
                step,
                last_checkpoint: None,
            });
        }
        let avg = average_grads(grads, model.store.len());
        let lr = cosine_lr(
            step,
            cfg.base_steps,
            cfg.base_peak_lr,
            cfg.warmup_frac,
            cfg.min_lr_frac,
        )?;
        let lr = if lr > 0.0 { lr } else { cfg.base_peak_lr * 1e-3 };
        opt.step(model.store.params_mut(), &avg, lr)?;
        writeln!(log, "{step},{lr},{mean_loss}").map_err(|e| Error::io(&base_csv, e))?;
    }
    Ok(())
}

pub fn train<S: Scalar>(
    cfg: &TrainConfig,
    corpus: &Corpus,
    corpus_hash: &str,
    out_dir: &Path,
) -> Result<Trained<S>> {
    train_until(cfg, corpus, corpus_hash, out_dir, None)
}

/// Like `train`, but stops after `stop_after` optimizer steps while keeping
/// the full schedule — the controlled form of an interruption, used to
/// exercise checkpoint resume.
pub fn train_until<S: Scalar>(
    cfg: &TrainConfig,
    corpus: &Corpus,
    corpus_hash: &str,
    out_dir: &Path,
    stop_after: Option<u64>,
) -> Result<Trained<S>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut model = EditorModel::<S>::init(cfg.effective_model(), cfg.seed)?;
    let train_idx = corpus.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::Config("corpus has no training split".into()));
    }

    pretrain_base(cfg, &mut model, corpus, &train_idx, out_dir)?;
    model.init_projector_from_embeddings()?;
    let base_path = out_dir.join("base.nlec");
    save_checkpoint(&model, None, &base_path, &cfg.config_hash(), cfg.seed, 0, f64::INFINITY)?;

    write_run_manifest(cfg, corpus_hash, out_dir)?;

    model.set_trainable_adapters(!cfg.ablation.no_lora);
    if cfg.ablation.no_lora {
        model.set_lora_enabled(false);
    }
    let adamw_cfg = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let opt = AdamW::new(adamw_cfg, model.store.len());
    let metrics = MetricsLog::create(out_dir.join("metrics.csv"))?;
    run_adapter_phase(
        cfg, model, opt, corpus, out_dir, metrics, 0, f64::INFINITY, base_path, stop_after,
    )
}

/// Continue an interrupted run from its last checkpoint. The base phase is
/// already folded into the checkpoint values.
pub fn resume<S: Scalar>(
    cfg: &TrainConfig,
    corpus: &Corpus,
    checkpoint_path: &Path,
    out_dir: &Path,
) -> Result<Trained<S>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut model = EditorModel::<S>::init(cfg.effective_model(), cfg.seed)?;
    model.set_trainable_adapters(!cfg.ablation.no_lora);
    if cfg.ablation.no_lora {
        model.set_lora_enabled(false);
    }
    let adamw_cfg = AdamWConfig {
        weight_decay: cfg.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(adamw_cfg, model.store.len());
    let (step, best_valid) = load_checkpoint(&mut model, &mut opt, checkpoint_path)?;
    let base_path = out_dir.join("base.nlec");
    let metrics = MetricsLog::create(out_dir.join("metrics.csv"))?;
    run_adapter_phase(
        cfg, model, opt, corpus, out_dir, metrics, step, best_valid, base_path, None,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_adapter_phase<S: Scalar>(
    cfg: &TrainConfig,
    mut model: EditorModel<S>,
    mut opt: AdamW<S>,
    corpus: &Corpus,
    out_dir: &Path,
    mut metrics: MetricsLog,
    start_step: u64,
    mut best_valid: f64,
    base_path: PathBuf,
    stop_after: Option<u64>,
) -> Result<Trained<S>> {
    let train_idx = corpus.indices_of(Split::Train);
    let valid_idx: Vec<usize> = corpus
        .indices_of(Split::Valid)
        .into_iter()
        .take(cfg.valid_cap)
        .collect();
    let conds = cfg.edit_conditions();
    let lambda = cfg.effective_lambda();
    let best_path = out_dir.join("best.nlec");
    let last_path = out_dir.join("last.nlec");
    let config_hash = cfg.config_hash();
    let mut skipped: u64 = 0;
    let mut last_saved: Option<PathBuf> = None;
    let mut final_valid = f64::NAN;

    for step in start_step + 1..=cfg.steps {
        let batch = sample_batch(cfg.seed, "batch", step, &train_idx, cfg.batch_size);
        let results = run_ordered(
            &batch,
            cfg.workers,
            |&i| -> Result<Option<(Vec<Option<Vec<S>>>, crate::editor::LossParts)>> {
                let utt = &corpus.utterances[i];
                let frames = conds.conditioned_frames(&utt.frames::<S>(&corpus.frame_config));
                match cfg.variant {
                    Variant::Editor => {
                        let layout = conds.text_layout(&utt.hypothesis_tokens())?;
                        let mut dropout_rng =
                            labeled(cfg.seed, &format!("dropout/{step}/{i}"));
                        match editor_loss(
                            &model,
                            &frames,
                            &layout.tokens,
                            &utt.reference_tokens(),
                            lambda,
                            true,
                            Some(&mut dropout_rng),
                        ) {
                            Ok(lg) => {
                                let mut graph = lg.graph;
                                // identity warmup: train the copy behavior
                                // alone before the CTC term joins
                                if step <= cfg.effective_cr_warmup() {
                                    graph.tape.backward(lg.cr);
                                } else {
                                    graph.tape.backward(lg.total);
                                }
                                Ok(Some((graph.collect_grads(), lg.parts)))
                            }
                            Err(Error::InfeasibleTarget { .. }) => Ok(None),
                            Err(e) => Err(e),
                        }
                    }
                    Variant::Ar => {
                        let reference = utt.reference_tokens();
                        let mut input = Vec::with_capacity(reference.len() + 1);
                        input.push(BOS);
                        input.extend_from_slice(&reference);
                        let mut targets = Vec::with_capacity(reference.len() + 1);
                        targets.extend_from_slice(&reference);
                        targets.push(EOS);
                        let (mut graph, logits) =
                            model.forward_causal_with_frames(&frames, &input, true, None)?;
                        let loss = graph.tape.cross_entropy_mean(logits, &targets)?;
                        graph.tape.backward(loss);
                        let total = graph.tape.value(loss).to_f64().unwrap();
                        Ok(Some((
                            graph.collect_grads(),
                            crate::editor::LossParts {
                                total,
                                ctc: total,
                                cr: 0.0,
                            },
                        )))
                    }
                }
            },
        );
        let mut grads = Vec::with_capacity(batch.len());
        let mut sums = (0.0f64, 0.0f64, 0.0f64);
        for r in results {
            match r? {
                Some((g, parts)) => {
                    grads.push(g);
                    sums.0 += parts.total;
                    sums.1 += parts.ctc;
                    sums.2 += parts.cr;
                }
                None => skipped += 1,
            }
        }
        let n_ok = grads.len().max(1) as f64;
        let (total, ctc, cr) = (sums.0 / n_ok, sums.1 / n_ok, sums.2 / n_ok);
        if !total.is_finite() {
            return Err(Error::NanLoss {
                step,
                last_checkpoint: last_saved,
            });
        }
        let lr = cosine_lr(step, cfg.steps, cfg.peak_lr, cfg.warmup_frac, cfg.min_lr_frac)?;
        let lr = if lr > 0.0 { lr } else { cfg.peak_lr * 1e-3 };
        if !grads.is_empty() {
            let avg = average_grads(grads, model.store.len());
            opt.step(model.store.params_mut(), &avg, lr)?;
        }

        let evaluate_now = step % cfg.eval_every == 0 || step == cfg.steps;
        let mut valid = None;
        if evaluate_now && !valid_idx.is_empty() {
            let v = validation_loss(cfg, &model, corpus, &valid_idx)?;
            valid = Some(v);
            final_valid = v;
            if v < best_valid {
                best_valid = v;
                save_checkpoint(&model, None, &best_path, &config_hash, cfg.seed, step, best_valid)?;
            }
        }
        metrics.row(step, lr, total, ctc, cr, valid)?;

        if step % cfg.checkpoint_every == 0 || step == cfg.steps {
            save_checkpoint(
                &model,
                Some(&opt),
                &last_path,
                &config_hash,
                cfg.seed,
                step,
                best_valid,
            )?;
            last_saved = Some(last_path.clone());
        }
        if stop_after == Some(step) {
            break;
        }
    }

    if !best_path.exists() {
        save_checkpoint(&model, None, &best_path, &config_hash, cfg.seed, cfg.steps, best_valid)?;
    }
    Ok(Trained {
        model,
        out_dir: out_dir.to_path_buf(),
        base_path,
        best_path,
        last_path,
        metrics_path: metrics.path.clone(),
        final_valid,
        best_valid,
        skipped_infeasible: skipped,
    })
}

fn write_run_manifest(cfg: &TrainConfig, corpus_hash: &str, out_dir: &Path) -> Result<()> {
    let manifest = serde_json::json!({
        "config_kv": cfg.to_kv(),
        "config_hash": cfg.config_hash(),
        "corpus_hash": corpus_hash,
        "code_version": env!("CARGO_PKG_VERSION"),
        "variant": cfg.variant.name(),
        "ablation": cfg.ablation.label(),
    });
    let path = out_dir.join("run_manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::io(&path, e))?;
    Ok(())
}
