//! Ablation suite: the full model and its six single-axis ablations, all at
//! one shared seed, compared by final validation loss.

use super::config::{AblationFlags, TrainConfig};
use super::pipeline::train;
use crate::corpus::Corpus;
use crate::numerics::scalar::Scalar;
use crate::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub final_valid: f64,
}

pub fn variants() -> Vec<(&'static str, AblationFlags)> {
    let f = AblationFlags::default;
    vec![
        ("full", f()),
        ("NoCR", AblationFlags { no_cr: true, ..f() }),
        (
            "NoBidirect",
            AblationFlags {
                no_bidirect: true,
                ..f()
            },
        ),
        (
            "EndPadding",
            AblationFlags {
                end_padding: true,
                ..f()
            },
        ),
        (
            "NoAudioEmb",
            AblationFlags {
                no_audio_emb: true,
                ..f()
            },
        ),
        (
            "NoCTCHyp",
            AblationFlags {
                no_ctc_hyp: true,
                ..f()
            },
        ),
        (
            "NoLoRA",
            AblationFlags {
                no_lora: true,
                ..f()
            },
        ),
    ]
}

/// Run all seven variants and write `ablation.csv` under `out_root`.
pub fn ablation_suite<S: Scalar>(
    base: &TrainConfig,
    corpus: &Corpus,
    corpus_hash: &str,
    out_root: &Path,
) -> Result<Vec<AblationRow>> {
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let mut rows = Vec::new();
    for (name, flags) in variants() {
        let mut cfg = base.clone();
        cfg.ablation = flags;
        let out_dir = out_root.join(name);
        let trained = train::<S>(&cfg, corpus, corpus_hash, &out_dir)?;
        rows.push(AblationRow {
            name: name.to_string(),
            final_valid: trained.final_valid,
        });
    }
    let csv_path = out_root.join("ablation.csv");
    let mut csv = String::from("variant,final_valid\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.name, r.final_valid));
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(rows)
}
