//! Parallelism benchmark: exact forward-call counts (asserted) and wall
//! times (reported, machine-dependent, never asserted).

use crate::baselines::ArModel;
use crate::corpus::Corpus;
use crate::editor::{edit, EditConditions, EditorModel};
use crate::numerics::scalar::Scalar;
use crate::Result;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub system: String,
    pub forward_calls_per_utt: f64,
    pub wall_ms_per_utt: f64,
    pub mean_output_len: f64,
}

pub fn parallelism_bench<S: Scalar>(
    editor: &EditorModel<S>,
    ar: &ArModel<S>,
    corpus: &Corpus,
    indices: &[usize],
    conds: &EditConditions,
    ar_max_len: usize,
) -> Result<Vec<BenchRow>> {
    let n = indices.len().max(1) as f64;
    let fc = corpus.frame_config;

    editor.reset_forward_calls();
    let start = Instant::now();
    let mut editor_out_len = 0usize;
    for &i in indices {
        let utt = &corpus.utterances[i];
        let frames = utt.frames::<S>(&fc);
        let out = edit(editor, &frames, &utt.hypothesis_tokens(), conds)?;
        editor_out_len += out.len();
    }
    let editor_ms = start.elapsed().as_secs_f64() * 1e3;
    let editor_calls = editor.forward_calls();
    assert_eq!(
        editor_calls as usize,
        indices.len(),
        "editor must cost exactly one forward pass per utterance"
    );

    ar.reset_forward_calls();
    let start = Instant::now();
    let mut ar_out_len = 0usize;
    for &i in indices {
        let utt = &corpus.utterances[i];
        let frames = utt.frames::<S>(&fc);
        let (out, calls, truncated) = ar.decode(&frames, ar_max_len)?;
        if !truncated {
            assert_eq!(
                calls,
                out.len() as u64 + 1,
                "AR forward calls must equal output length + 1"
            );
        }
        ar_out_len += out.len();
    }
    let ar_ms = start.elapsed().as_secs_f64() * 1e3;
    let ar_calls = ar.forward_calls();

    Ok(vec![
        BenchRow {
            system: "editor".into(),
            forward_calls_per_utt: editor_calls as f64 / n,
            wall_ms_per_utt: editor_ms / n,
            mean_output_len: editor_out_len as f64 / n,
        },
        BenchRow {
            system: "ar".into(),
            forward_calls_per_utt: ar_calls as f64 / n,
            wall_ms_per_utt: ar_ms / n,
            mean_output_len: ar_out_len as f64 / n,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, GenConfig};
    use crate::editor::EditorConfig;

    #[test]
    fn call_counts_are_exact() {
        let corpus = generate(&GenConfig {
            n_utts: 4,
            min_words: 3,
            max_words: 5,
            seed: 5,
            ..GenConfig::default()
        })
        .unwrap();
        let cfg = EditorConfig {
            layers: 1,
            d_model: 16,
            heads: 2,
            d_ff: 32,
            lora_rank: 0,
            max_positions: 512,
            ..EditorConfig::default()
        };
        let editor = EditorModel::<f64>::init(cfg.clone(), 1).unwrap();
        let ar = ArModel::new(EditorModel::<f64>::init(cfg, 2).unwrap());
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let rows = parallelism_bench(
            &editor,
            &ar,
            &corpus,
            &indices,
            &EditConditions::default(),
            12,
        )
        .unwrap();
        assert_eq!(rows[0].forward_calls_per_utt, 1.0);
        assert!(rows[1].forward_calls_per_utt >= 1.0);
        assert!(rows[0].wall_ms_per_utt > 0.0 && rows[1].wall_ms_per_utt > 0.0);
    }
}
