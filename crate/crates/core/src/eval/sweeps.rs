//! Blank-density and multi-step sweeps.

use super::evaluate::{evaluate, System};
use crate::corpus::Corpus;
use crate::editor::{EditConditions, EditorModel};
use crate::numerics::scalar::Scalar;
use crate::Result;

#[derive(Debug, Clone)]
pub struct DensityRow {
    pub density: usize,
    pub wer: f64,
    pub positions_per_utt: f64,
}

/// Train (via `factory`) and evaluate one model per blank density.
/// `positions_per_utt` counts text positions of the interleaved layout.
pub fn density_sweep<S: Scalar>(
    mut factory: impl FnMut(usize) -> Result<EditorModel<S>>,
    corpus: &Corpus,
    indices: &[usize],
    densities: &[usize],
    workers: usize,
) -> Result<Vec<DensityRow>> {
    let mut rows = Vec::with_capacity(densities.len());
    for &k in densities {
        let model = factory(k)?;
        let conds = EditConditions {
            density: k,
            ..Default::default()
        };
        let rep = evaluate(
            &System::Editor {
                model: &model,
                conds,
                steps: 1,
            },
            corpus,
            indices,
            workers,
        )?;
        let mut positions = 0usize;
        for &i in indices {
            positions += conds
                .text_layout(&corpus.utterances[i].hypothesis_tokens())?
                .len();
        }
        rows.push(DensityRow {
            density: k,
            wer: rep.wer(),
            positions_per_utt: positions as f64 / indices.len().max(1) as f64,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct MultiStepRow {
    pub steps: usize,
    pub wer: f64,
    pub forward_calls_per_utt: f64,
}

/// Evaluate editing at steps 0..=max_steps; step 0 is the passthrough
/// baseline. Forward-call counts are measured, and equal `steps` exactly.
pub fn multistep_sweep<S: Scalar>(
    model: &EditorModel<S>,
    corpus: &Corpus,
    indices: &[usize],
    max_steps: usize,
    conds: &EditConditions,
    workers: usize,
) -> Result<Vec<MultiStepRow>> {
    let mut rows = Vec::with_capacity(max_steps + 1);
    for steps in 0..=max_steps {
        let before = model.forward_calls();
        let rep = evaluate(
            &System::Editor {
                model,
                conds: *conds,
                steps,
            },
            corpus,
            indices,
            workers,
        )?;
        let calls = model.forward_calls() - before;
        let per_utt = calls as f64 / indices.len().max(1) as f64;
        assert_eq!(
            calls as usize,
            steps * indices.len(),
            "forward calls must equal steps exactly"
        );
        rows.push(MultiStepRow {
            steps,
            wer: rep.wer(),
            forward_calls_per_utt: per_utt,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, GenConfig};
    use crate::editor::EditorConfig;

    fn tiny_corpus() -> Corpus {
        generate(&GenConfig {
            n_utts: 6,
            min_words: 3,
            max_words: 5,
            seed: 3,
            ..GenConfig::default()
        })
        .unwrap()
    }

    fn tiny_model(k_seed: u64) -> EditorModel<f64> {
        EditorModel::init(
            EditorConfig {
                layers: 1,
                d_model: 16,
                heads: 2,
                d_ff: 32,
                lora_rank: 0,
                max_positions: 512,
                ..EditorConfig::default()
            },
            k_seed,
        )
        .unwrap()
    }

    #[test]
    fn density_sweep_emits_rows_with_decreasing_positions() {
        let corpus = tiny_corpus();
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let rows =
            density_sweep(|k| Ok(tiny_model(k as u64)), &corpus, &indices, &[1, 2, 3], 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].positions_per_utt > rows[1].positions_per_utt);
        assert!(rows[1].positions_per_utt > rows[2].positions_per_utt);
    }

    #[test]
    fn multistep_counts_are_exact() {
        let corpus = tiny_corpus();
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let model = tiny_model(1);
        let rows = multistep_sweep(
            &model,
            &corpus,
            &indices,
            3,
            &EditConditions::default(),
            1,
        )
        .unwrap();
        let calls: Vec<f64> = rows.iter().map(|r| r.forward_calls_per_utt).collect();
        assert_eq!(calls, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
