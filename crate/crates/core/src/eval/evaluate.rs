//! Decode a corpus split with a chosen system and aggregate error rates.

use super::levenshtein::edit_distance_decompose;
use super::report::{EvalReport, UttRecord};
use crate::baselines::{passthrough, ArModel};
use crate::corpus::{Corpus, Vocab};
use crate::editor::{multi_step_edit, EditConditions, EditorModel};
use crate::numerics::scalar::Scalar;
use crate::parallel::run_ordered;
use crate::{Result, TokenId};

pub enum System<'a, S: Scalar> {
    /// The unedited hypothesis (the CTC-only row).
    Passthrough,
    /// The parallel editor; `steps == 1` is single-pass editing.
    Editor {
        model: &'a EditorModel<S>,
        conds: EditConditions,
        steps: usize,
    },
    /// Greedy autoregressive decoding.
    Ar {
        model: &'a ArModel<S>,
        max_len: usize,
    },
}

pub fn evaluate<S: Scalar>(
    system: &System<'_, S>,
    corpus: &Corpus,
    indices: &[usize],
    workers: usize,
) -> Result<EvalReport> {
    let frame_cfg = corpus.frame_config;
    let records = run_ordered(indices, workers, |&i| {
        let utt = &corpus.utterances[i];
        let decoded: Result<Vec<TokenId>> = match system {
            System::Passthrough => Ok(passthrough(&utt.hypothesis_tokens())),
            System::Editor {
                model,
                conds,
                steps,
            } => {
                let frames = utt.frames::<S>(&frame_cfg);
                if *steps == 0 {
                    Ok(passthrough(&utt.hypothesis_tokens()))
                } else {
                    multi_step_edit(model, &frames, &utt.hypothesis_tokens(), *steps, conds)
                        .map(|mut per_step| per_step.pop().unwrap())
                }
            }
            System::Ar { model, max_len } => {
                let frames = utt.frames::<S>(&frame_cfg);
                model.decode(&frames, *max_len).map(|(tokens, _, _)| tokens)
            }
        };
        let ref_words: Vec<&str> = utt.reference.split_whitespace().collect();
        let ref_chars: Vec<char> = utt.reference.chars().collect();
        let mut record = UttRecord {
            id: utt.id,
            ref_words: ref_words.len(),
            ref_chars: ref_chars.len(),
            word_counts: Default::default(),
            char_counts: Default::default(),
            decoded: None,
            failure: None,
        };
        match decoded.and_then(|tokens| Vocab.decode(&tokens)) {
            Ok(text) => {
                let hyp_words: Vec<&str> = text.split_whitespace().collect();
                let hyp_chars: Vec<char> = text.chars().collect();
                record.word_counts = edit_distance_decompose(&ref_words, &hyp_words);
                record.char_counts = edit_distance_decompose(&ref_chars, &hyp_chars);
                record.decoded = Some(text);
            }
            Err(e) => record.failure = Some(e.to_string()),
        }
        record
    });
    Ok(EvalReport::from_records(records))
}
