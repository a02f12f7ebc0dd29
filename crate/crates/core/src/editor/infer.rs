//! Parallel editing inference: one forward pass, then greedy collapse.

use super::inputs::EditConditions;
use super::model::EditorModel;
use crate::corpus::vocab::BLANK;
use crate::corpus::Frames;
use crate::ctc::greedy_collapse;
use crate::numerics::scalar::Scalar;
use crate::{Result, TokenId};

/// Edit a hypothesis in a single forward pass.
///
/// Exactly one `forward_editor` call happens per invocation; the shared
/// forward counter is the measurement surface (asserted by the serial
/// benchmark, where no concurrent calls interleave).
pub fn edit<S: Scalar>(
    model: &EditorModel<S>,
    frames: &Frames<S>,
    hypothesis: &[TokenId],
    conds: &EditConditions,
) -> Result<Vec<TokenId>> {
    let layout = conds.text_layout(hypothesis)?;
    let frames = conds.conditioned_frames(frames);
    let (graph, logits) = model.forward_editor(&frames, &layout.tokens, false, None)?;
    let shape = graph.tape.shape(logits);
    let (p, v) = (shape[0], shape[1]);
    Ok(greedy_collapse(graph.tape.data(logits), p, v, BLANK))
}

/// Iterated editing: decode, re-interleave, feed back, with the acoustic
/// frames fixed. Returns the decode after every step (last entry is final).
pub fn multi_step_edit<S: Scalar>(
    model: &EditorModel<S>,
    frames: &Frames<S>,
    hypothesis: &[TokenId],
    steps: usize,
    conds: &EditConditions,
) -> Result<Vec<Vec<TokenId>>> {
    if steps == 0 {
        return Err(crate::Error::Config("multi_step_edit needs steps >= 1".into()));
    }
    let mut per_step = Vec::with_capacity(steps);
    let mut current = hypothesis.to_vec();
    for _ in 0..steps {
        current = edit(model, frames, &current, conds)?;
        per_step.push(current.clone());
    }
    Ok(per_step)
}
