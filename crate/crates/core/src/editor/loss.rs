//! Editing objective: CTC against the reference plus a copying regularizer
//! toward the interleaved input tokens, total = ctc + lambda * cr.
//!
//! The CR term is the mean cross-entropy over all text positions, slots
//! included (their target is the blank). The mean, rather than a sum, keeps
//! lambda's meaning independent of batch size and utterance length.

use super::model::{EditorModel, ModelGraph};
use crate::corpus::vocab::BLANK;
use crate::corpus::Frames;
use crate::ctc::ctc_loss_on_tape;
use crate::numerics::scalar::{sc, Scalar};
use crate::numerics::tape::TensorId;
use crate::{Result, TokenId};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ctc: f64,
    pub cr: f64,
}

pub struct LossGraph<S: Scalar> {
    pub graph: ModelGraph<S>,
    pub total: TensorId,
    pub ctc: TensorId,
    pub cr: TensorId,
    pub parts: LossParts,
}

/// Build the full editor loss graph for one utterance.
///
/// Returns `Err(Error::InfeasibleTarget)` when the reference cannot be
/// represented over the text positions; training counts and skips those.
pub fn editor_loss<S: Scalar>(
    model: &EditorModel<S>,
    frames: &Frames<S>,
    layout_tokens: &[TokenId],
    reference: &[TokenId],
    lambda: f64,
    grad_mode: bool,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<LossGraph<S>> {
    let (mut graph, logits) = model.forward_editor(frames, layout_tokens, grad_mode, dropout_rng)?;
    let ctc = ctc_loss_on_tape(&mut graph.tape, logits, reference, BLANK)?;
    let cr = graph.tape.cross_entropy_mean(logits, layout_tokens)?;
    let total = if lambda != 0.0 {
        let scaled = graph.tape.scale(cr, sc::<S>(lambda));
        graph.tape.add(ctc, scaled)?
    } else {
        ctc
    };
    let parts = LossParts {
        total: graph.tape.value(total).to_f64().unwrap(),
        ctc: graph.tape.value(ctc).to_f64().unwrap(),
        cr: graph.tape.value(cr).to_f64().unwrap(),
    };
    Ok(LossGraph {
        graph,
        total,
        ctc,
        cr,
        parts,
    })
}

/// Copying-only objective (identity pretraining): cross-entropy toward the
/// input tokens, no CTC term.
pub fn cr_only_loss<S: Scalar>(
    model: &EditorModel<S>,
    frames: &Frames<S>,
    layout_tokens: &[TokenId],
    grad_mode: bool,
) -> Result<LossGraph<S>> {
    let (mut graph, logits) = model.forward_editor(frames, layout_tokens, grad_mode, None)?;
    let cr = graph.tape.cross_entropy_mean(logits, layout_tokens)?;
    let parts = LossParts {
        total: graph.tape.value(cr).to_f64().unwrap(),
        ctc: 0.0,
        cr: graph.tape.value(cr).to_f64().unwrap(),
    };
    Ok(LossGraph {
        graph,
        total: cr,
        ctc: cr,
        cr,
        parts,
    })
}
