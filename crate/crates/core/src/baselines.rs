//! Controlled comparators: an autoregressive decoder sharing the editor's
//! backbone and projector (differing only in attention mode and objective),
//! and the pass-through hypothesis baseline.

use crate::corpus::vocab::{BOS, EOS};
use crate::corpus::Frames;
use crate::editor::{EditorModel, ModelGraph};
use crate::numerics::scalar::Scalar;
use crate::numerics::tape::TensorId;
use crate::{Result, TokenId};
use rand_chacha::ChaCha8Rng;

/// The AR baseline: the same backbone, always causal, trained with
/// next-token prediction over [frames; BOS, reference..., EOS].
pub struct ArModel<S: Scalar> {
    pub backbone: EditorModel<S>,
}

impl<S: Scalar> ArModel<S> {
    pub fn new(backbone: EditorModel<S>) -> Self {
        ArModel { backbone }
    }

    pub fn forward_calls(&self) -> u64 {
        self.backbone.forward_calls()
    }

    pub fn reset_forward_calls(&self) {
        self.backbone.reset_forward_calls()
    }

    /// Teacher-forced cross-entropy over the reference positions. The input
    /// rows are [BOS, ref...]; targets are [ref..., EOS]; acoustic positions
    /// produce no logits and therefore no loss terms.
    pub fn loss_graph(
        &self,
        frames: &Frames<S>,
        reference: &[TokenId],
        grad_mode: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(ModelGraph<S>, TensorId)> {
        let mut input = Vec::with_capacity(reference.len() + 1);
        input.push(BOS);
        input.extend_from_slice(reference);
        let mut targets = Vec::with_capacity(reference.len() + 1);
        targets.extend_from_slice(reference);
        targets.push(EOS);
        let (mut graph, logits) =
            self.backbone
                .forward_causal_with_frames(frames, &input, grad_mode, dropout_rng)?;
        let loss = graph.tape.cross_entropy_mean(logits, &targets)?;
        Ok((graph, loss))
    }

    /// Greedy autoregressive decode. Returns (tokens, forward_calls,
    /// truncated). One forward pass per generated token plus the terminal
    /// pass that yields EOS; truncation at `max_len` is a normal, flagged
    /// outcome.
    pub fn decode(
        &self,
        frames: &Frames<S>,
        max_len: usize,
    ) -> Result<(Vec<TokenId>, u64, bool)> {
        assert!(max_len >= 1, "max_len must be >= 1");
        let before = self.backbone.forward_calls();
        let mut out: Vec<TokenId> = Vec::new();
        let mut truncated = false;
        loop {
            let mut input = Vec::with_capacity(out.len() + 1);
            input.push(BOS);
            input.extend_from_slice(&out);
            let (graph, logits) = self
                .backbone
                .forward_causal_with_frames(frames, &input, false, None)?;
            let shape = graph.tape.shape(logits);
            let (rows, v) = (shape[0], shape[1]);
            let last = &graph.tape.data(logits)[(rows - 1) * v..rows * v];
            let mut best = 0usize;
            for (k, &val) in last.iter().enumerate() {
                if val > last[best] {
                    best = k;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
            if out.len() >= max_len {
                truncated = true;
                break;
            }
        }
        Ok((out, self.backbone.forward_calls() - before, truncated))
    }
}

/// The CTC-only row: emit the hypothesis unedited.
pub fn passthrough(hypothesis: &[TokenId]) -> Vec<TokenId> {
    hypothesis.to_vec()
}
