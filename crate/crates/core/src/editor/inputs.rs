//! Shared input preparation for training and inference, including the
//! ablation hooks: layout choice, hypothesis blanking, and zeroed frames.

use crate::corpus::vocab::BLANK;
use crate::corpus::Frames;
use crate::interleave::{
    build_end_padded, build_interleaved, InterleavedSequence, MIN_INPUT_TOKENS,
};
use crate::numerics::scalar::Scalar;
use crate::{Result, TokenId};

#[derive(Debug, Clone, Copy)]
pub struct EditConditions {
    /// Insertion-slot density K.
    pub density: usize,
    /// EndPadding ablation: slots trail the content instead of interleaving.
    pub end_padding: bool,
    /// NoCTCHyp ablation: replace the hypothesis with blanks of equal length.
    pub blank_hypothesis: bool,
    /// NoAudioEmb ablation: multiply acoustic frames by zero.
    pub zero_frames: bool,
}

impl Default for EditConditions {
    fn default() -> Self {
        EditConditions {
            density: 1,
            end_padding: false,
            blank_hypothesis: false,
            zero_frames: false,
        }
    }
}

impl EditConditions {
    pub fn text_layout(&self, hypothesis: &[TokenId]) -> Result<InterleavedSequence> {
        let mut seq = if self.end_padding {
            build_end_padded(hypothesis, self.density, BLANK, MIN_INPUT_TOKENS)?
        } else {
            build_interleaved(hypothesis, self.density, BLANK)?
        };
        if self.blank_hypothesis {
            seq.tokens.iter_mut().for_each(|t| *t = BLANK);
        }
        Ok(seq)
    }

    pub fn conditioned_frames<S: Scalar>(&self, frames: &Frames<S>) -> Frames<S> {
        Frames {
            data: if self.zero_frames {
                vec![S::zero(); frames.data.len()]
            } else {
                frames.data.clone()
            },
            rows: frames.rows,
            cols: frames.cols,
        }
    }
}
