//! Pseudo-acoustic frames: each reference symbol rendered as `repeat_factor`
//! copies of its one-hot embedding plus Gaussian noise, with a few extra
//! pure-noise dimensions. Frames derive from the *reference*, so they carry
//! information the corrupted hypothesis has lost.

use super::vocab::VOCAB_SIZE;
use crate::numerics::rng::normal_f64;
use crate::numerics::scalar::{sc, Scalar};
use crate::TokenId;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameConfig {
    pub repeat_factor: usize,
    pub noise_sigma: f64,
    pub noise_dims: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            repeat_factor: 4,
            noise_sigma: 0.25,
            noise_dims: 2,
        }
    }
}

impl FrameConfig {
    pub fn d_frame(&self) -> usize {
        VOCAB_SIZE + self.noise_dims
    }
}

/// Row-major [T × d_frame] frame matrix with T = repeat_factor × |reference|.
pub struct Frames<S> {
    pub data: Vec<S>,
    pub rows: usize,
    pub cols: usize,
}

pub fn render_frames<S: Scalar>(
    reference: &[TokenId],
    cfg: &FrameConfig,
    rng: &mut ChaCha8Rng,
) -> Frames<S> {
    assert!(cfg.repeat_factor >= 1, "repeat_factor must be >= 1");
    let d = cfg.d_frame();
    let rows = cfg.repeat_factor * reference.len();
    let mut data = vec![S::zero(); rows * d];
    let sigma = cfg.noise_sigma;
    let mut row = 0;
    for &sym in reference {
        for _ in 0..cfg.repeat_factor {
            let base = row * d;
            data[base + sym] = S::one();
            if sigma > 0.0 {
                for j in 0..d {
                    data[base + j] = data[base + j] + sc::<S>(sigma * normal_f64(rng));
                }
            }
            row += 1;
        }
    }
    Frames {
        data,
        rows,
        cols: d,
    }
}
