//! Seeded Markov-chain sentence generator over the bundled word list.
//!
//! Each word has a fixed successor set (derived by hashing, independent of
//! any run seed): a few high-frequency function words plus a handful of
//! content words. Walking the chain yields text with natural word repetition,
//! which exercises the CTC repeat/blank topology downstream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

const WORDS_RAW: &str = include_str!("words.txt");
/// The leading entries of the list are function words; the chain samples
/// them often, the way ordinary prose repeats "the", "of", "and".
const FUNCTION_POOL: usize = 50;
const SUCCESSORS: usize = 8;
const FUNCTION_SLOTS: usize = 3;

pub struct WordTable {
    words: Vec<&'static str>,
}

impl Default for WordTable {
    fn default() -> Self {
        Self::bundled()
    }
}

impl WordTable {
    pub fn bundled() -> Self {
        let words: Vec<&'static str> = WORDS_RAW.lines().filter(|l| !l.is_empty()).collect();
        WordTable { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, idx: usize) -> &str {
        self.words[idx]
    }

    fn successor(&self, word_idx: usize, slot: usize) -> usize {
        let h = fnv1a(&[word_idx as u64, slot as u64]);
        if slot < FUNCTION_SLOTS {
            (h % FUNCTION_POOL as u64) as usize
        } else {
            (h % self.words.len() as u64) as usize
        }
    }

    /// Generate `n_words` of text by walking the chain.
    pub fn generate(&self, n_words: usize, rng: &mut ChaCha8Rng) -> String {
        let mut out = String::new();
        let mut cur = rng.gen_range(0..self.words.len());
        for i in 0..n_words {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.words[cur]);
            cur = self.successor(cur, rng.gen_range(0..SUCCESSORS));
        }
        out
    }
}

fn fnv1a(values: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Stable hash of an utterance id, used to rank ids into splits.
pub fn id_hash(id: u64) -> u64 {
    fnv1a(&[id, 0x5eed])
}
