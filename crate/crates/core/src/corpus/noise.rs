//! Independent per-symbol noise channel: substitute / delete / insert.

use super::vocab::Vocab;
use crate::{Error, Result, TokenId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseProfile {
    pub sub_rate: f64,
    pub del_rate: f64,
    pub ins_rate: f64,
}

impl NoiseProfile {
    pub fn new(sub_rate: f64, del_rate: f64, ins_rate: f64) -> Result<Self> {
        let p = NoiseProfile {
            sub_rate,
            del_rate,
            ins_rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("sub_rate", self.sub_rate),
            ("del_rate", self.del_rate),
            ("ins_rate", self.ins_rate),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} {r} outside [0,1)")));
            }
        }
        if self.sub_rate + self.del_rate + self.ins_rate >= 1.0 {
            return Err(Error::Config(format!(
                "noise rates sum to {} >= 1",
                self.sub_rate + self.del_rate + self.ins_rate
            )));
        }
        Ok(())
    }
}

/// Corrupt a reference token sequence. Per symbol, independently: substitute
/// with a uniformly random *other* content symbol, delete it, or keep it and
/// insert a random content symbol after it.
pub fn corrupt(
    reference: &[TokenId],
    profile: &NoiseProfile,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TokenId>> {
    profile.validate()?;
    let vocab = Vocab;
    let content = vocab.content_ids();
    let n_content = content.len();
    let mut out = Vec::with_capacity(reference.len() + 4);
    for &sym in reference {
        debug_assert!(vocab.is_content(sym));
        let u: f64 = rng.gen();
        if u < profile.sub_rate {
            // uniformly random other symbol
            let mut pick = content.start + rng.gen_range(0..n_content - 1);
            if pick >= sym {
                pick += 1;
            }
            out.push(pick);
        } else if u < profile.sub_rate + profile.del_rate {
            // deleted
        } else if u < profile.sub_rate + profile.del_rate + profile.ins_rate {
            out.push(sym);
            out.push(content.start + rng.gen_range(0..n_content));
        } else {
            out.push(sym);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::labeled;

    #[test]
    fn zero_rates_are_identity() {
        let p = NoiseProfile::new(0.0, 0.0, 0.0).unwrap();
        let reference: Vec<usize> = Vocab.encode("hello world").unwrap();
        let hyp = corrupt(&reference, &p, &mut labeled(1, "noise")).unwrap();
        assert_eq!(hyp, reference);
    }

    #[test]
    fn near_total_deletion_empties_long_input() {
        let p = NoiseProfile::new(0.0, 0.99, 0.0).unwrap();
        let reference: Vec<usize> = std::iter::repeat(Vocab.encode_char('a').unwrap())
            .take(500)
            .collect();
        let hyp = corrupt(&reference, &p, &mut labeled(1, "noise_del")).unwrap();
        assert!(hyp.len() < 25, "kept {} of 500", hyp.len());
    }

    #[test]
    fn degenerate_rates_rejected() {
        assert!(NoiseProfile::new(0.5, 0.5, 0.1).is_err());
        assert!(NoiseProfile::new(-0.1, 0.0, 0.0).is_err());
        assert!(NoiseProfile::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn substitution_never_reproduces_the_original() {
        let p = NoiseProfile::new(0.999, 0.0, 0.0).unwrap();
        let sym = Vocab.encode_char('m').unwrap();
        let reference = vec![sym; 2000];
        let hyp = corrupt(&reference, &p, &mut labeled(2, "noise_sub")).unwrap();
        let unchanged = hyp.iter().filter(|&&t| t == sym).count();
        // ~0.1% keep rate; substitutions are always a different symbol
        assert!(unchanged < 20, "{unchanged} kept");
        assert!(hyp.iter().all(|&t| Vocab.is_content(t)));
    }

    #[test]
    fn empirical_rates_match_configuration() {
        let p = NoiseProfile::new(0.1, 0.05, 0.05, ).unwrap();
        let reference: Vec<usize> = Vocab
            .encode(&"the quick brown fox ".repeat(2500))
            .unwrap();
        let n = reference.len() as f64;
        let hyp = corrupt(&reference, &p, &mut labeled(3, "noise_rates")).unwrap();
        // length change reflects ins - del
        let expected_len = n * (1.0 + p.ins_rate - p.del_rate);
        assert!((hyp.len() as f64 - expected_len).abs() / n < 0.01);
    }
}
