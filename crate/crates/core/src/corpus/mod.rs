//! Synthetic corpus: (reference, noisy hypothesis, pseudo-acoustic frames)
//! triples with controllable error rates, standing in for a speech
//! front-end. Frames are regenerated from (reference, seed) on load rather
//! than stored.

pub mod frames;
pub mod noise;
pub mod textgen;
pub mod vocab;

pub use frames::{render_frames, FrameConfig, Frames};
pub use noise::{corrupt, NoiseProfile};
pub use textgen::WordTable;
pub use vocab::Vocab;

use crate::numerics::rng::labeled;
use crate::numerics::scalar::Scalar;
use crate::{Error, Result, TokenId};
use rand::Rng;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: u64,
    pub reference: String,
    pub hypothesis: String,
    pub profile: NoiseProfile,
    /// Seed for regenerating this utterance's frames.
    pub frame_seed: u64,
}

impl Utterance {
    pub fn reference_tokens(&self) -> Vec<TokenId> {
        Vocab.encode(&self.reference).expect("corpus text is clean")
    }

    pub fn hypothesis_tokens(&self) -> Vec<TokenId> {
        Vocab.encode(&self.hypothesis).expect("corpus text is clean")
    }

    pub fn frames<S: Scalar>(&self, cfg: &FrameConfig) -> Frames<S> {
        let mut rng = labeled(self.frame_seed, "frames");
        render_frames(&self.reference_tokens(), cfg, &mut rng)
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GenConfig {
    pub n_utts: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub noise: NoiseProfile,
    pub seed: u64,
    pub frame: FrameConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_utts: 20_000,
            min_words: 4,
            max_words: 14,
            noise: NoiseProfile {
                sub_rate: 0.10,
                del_rate: 0.05,
                ins_rate: 0.05,
            },
            seed: 7,
            frame: FrameConfig::default(),
        }
    }
}

pub struct Corpus {
    pub frame_config: FrameConfig,
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    /// Deterministic 90/5/5 split: ids ranked by hash, fractions exact to
    /// rounding (±1 utterance).
    pub fn splits(&self) -> Vec<Split> {
        assign_splits(&self.utterances.iter().map(|u| u.id).collect::<Vec<_>>())
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.splits()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

pub fn assign_splits(ids: &[u64]) -> Vec<Split> {
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (textgen::id_hash(ids[i]), ids[i]));
    let n_train = (0.90 * n as f64).round() as usize;
    let n_valid = (0.05 * n as f64).round() as usize;
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    splits
}

/// Generate a corpus in memory. Each utterance derives its own RNG streams
/// from (seed, utterance id), so generation order is immaterial.
pub fn generate(cfg: &GenConfig) -> Result<Corpus> {
    cfg.noise.validate()?;
    if cfg.min_words == 0 || cfg.min_words > cfg.max_words {
        return Err(Error::Config(format!(
            "bad word-count range {}..={}",
            cfg.min_words, cfg.max_words
        )));
    }
    let table = WordTable::bundled();
    use rayon::prelude::*;
    let utterances: Vec<Utterance> = (0..cfg.n_utts as u64)
        .into_par_iter()
        .map(|id| {
            let mut text_rng = labeled(cfg.seed, &format!("utt/{id}/text"));
            let n_words = text_rng.gen_range(cfg.min_words..=cfg.max_words);
            let reference = table.generate(n_words, &mut text_rng);
            let ref_tokens = Vocab.encode(&reference).expect("word list is clean");
            let mut noise_rng = labeled(cfg.seed, &format!("utt/{id}/noise"));
            let hyp_tokens = corrupt(&ref_tokens, &cfg.noise, &mut noise_rng)
                .expect("profile validated above");
            let hypothesis = Vocab.decode(&hyp_tokens).expect("channel emits content ids");
            let frame_seed: u64 = labeled(cfg.seed, &format!("utt/{id}/frames")).gen();
            Utterance {
                id,
                reference,
                hypothesis,
                profile: cfg.noise,
                frame_seed,
            }
        })
        .collect();
    Ok(Corpus {
        frame_config: cfg.frame,
        utterances,
    })
}

/// Write the line-delimited record file.
pub fn save(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let fc = &corpus.frame_config;
    writeln!(
        w,
        "#nle-corpus v1\trepeat_factor={}\tnoise_sigma={}\tnoise_dims={}",
        fc.repeat_factor, fc.noise_sigma, fc.noise_dims
    )
    .map_err(|e| Error::io(path, e))?;
    for u in &corpus.utterances {
        writeln!(
            w,
            "id={}\tsub={}\tdel={}\tins={}\tseed={}\tref={}\thyp={}",
            u.id,
            u.profile.sub_rate,
            u.profile.del_rate,
            u.profile.ins_rate,
            u.frame_seed,
            u.reference,
            u.hypothesis
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::CorpusParse {
            line: 1,
            msg: "empty file".into(),
        })?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let mut frame_config = FrameConfig::default();
    {
        let mut fields = header.split('\t');
        let tag = fields.next().unwrap_or("");
        if tag != "#nle-corpus v1" {
            return Err(Error::CorpusParse {
                line: 1,
                msg: format!("unexpected header {tag:?}"),
            });
        }
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| Error::CorpusParse {
                line: 1,
                msg: format!("bad header field {f:?}"),
            })?;
            match k {
                "repeat_factor" => frame_config.repeat_factor = parse(v, 1)?,
                "noise_sigma" => frame_config.noise_sigma = parse(v, 1)?,
                "noise_dims" => frame_config.noise_dims = parse(v, 1)?,
                other => {
                    return Err(Error::CorpusParse {
                        line: 1,
                        msg: format!("unknown header key {other:?}"),
                    })
                }
            }
        }
    }

    let mut utterances = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut id = None;
        let mut sub = None;
        let mut del = None;
        let mut ins = None;
        let mut seed = None;
        let mut reference = None;
        let mut hypothesis = None;
        for f in line.split('\t') {
            let (k, v) = f.split_once('=').ok_or_else(|| Error::CorpusParse {
                line: line_no,
                msg: format!("bad field {f:?}"),
            })?;
            match k {
                "id" => id = Some(parse(v, line_no)?),
                "sub" => sub = Some(parse(v, line_no)?),
                "del" => del = Some(parse(v, line_no)?),
                "ins" => ins = Some(parse(v, line_no)?),
                "seed" => seed = Some(parse(v, line_no)?),
                "ref" => reference = Some(v.to_string()),
                "hyp" => hypothesis = Some(v.to_string()),
                other => {
                    return Err(Error::CorpusParse {
                        line: line_no,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::CorpusParse {
            line: line_no,
            msg: format!("missing field {what}"),
        };
        let reference = reference.ok_or_else(|| missing("ref"))?;
        let hypothesis = hypothesis.ok_or_else(|| missing("hyp"))?;
        Vocab.encode(&reference).map_err(|e| Error::CorpusParse {
            line: line_no,
            msg: format!("ref: {e}"),
        })?;
        Vocab.encode(&hypothesis).map_err(|e| Error::CorpusParse {
            line: line_no,
            msg: format!("hyp: {e}"),
        })?;
        utterances.push(Utterance {
            id: id.ok_or_else(|| missing("id"))?,
            reference,
            hypothesis,
            profile: NoiseProfile {
                sub_rate: sub.ok_or_else(|| missing("sub"))?,
                del_rate: del.ok_or_else(|| missing("del"))?,
                ins_rate: ins.ok_or_else(|| missing("ins"))?,
            },
            frame_seed: seed.ok_or_else(|| missing("seed"))?,
        });
    }
    Ok(Corpus {
        frame_config,
        utterances,
    })
}

fn parse<T: std::str::FromStr>(v: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::CorpusParse {
        line,
        msg: format!("bad value {v:?}: {e}"),
    })
}
