//! Character vocabulary: 30 symbols = 3 reserved (blank ε, BOS, EOS) +
//! 26 letters + space. The blank doubles as the insertion-slot filler.

use crate::{Error, Result, TokenId};

pub const BLANK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SPACE: TokenId = 29;
pub const VOCAB_SIZE: usize = 30;

/// First id that encodes a text character ('a').
const LETTER_BASE: TokenId = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab;

impl Vocab {
    pub fn size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn blank_id(&self) -> TokenId {
        BLANK
    }

    pub fn bos_id(&self) -> TokenId {
        BOS
    }

    pub fn eos_id(&self) -> TokenId {
        EOS
    }

    pub fn encode_char(&self, c: char) -> Result<TokenId> {
        match c {
            'a'..='z' => Ok(LETTER_BASE + (c as usize - 'a' as usize)),
            ' ' => Ok(SPACE),
            other => Err(Error::Config(format!("unencodable character {other:?}"))),
        }
    }

    pub fn decode_char(&self, id: TokenId) -> Result<char> {
        match id {
            SPACE => Ok(' '),
            t if (LETTER_BASE..LETTER_BASE + 26).contains(&t) => {
                Ok((b'a' + (t - LETTER_BASE) as u8) as char)
            }
            other => Err(Error::Config(format!("id {other} is not a text symbol"))),
        }
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.chars().map(|c| self.encode_char(c)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        ids.iter().map(|&t| self.decode_char(t)).collect()
    }

    /// Content symbols the noise channel may produce (letters + space).
    pub fn content_ids(&self) -> std::ops::Range<TokenId> {
        LETTER_BASE..VOCAB_SIZE
    }

    pub fn is_content(&self, id: TokenId) -> bool {
        self.content_ids().contains(&id)
    }
}
