use std::collections::HashMap;
use std::path::Path;

use super::{read_to_string, TokenSequence};
use crate::error::{Error, Result};

const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

/// WordPiece vocabulary: one token per line, line index = id.
#[derive(Clone, Debug)]
pub struct WordPieceVocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
}

impl WordPieceVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate wordpiece token {t:?}")));
            }
        }
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("wordpiece vocabulary lacks {name}")))
        };
        Ok(Self {
            pad: special("[PAD]")?,
            unk: special("[UNK]")?,
            cls: special("[CLS]")?,
            sep: special("[SEP]")?,
            tokens,
            ids,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let content = read_to_string(path.as_ref())?;
        Self::from_tokens(content.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Greedy longest-match-first split of one word. A word with any
    /// unmatched remainder becomes a single unknown piece.
    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let mut candidate: String = chars[start..end].iter().collect();
                if start > 0 {
                    candidate.insert_str(0, CONTINUATION);
                }
                if let Some(&id) = self.ids.get(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk);
                    return;
                }
            }
        }
        out.extend(pieces);
    }

    /// Piece ids for `text` without specials or truncation.
    pub fn tokenize_ids(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            self.word_pieces(word, &mut ids);
        }
        ids
    }

    pub fn tokenize(&self, text: &str) -> Vec<&str> {
        self.tokenize_ids(text)
            .into_iter()
            .map(|id| self.tokens[id as usize].as_str())
            .collect()
    }

    /// `[CLS] pieces [SEP]`, head-truncated and padded to `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> TokenSequence {
        TokenSequence::pack(&self.tokenize_ids(text), &[self.cls], &[self.sep], self.pad, max_len)
    }
}
