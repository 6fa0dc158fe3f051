use std::collections::HashMap;
use std::path::Path;

use super::{read_to_string, TokenSequence};
use crate::error::{Error, Result};

/// The reversible byte → printable-char table used by byte-level BPE
/// vocabularies: printable Latin-1 bytes map to themselves, the rest are
/// shifted to U+0100 and up.
pub fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut shifted = 0u32;
    for b in 0..=255u32 {
        let printable = (0x21..=0x7E).contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
        table[b as usize] = if printable {
            char::from_u32(b).unwrap()
        } else {
            shifted += 1;
            char::from_u32(255 + shifted).unwrap()
        };
    }
    table
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Number,
    Space,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Number
    } else {
        CharClass::Other
    }
}

const CONTRACTIONS: [&str; 7] = ["s", "t", "re", "ve", "m", "ll", "d"];

/// Splits text the way GPT-2 style byte-level tokenizers do: contractions,
/// runs of letters, digits or other symbols (each optionally led by one
/// space), and whitespace runs, where a run followed by text leaves its last
/// space to lead the next piece.
pub(crate) fn pretokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let offset = |i: usize| if i < n { chars[i].0 } else { text.len() };
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c == '\'' {
            let rest = &text[offset(i + 1)..];
            if let Some(k) = CONTRACTIONS.iter().find(|k| rest.starts_with(**k)) {
                let end = i + 1 + k.chars().count();
                out.push(&text[offset(i)..offset(end)]);
                i = end;
                continue;
            }
        }
        let lead_space = c == ' ' && i + 1 < n && class_of(chars[i + 1].1) != CharClass::Space;
        let body = if lead_space { i + 1 } else { i };
        let class = class_of(chars[body].1);
        if class != CharClass::Space {
            let mut end = body + 1;
            while end < n && class_of(chars[end].1) == class {
                end += 1;
            }
            out.push(&text[offset(i)..offset(end)]);
            i = end;
            continue;
        }
        let mut end = i + 1;
        while end < n && class_of(chars[end].1) == CharClass::Space {
            end += 1;
        }
        if end < n && end - i > 1 {
            // Leave the last whitespace char to the following piece.
            end -= 1;
        }
        out.push(&text[offset(i)..offset(end)]);
        i = end;
    }
    out
}

/// Byte-level BPE vocabulary: token → id table plus ranked merges.
#[derive(Clone, Debug)]
pub struct ByteBpeVocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    byte_chars: [char; 256],
    char_bytes: HashMap<char, u8>,
    pub bos: u32,
    pub eos: u32,
    pub pad: u32,
    pub unk: u32,
}

impl ByteBpeVocab {
    pub fn new(ids: HashMap<String, u32>, merges: Vec<(String, String)>) -> Result<Self> {
        let mut tokens = vec![None; ids.len()];
        for (tok, &id) in &ids {
            let slot = tokens
                .get_mut(id as usize)
                .ok_or_else(|| Error::Vocab(format!("token id {id} outside 0..{}", ids.len())))?;
            if slot.replace(tok.clone()).is_some() {
                return Err(Error::Vocab(format!("id {id} assigned twice")));
            }
        }
        let tokens: Vec<String> = tokens.into_iter().map(Option::unwrap).collect();
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("byte-level BPE vocabulary lacks {name}")))
        };
        let byte_chars = bytes_to_unicode();
        Ok(Self {
            bos: special("<s>")?,
            eos: special("</s>")?,
            pad: special("<pad>")?,
            unk: special("<unk>")?,
            ranks: merges.into_iter().enumerate().map(|(rank, pair)| (pair, rank)).collect(),
            char_bytes: byte_chars.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect(),
            byte_chars,
            tokens,
            ids,
        })
    }

    /// Loads a JSON token → id object and a merges file (`left right` per
    /// line, optional `#version` header).
    pub fn load(vocab: impl AsRef<Path>, merges: impl AsRef<Path>) -> Result<Self> {
        let ids: HashMap<String, u32> = serde_json::from_str(&read_to_string(vocab.as_ref())?)?;
        let merges = read_to_string(merges.as_ref())?
            .lines()
            .filter(|l| !l.starts_with("#version") && !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                let mut parts = l.split(' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                    _ => Err(Error::Vocab(format!("merges entry {}: {l:?}", i + 1))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, merges)
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

    /// Applies merges to one pre-token, lowest rank first, until none apply.
    pub fn bpe(&self, piece: &str) -> Vec<String> {
        let mut units: Vec<String> = piece
            .bytes()
            .map(|b| self.byte_chars[b as usize].to_string())
            .collect();
        loop {
            let best = units
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, w)))
                .min_by_key(|(r, _)| *r)
                .map(|(_, w)| (w[0].clone(), w[1].clone()));
            let Some((left, right)) = best else { break };
            let mut merged = Vec::with_capacity(units.len());
            let mut i = 0;
            while i < units.len() {
                if i + 1 < units.len() && units[i] == left && units[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut units[i]));
                    i += 1;
                }
            }
            units = merged;
        }
        units
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        pretokenize(text).into_iter().flat_map(|p| self.bpe(p)).collect()
    }

    pub fn tokenize_ids(&self, text: &str) -> Vec<u32> {
        self.tokenize(text)
            .iter()
            .map(|u| self.ids.get(u).copied().unwrap_or(self.unk))
            .collect()
    }

    /// `<s> pieces </s>`, head-truncated and padded to `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> TokenSequence {
        TokenSequence::pack(&self.tokenize_ids(text), &[self.bos], &[self.eos], self.pad, max_len)
    }

    /// Inverse of encoding; specials and unknown ids are skipped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut bytes = Vec::new();
        for &id in ids {
            if [self.bos, self.eos, self.pad, self.unk].contains(&id) {
                continue;
            }
            let Some(tok) = self.token(id) else { continue };
            bytes.extend(tok.chars().filter_map(|c| self.char_bytes.get(&c)));
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
