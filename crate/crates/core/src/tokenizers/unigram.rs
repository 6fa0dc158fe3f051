use std::collections::HashMap;
use std::path::Path;

use super::{read_to_string, TokenSequence};
use crate::error::{Error, Result};

/// Prefix marking the start of each whitespace-separated word.
pub const WORD_BOUNDARY: char = '\u{2581}';

const SPECIALS: [&str; 6] = ["<unk>", "<pad>", "<s>", "</s>", "<cls>", "<sep>"];
const UNK_PENALTY: f64 = 10.0;

/// Best segmentation of one word: piece ids, surface pieces and total
/// log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub ids: Vec<u32>,
    pub pieces: Vec<String>,
    pub score: f64,
}

/// Unigram vocabulary loaded from `piece<TAB>log-prob` lines, line index = id.
#[derive(Clone, Debug)]
pub struct UnigramVocab {
    pieces: Vec<(String, f64)>,
    ids: HashMap<String, u32>,
    max_piece_chars: usize,
    unk_score: f64,
    pub unk: u32,
    pub pad: u32,
    pub bos: u32,
    pub eos: u32,
    pub cls: u32,
    pub sep: u32,
}

impl UnigramVocab {
    pub fn new(pieces: Vec<(String, f64)>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, (p, score)) in pieces.iter().enumerate() {
            if p.is_empty() || !score.is_finite() {
                return Err(Error::Vocab(format!("bad unigram entry {}: {p:?} {score}", i + 1)));
            }
            if ids.insert(p.clone(), i as u32).is_some() {
                return Err(Error::Vocab(format!("duplicate unigram piece {p:?}")));
            }
        }
        let special = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("unigram vocabulary lacks {name}")))
        };
        let regular = pieces.iter().filter(|(p, _)| !SPECIALS.contains(&p.as_str()));
        let min_score = regular.clone().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
        let max_piece_chars = regular.map(|(p, _)| p.chars().count()).max().unwrap_or(0);
        Ok(Self {
            unk: special("<unk>")?,
            pad: special("<pad>")?,
            bos: special("<s>")?,
            eos: special("</s>")?,
            cls: special("<cls>")?,
            sep: special("<sep>")?,
            unk_score: if min_score.is_finite() { min_score - UNK_PENALTY } else { -UNK_PENALTY },
            max_piece_chars,
            pieces,
            ids,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let content = read_to_string(path.as_ref())?;
        let pieces = content
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let (piece, score) = line
                    .rsplit_once('\t')
                    .ok_or_else(|| Error::Vocab(format!("unigram line {}: missing tab", i + 1)))?;
                let score: f64 = score
                    .trim()
                    .parse()
                    .map_err(|_| Error::Vocab(format!("unigram line {}: bad score {score:?}", i + 1)))?;
                Ok((piece.to_string(), score))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(|(p, _)| p.as_str())
    }

    /// Log-probability of a regular piece; specials never match input text.
    pub fn score(&self, piece: &str) -> Option<f64> {
        if SPECIALS.contains(&piece) {
            return None;
        }
        self.ids.get(piece).map(|&id| self.pieces[id as usize].1)
    }

    /// Score charged for one character no piece of length one covers.
    pub fn unk_score(&self) -> f64 {
        self.unk_score
    }

    /// Viterbi segmentation of `word` maximizing the summed piece scores.
    /// Characters that no single-character piece covers become unknown
    /// pieces; adjacent unknowns are merged.
    pub fn segment(&self, word: &str) -> Segmentation {
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        let n = chars.len();
        let offset = |i: usize| if i < n { chars[i].0 } else { word.len() };
        let mut best = vec![f64::NEG_INFINITY; n + 1];
        let mut back: Vec<Option<(usize, Option<u32>)>> = vec![None; n + 1];
        best[0] = 0.0;
        for start in 0..n {
            if best[start] == f64::NEG_INFINITY {
                continue;
            }
            let mut single_covered = false;
            for end in start + 1..=n.min(start + self.max_piece_chars) {
                let sub = &word[offset(start)..offset(end)];
                if let Some(s) = self.score(sub) {
                    if end == start + 1 {
                        single_covered = true;
                    }
                    let cand = best[start] + s;
                    if cand > best[end] {
                        best[end] = cand;
                        back[end] = Some((start, Some(self.ids[sub])));
                    }
                }
            }
            if !single_covered {
                let cand = best[start] + self.unk_score;
                if cand > best[start + 1] {
                    best[start + 1] = cand;
                    back[start + 1] = Some((start, None));
                }
            }
        }
        let mut spans = Vec::new();
        let mut end = n;
        while end > 0 {
            let (start, id) = back[end].expect("every position is reachable");
            spans.push((start, end, id));
            end = start;
        }
        spans.reverse();
        let mut seg = Segmentation {
            ids: Vec::new(),
            pieces: Vec::new(),
            score: best[n],
        };
        let mut prev_unk = false;
        for (start, end, id) in spans {
            let text = &word[offset(start)..offset(end)];
            match id {
                None if prev_unk => seg.pieces.last_mut().unwrap().push_str(text),
                None => {
                    seg.ids.push(self.unk);
                    seg.pieces.push(text.to_string());
                }
                Some(id) => {
                    seg.ids.push(id);
                    seg.pieces.push(text.to_string());
                }
            }
            prev_unk = id.is_none();
        }
        seg
    }

    /// Segments each whitespace-separated word with the boundary prefix.
    pub fn tokenize(&self, text: &str) -> Vec<Segmentation> {
        text.split_whitespace()
            .map(|w| self.segment(&format!("{WORD_BOUNDARY}{w}")))
            .collect()
    }

    pub fn tokenize_ids(&self, text: &str) -> Vec<u32> {
        self.tokenize(text).into_iter().flat_map(|s| s.ids).collect()
    }

    /// `pieces <sep> <cls>`, head-truncated and right-padded to `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> TokenSequence {
        TokenSequence::pack(&self.tokenize_ids(text), &[], &[self.sep, self.cls], self.pad, max_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizers::MAX_LEN;

    fn toy() -> UnigramVocab {
        let mut pieces: Vec<(String, f64)> = SPECIALS.iter().map(|s| (s.to_string(), 0.0)).collect();
        for (p, s) in [("▁", -2.0), ("▁ab", -3.0), ("a", -2.5), ("b", -2.5), ("ab", -2.0), ("abc", -4.5), ("c", -3.0)] {
            pieces.push((p.to_string(), s));
        }
        UnigramVocab::new(pieces).unwrap()
    }

    #[test]
    fn viterbi_prefers_higher_total_score() {
        let v = toy();
        let seg = v.segment("▁abc");
        assert_eq!(seg.pieces, vec!["▁ab", "c"]);
        assert!((seg.score - -6.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_characters_merge() {
        let v = toy();
        let seg = v.segment("▁xyab");
        assert_eq!(seg.pieces, vec!["▁", "xy", "ab"]);
        assert_eq!(seg.ids[1], v.unk);
        assert!((seg.score - (-2.0 + 2.0 * v.unk_score() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn xlnet_layout() {
        let v = toy();
        let seq = v.encode("ab c", MAX_LEN);
        let ab = v.ids["▁ab"];
        let bound = v.ids["▁"];
        let c = v.ids["c"];
        assert_eq!(&seq.ids[..6], &[ab, bound, c, v.sep, v.cls, v.pad]);
        assert_eq!(seq.true_length, 5);
    }

    #[test]
    fn load_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pieces.tsv");
        let mut body: String = SPECIALS.iter().map(|s| format!("{s}\t0\n")).collect();
        body.push_str("▁hi\t-1.5\n");
        std::fs::write(&path, body).unwrap();
        let v = UnigramVocab::load(&path).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.tokenize_ids("hi"), vec![6]);
        std::fs::write(&path, "<unk>\tx\n").unwrap();
        assert!(UnigramVocab::load(&path).is_err());
    }
}
