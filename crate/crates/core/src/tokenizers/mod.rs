//! Subword tokenizers for the supported backbone families, all producing a
//! fixed-length, right-padded [`TokenSequence`].

mod byte_bpe;
mod unigram;
mod wordpiece;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use byte_bpe::{bytes_to_unicode, ByteBpeVocab};
pub use unigram::{Segmentation, UnigramVocab, WORD_BOUNDARY};
pub use wordpiece::WordPieceVocab;

/// Positions per encoded sequence, specials included.
pub const MAX_LEN: usize = 75;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub true_length: usize,
}

impl TokenSequence {
    /// Lays out `prefix + content + suffix`, keeping only the leading content
    /// pieces that fit in `max_len`, then right-pads with `pad`.
    pub fn pack(content: &[u32], prefix: &[u32], suffix: &[u32], pad: u32, max_len: usize) -> Self {
        let room = max_len.saturating_sub(prefix.len() + suffix.len());
        let mut ids: Vec<u32> = prefix.to_vec();
        ids.extend(content.iter().take(room));
        ids.extend_from_slice(suffix);
        ids.truncate(max_len);
        let true_length = ids.len();
        ids.resize(max_len, pad);
        let mask = (0..max_len).map(|i| u8::from(i < true_length)).collect();
        Self {
            ids,
            mask,
            true_length,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Content ids (mask = 1).
    pub fn active_ids(&self) -> &[u32] {
        &self.ids[..self.true_length]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Bert,
    Distilbert,
    Roberta,
    Xlnet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Wordpiece,
    ByteBpe,
    Unigram,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Bert,
        ModelFamily::Distilbert,
        ModelFamily::Roberta,
        ModelFamily::Xlnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Bert => "bert",
            ModelFamily::Distilbert => "distilbert",
            ModelFamily::Roberta => "roberta",
            ModelFamily::Xlnet => "xlnet",
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            ModelFamily::Bert | ModelFamily::Distilbert => Scheme::Wordpiece,
            ModelFamily::Roberta => Scheme::ByteBpe,
            ModelFamily::Xlnet => Scheme::Unigram,
        }
    }

    /// Vocabulary size of the published checkpoints.
    pub fn expected_vocab_size(self) -> usize {
        match self {
            ModelFamily::Bert | ModelFamily::Distilbert => 30522,
            ModelFamily::Roberta => 50265,
            ModelFamily::Xlnet => 32000,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

/// Vocabulary files for one tokenizer. `merges` is only used by byte-level
/// BPE.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabFiles {
    pub vocab: PathBuf,
    pub merges: Option<PathBuf>,
}

impl VocabFiles {
    pub fn new(vocab: impl Into<PathBuf>) -> Self {
        Self {
            vocab: vocab.into(),
            merges: None,
        }
    }

    /// Conventional file names inside an artifact directory: `vocab.txt`
    /// (WordPiece), `vocab.json` + `merges.txt` (byte-level BPE) and
    /// `spiece.tsv` (unigram).
    pub fn in_dir(dir: impl AsRef<Path>, family: ModelFamily) -> Self {
        let dir = dir.as_ref();
        match family.scheme() {
            Scheme::Wordpiece => Self::new(dir.join("vocab.txt")),
            Scheme::ByteBpe => Self::new(dir.join("vocab.json")).with_merges(dir.join("merges.txt")),
            Scheme::Unigram => Self::new(dir.join("spiece.tsv")),
        }
    }

    pub fn with_merges(mut self, merges: impl Into<PathBuf>) -> Self {
        self.merges = Some(merges.into());
        self
    }
}

#[derive(Clone, Debug)]
pub enum Vocab {
    WordPiece(WordPieceVocab),
    ByteBpe(ByteBpeVocab),
    Unigram(UnigramVocab),
}

impl Vocab {
    pub fn scheme(&self) -> Scheme {
        match self {
            Vocab::WordPiece(_) => Scheme::Wordpiece,
            Vocab::ByteBpe(_) => Scheme::ByteBpe,
            Vocab::Unigram(_) => Scheme::Unigram,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Vocab::WordPiece(v) => v.len(),
            Vocab::ByteBpe(v) => v.len(),
            Vocab::Unigram(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct Tokenizer {
    family: ModelFamily,
    vocab: Vocab,
    max_len: usize,
    warnings: Vec<String>,
}

impl Tokenizer {
    pub fn new(family: ModelFamily, vocab: Vocab) -> Result<Self> {
        if vocab.scheme() != family.scheme() {
            return Err(Error::Vocab(format!(
                "{family} uses {:?} tokenization, got a {:?} vocabulary",
                family.scheme(),
                vocab.scheme()
            )));
        }
        let mut warnings = Vec::new();
        if vocab.len() != family.expected_vocab_size() {
            let msg = format!(
                "{family} vocabulary has {} entries, published checkpoints use {}",
                vocab.len(),
                family.expected_vocab_size()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(Self {
            family,
            vocab,
            max_len: MAX_LEN,
            warnings,
        })
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn scheme(&self) -> Scheme {
        self.vocab.scheme()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        match &self.vocab {
            Vocab::WordPiece(v) => v.encode(text, self.max_len),
            Vocab::ByteBpe(v) => v.encode(text, self.max_len),
            Vocab::Unigram(v) => v.encode(text, self.max_len),
        }
    }
}

/// Builds the tokenizer a backbone family uses. A vocabulary whose size
/// differs from the published checkpoint is accepted with a warning.
pub fn build_tokenizer(family: ModelFamily, files: &VocabFiles) -> Result<Tokenizer> {
    let vocab = match family.scheme() {
        Scheme::Wordpiece => Vocab::WordPiece(WordPieceVocab::load(&files.vocab)?),
        Scheme::ByteBpe => {
            let merges = files
                .merges
                .as_deref()
                .ok_or_else(|| Error::Vocab(format!("{family} needs a merges file")))?;
            Vocab::ByteBpe(ByteBpeVocab::load(&files.vocab, merges)?)
        }
        Scheme::Unigram => Vocab::Unigram(UnigramVocab::load(&files.vocab)?),
    };
    Tokenizer::new(family, vocab)
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_truncates_content_and_keeps_specials() {
        let content: Vec<u32> = (10..210).collect();
        let seq = TokenSequence::pack(&content, &[1], &[2], 0, MAX_LEN);
        assert_eq!(seq.len(), MAX_LEN);
        assert_eq!(seq.true_length, MAX_LEN);
        assert_eq!(seq.ids[0], 1);
        assert_eq!(seq.ids[1], 10);
        assert_eq!(seq.ids[73], 82);
        assert_eq!(seq.ids[74], 2);

        let short = TokenSequence::pack(&[7, 8], &[1], &[2], 0, MAX_LEN);
        assert_eq!(short.true_length, 4);
        assert_eq!(&short.ids[..5], &[1, 7, 8, 2, 0]);
        assert_eq!(&short.mask[..5], &[1, 1, 1, 1, 0]);
    }

    #[test]
    fn family_names_and_schemes() {
        assert_eq!("DistilBERT".parse::<ModelFamily>().unwrap(), ModelFamily::Distilbert);
        assert_eq!(ModelFamily::Roberta.scheme(), Scheme::ByteBpe);
        assert_eq!(ModelFamily::Xlnet.expected_vocab_size(), 32000);
        assert!("gpt".parse::<ModelFamily>().is_err());
        let files = VocabFiles::in_dir("m", ModelFamily::Roberta);
        assert_eq!(files.vocab, Path::new("m/vocab.json"));
        assert_eq!(files.merges.as_deref(), Some(Path::new("m/merges.txt")));
    }
}
