//! Table-driven augmentation ports.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textprep::{SimilarityPort, TranslatorPort};

fn tsv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').map(|f| f.trim().to_string()).collect())
        .collect())
}

/// Context-free neighbour lists: `word<TAB>candidate<TAB>candidate…`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimilarityTable {
    neighbours: HashMap<String, Vec<String>>,
}

impl SimilarityTable {
    pub fn new(neighbours: HashMap<String, Vec<String>>) -> Self {
        Self {
            neighbours: neighbours.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut neighbours = HashMap::new();
        for row in tsv_rows(path.as_ref())? {
            let mut fields = row.into_iter().filter(|f| !f.is_empty());
            if let Some(word) = fields.next() {
                neighbours.entry(word.to_lowercase()).or_insert_with(Vec::new).extend(fields);
            }
        }
        Ok(Self { neighbours })
    }
}

impl SimilarityPort for SimilarityTable {
    fn candidates(&self, words: &[String], position: usize) -> Result<Vec<String>> {
        let word = words
            .get(position)
            .ok_or_else(|| Error::port("similarity", format!("position {position} outside the text")))?;
        Ok(self.neighbours.get(&word.to_lowercase()).cloned().unwrap_or_default())
    }
}

/// Word-by-word dictionary translation through a pivot language:
/// `source<TAB>pivot` rows. Reverse translation maps each pivot word to the
/// first source listed for it, so synonyms collapse. Unknown words pass
/// through unchanged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DictionaryTranslator {
    forward: HashMap<String, String>,
    reverse: HashMap<String, String>,
}

impl DictionaryTranslator {
    pub fn new(pairs: &[(String, String)]) -> Self {
        let mut t = Self::default();
        for (src, pivot) in pairs {
            let (src, pivot) = (src.to_lowercase(), pivot.to_lowercase());
            t.forward.entry(src.clone()).or_insert_with(|| pivot.clone());
            t.reverse.entry(pivot).or_insert(src);
        }
        t
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let pairs = tsv_rows(path)?
            .into_iter()
            .enumerate()
            .map(|(i, row)| match row.as_slice() {
                [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.clone(), b.clone())),
                _ => Err(Error::MalformedLine {
                    line: i + 1,
                    message: format!("{}: expected source<TAB>pivot", path.display()),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(&pairs))
    }

    fn map(table: &HashMap<String, String>, text: &str) -> String {
        text.split_whitespace()
            .map(|w| table.get(&w.to_lowercase()).map_or(w, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TranslatorPort for DictionaryTranslator {
    fn forward(&self, text: &str) -> Result<String> {
        Ok(Self::map(&self.forward, text))
    }

    fn reverse(&self, text: &str) -> Result<String> {
        Ok(Self::map(&self.reverse, text))
    }
}
