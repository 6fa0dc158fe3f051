//! Section text normalization and augmentation.

mod augment;

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

pub use augment::{
    augment_dataset, back_translate, build_vocabulary, char_delete, char_substitute,
    contextual_substitute, delete_chars_at, word_insert, AugmentPlan, AugmentRates, Augmenter,
    SimilarityPort, Strategy, TranslatorPort, MAX_SIMILAR_CANDIDATES,
};

/// Section headers stripped from the start of a section. Multi-word entries
/// are phrases matched token by token.
pub const DEFAULT_HEADERS: &[&str] = &[
    "education",
    "educations",
    "academic background",
    "experience",
    "experiences",
    "work experience",
    "professional experience",
    "employment",
    "employment history",
    "work history",
    "skill",
    "skills",
    "technical skills",
    "personal",
    "personal profile",
    "personal information",
    "personal details",
    "profile",
    "contact",
    "contact information",
    "language",
    "languages",
];

/// English conjunctions and prepositions removed from every section.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "and", "or", "but", "nor", "so", "yet", "for", "of", "in", "on", "at", "to", "from", "by",
    "with", "as", "into", "about", "than", "via", "per", "over", "under", "within", "during",
];

const MAX_HEADER_TOKENS: usize = 3;

#[derive(Clone, Debug)]
pub struct NormalizationRules {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    header_lexicon: Vec<Vec<String>>,
    stopwords: HashSet<String>,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        Self::new(
            DEFAULT_HEADERS.iter().copied(),
            DEFAULT_STOPWORDS.iter().copied(),
        )
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{00A1}' | '\u{00A7}' | '\u{00AB}'
                | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}' | '\u{25AA}' | '\u{25CF}'
        )
}

impl NormalizationRules {
    pub fn new<'a>(
        headers: impl IntoIterator<Item = &'a str>,
        stopwords: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut rules = Self {
            lowercase: true,
            strip_punctuation: true,
            header_lexicon: Vec::new(),
            stopwords: stopwords.into_iter().map(str::to_lowercase).collect(),
        };
        // Header phrases go through the same token pipeline as text so that
        // e.g. "Skills & Tools" still matches after punctuation removal.
        let mut lexicon: Vec<Vec<String>> = headers
            .into_iter()
            .map(|h| rules.tokens(h))
            .filter(|t| !t.is_empty() && t.len() <= MAX_HEADER_TOKENS)
            .collect();
        // Longest phrase first so "work experience" wins over "work".
        lexicon.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        lexicon.dedup();
        rules.header_lexicon = lexicon;
        rules
    }

    /// Loads header and stopword lists, one entry per line.
    pub fn from_files(headers: impl AsRef<Path>, stopwords: impl AsRef<Path>) -> Result<Self> {
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map_err(|e| Error::io(p, e))
                .map(|s| s.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect::<Vec<_>>())
        };
        let headers = read(headers.as_ref())?;
        let stopwords = read(stopwords.as_ref())?;
        Ok(Self::new(
            headers.iter().map(String::as_str),
            stopwords.iter().map(String::as_str),
        ))
    }

    pub fn headers(&self) -> impl Iterator<Item = String> + '_ {
        self.header_lexicon.iter().map(|t| t.join(" "))
    }

    fn tokens(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase { text.to_lowercase() } else { text.to_string() };
        let text: String = if self.strip_punctuation {
            text.chars().map(|c| if is_punctuation(c) { ' ' } else { c }).collect()
        } else {
            text
        };
        text.split_whitespace()
            .filter(|t| !self.stopwords.contains(&t.to_lowercase()))
            .map(String::from)
            .collect()
    }

    fn leading_header_len(&self, tokens: &[String]) -> Option<usize> {
        self.header_lexicon
            .iter()
            .find(|phrase| {
                phrase.len() <= tokens.len()
                    && phrase.iter().zip(tokens).all(|(p, t)| *p == t.to_lowercase())
            })
            .map(Vec::len)
    }

    /// Lowercases, replaces punctuation with spaces, drops stopwords, strips
    /// header phrases from the start and collapses whitespace. Idempotent.
    pub fn normalize(&self, text: &str) -> String {
        let tokens = self.tokens(text);
        let mut start = 0;
        while let Some(len) = self.leading_header_len(&tokens[start..]) {
            start += len;
        }
        tokens[start..].join(" ")
    }
}

pub fn normalize(text: &str, rules: &NormalizationRules) -> String {
    rules.normalize(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let rules = NormalizationRules::default();
        assert_eq!(rules.normalize("EDUCATION: B.Sc., Computer Science!"), "b sc computer science");
        assert_eq!(rules.normalize(""), "");
        assert_eq!(rules.normalize("Skills and Tools"), "tools");
        assert_eq!(
            rules.normalize("WORK EXPERIENCE Senior Software Engineer"),
            "senior software engineer"
        );
        assert_eq!(rules.normalize("LANGUAGE Turkish English"), "turkish english");
    }

    #[test]
    fn headers_only_stripped_at_start() {
        let rules = NormalizationRules::default();
        assert_eq!(
            rules.normalize("Taught education policy"),
            "taught education policy"
        );
        assert_eq!(rules.normalize("Skills"), "");
    }

    #[test]
    fn custom_rules_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("headers.txt");
        let s = dir.path().join("stop.txt");
        std::fs::write(&h, "hobbies\nskills & tools\n").unwrap();
        std::fs::write(&s, "the\n").unwrap();
        let rules = NormalizationRules::from_files(&h, &s).unwrap();
        assert_eq!(rules.normalize("Skills & Tools: the Rust"), "rust");
        assert_eq!(rules.normalize("Hobbies chess and the go"), "chess and go");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "[A-Za-z:,.!& \\-]{0,60}") {
            let rules = NormalizationRules::default();
            let once = rules.normalize(&text);
            prop_assert_eq!(rules.normalize(&once), once.clone());
        }

        #[test]
        fn normalize_is_idempotent_on_header_soup(
            words in proptest::collection::vec(
                prop_oneof![
                    Just("education"), Just("Work"), Just("experience"), Just("and"),
                    Just("Skills:"), Just("rust"), Just("personal"), Just("profile"), Just("of"),
                ],
                0..10,
            )
        ) {
            let rules = NormalizationRules::default();
            let text = words.join(" ");
            let once = rules.normalize(&text);
            prop_assert_eq!(rules.normalize(&once), once.clone());
        }
    }
}
