use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SectionRecord;
use crate::error::{Error, Result};
use crate::seed::derive_rng;

pub const MAX_SIMILAR_CANDIDATES: usize = 100;

const SUBSTITUTION_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// Ranked replacement candidates for one word in its sentence context, e.g.
/// from a masked language model.
pub trait SimilarityPort: Send + Sync {
    fn candidates(&self, words: &[String], position: usize) -> Result<Vec<String>>;
}

/// Round-trip translation through a pivot language.
pub trait TranslatorPort: Send + Sync {
    fn forward(&self, text: &str) -> Result<String>;
    fn reverse(&self, text: &str) -> Result<String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    CharDelete,
    CharSubstitute,
    WordInsert,
    ContextualSubstitute,
    BackTranslate,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::CharDelete,
        Strategy::CharSubstitute,
        Strategy::WordInsert,
        Strategy::ContextualSubstitute,
        Strategy::BackTranslate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CharDelete => "char_delete",
            Strategy::CharSubstitute => "char_substitute",
            Strategy::WordInsert => "word_insert",
            Strategy::ContextualSubstitute => "contextual_substitute",
            Strategy::BackTranslate => "back_translate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentRates {
    /// Fraction of non-space characters deleted or substituted.
    pub char_rate: f64,
    /// Inserted words as a fraction of the word count.
    pub insert_rate: f64,
    /// Fraction of words offered for contextual substitution.
    pub contextual_rate: f64,
}

impl Default for AugmentRates {
    fn default() -> Self {
        Self {
            char_rate: 0.10,
            insert_rate: 0.05,
            contextual_rate: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    /// Output size as a multiple of the input size; originals included.
    pub factor: usize,
    /// Sampling weights in [`Strategy::ALL`] order.
    pub strategy_mix: [f64; 5],
    pub seed: u64,
    pub rates: AugmentRates,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        Self {
            factor: 3,
            strategy_mix: [1.0; 5],
            seed: 0,
            rates: AugmentRates::default(),
        }
    }
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 {
            return Err(Error::Config("augmentation factor must be >= 1".into()));
        }
        if self.strategy_mix.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.strategy_mix.iter().all(|w| *w == 0.0)
        {
            return Err(Error::Config(format!(
                "strategy weights must be non-negative and not all zero, got {:?}",
                self.strategy_mix
            )));
        }
        Ok(())
    }
}

fn touched(count: usize, rate: f64) -> usize {
    (rate * count as f64).ceil() as usize
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes the characters at the given char indices.
pub fn delete_chars_at(text: &str, indices: &[usize]) -> String {
    let drop: BTreeSet<usize> = indices.iter().copied().collect();
    text.chars()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, c)| c)
        .collect()
}

fn pick_letters(text: &str, rate: f64, rng: &mut impl Rng) -> Vec<usize> {
    let letters: Vec<usize> = text
        .chars()
        .enumerate()
        .filter(|(_, c)| !c.is_whitespace())
        .map(|(i, _)| i)
        .collect();
    let k = touched(letters.len(), rate).min(letters.len().saturating_sub(1));
    let mut chosen: Vec<usize> = sample(rng, letters.len(), k).into_iter().map(|j| letters[j]).collect();
    chosen.sort_unstable();
    chosen
}

/// Deletes `⌈rate · n⌉` random non-space characters, always leaving one.
pub fn char_delete(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let chosen = pick_letters(text, rate, rng);
    collapse_whitespace(&delete_chars_at(text, &chosen))
}

/// Replaces `⌈rate · n⌉` random non-space characters with a different
/// random letter or digit.
pub fn char_substitute(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let chosen: BTreeSet<usize> = pick_letters(text, rate, rng).into_iter().collect();
    text.chars()
        .enumerate()
        .map(|(i, c)| {
            if !chosen.contains(&i) {
                return c;
            }
            loop {
                let r = SUBSTITUTION_ALPHABET[rng.gen_range(0..SUBSTITUTION_ALPHABET.len())] as char;
                if r != c {
                    return r;
                }
            }
        })
        .collect()
}

/// Inserts `⌈rate · words⌉` words drawn from `vocabulary` at random slots.
pub fn word_insert(text: &str, vocabulary: &[String], rate: f64, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    if vocabulary.is_empty() {
        return words.join(" ");
    }
    for _ in 0..touched(words.len(), rate) {
        let word = &vocabulary[rng.gen_range(0..vocabulary.len())];
        let slot = rng.gen_range(0..=words.len());
        words.insert(slot, word);
    }
    words.join(" ")
}

/// Replaces `⌈rate · words⌉` random words with a random pick from their top
/// candidates. Only words that have candidates are eligible.
pub fn contextual_substitute(
    text: &str,
    port: &dyn SimilarityPort,
    rate: f64,
    rng: &mut impl Rng,
) -> Result<String> {
    let mut words: Vec<String> = text.split_whitespace().map(String::from).collect();
    let k = touched(words.len(), rate);
    if k == 0 {
        return Ok(words.join(" "));
    }
    let mut eligible = Vec::new();
    for position in 0..words.len() {
        let mut candidates = port.candidates(&words, position)?;
        candidates.truncate(MAX_SIMILAR_CANDIDATES);
        candidates.retain(|c| !c.trim().is_empty());
        if !candidates.is_empty() {
            eligible.push((position, candidates));
        }
    }
    let picks = sample(rng, eligible.len(), k.min(eligible.len())).into_vec();
    for j in picks {
        let (position, candidates) = &eligible[j];
        words[*position] = candidates[rng.gen_range(0..candidates.len())].clone();
    }
    Ok(collapse_whitespace(&words.join(" ")))
}

pub fn back_translate(text: &str, port: &dyn TranslatorPort) -> Result<String> {
    if text.trim().is_empty() {
        return Ok(String::new());
    }
    let pivot = port.forward(text)?;
    Ok(collapse_whitespace(&port.reverse(&pivot)?))
}

/// Sorted unique words of the dataset, used by word insertion.
pub fn build_vocabulary(records: &[SectionRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|r| r.text.split_whitespace())
        .map(str::to_lowercase)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub struct Augmenter<'a> {
    pub plan: AugmentPlan,
    pub vocabulary: Vec<String>,
    pub similarity: Option<&'a dyn SimilarityPort>,
    pub translator: Option<&'a dyn TranslatorPort>,
}

impl<'a> Augmenter<'a> {
    pub fn new(plan: AugmentPlan, vocabulary: Vec<String>) -> Self {
        Self {
            plan,
            vocabulary,
            similarity: None,
            translator: None,
        }
    }

    pub fn with_similarity(mut self, port: &'a dyn SimilarityPort) -> Self {
        self.similarity = Some(port);
        self
    }

    pub fn with_translator(mut self, port: &'a dyn TranslatorPort) -> Self {
        self.translator = Some(port);
        self
    }

    /// Produces augmented copy `copy_index` of `record`. The strategy and all
    /// random choices come from a stream seeded by
    /// `(plan.seed, record_id, copy_index)`.
    pub fn augment_record(&self, record: &SectionRecord, copy_index: usize) -> Result<SectionRecord> {
        self.plan.validate()?;
        let mut rng = derive_rng(&[
            &self.plan.seed.to_le_bytes(),
            record.record_id.as_bytes(),
            &(copy_index as u64).to_le_bytes(),
        ]);
        let chooser = WeightedIndex::new(self.plan.strategy_mix)
            .map_err(|e| Error::Config(format!("strategy mix: {e}")))?;
        let strategy = Strategy::ALL[chooser.sample(&mut rng)];
        let rates = &self.plan.rates;
        let text = &record.text;

        let augmented = match strategy {
            Strategy::CharDelete => char_delete(text, rates.char_rate, &mut rng),
            Strategy::CharSubstitute => char_substitute(text, rates.char_rate, &mut rng),
            Strategy::WordInsert => word_insert(text, &self.vocabulary, rates.insert_rate, &mut rng),
            Strategy::ContextualSubstitute => {
                let port = self.similarity.ok_or(Error::MissingPort {
                    strategy: strategy.name(),
                    port: "similarity",
                })?;
                contextual_substitute(text, port, rates.contextual_rate, &mut rng)?
            }
            Strategy::BackTranslate => {
                let port = self.translator.ok_or(Error::MissingPort {
                    strategy: strategy.name(),
                    port: "translator",
                })?;
                back_translate(text, port)?
            }
        };

        Ok(SectionRecord {
            record_id: format!("{}#aug{copy_index}", record.record_id),
            person_id: record.person_id.clone(),
            label: record.label,
            // A port may return nothing; the copy then repeats its source.
            text: if augmented.trim().is_empty() { text.clone() } else { augmented },
            normalized_text: None,
        })
    }

    fn expand(&self, record: &SectionRecord) -> Result<Vec<SectionRecord>> {
        if record.text.trim().is_empty() {
            return Err(Error::Config(format!("record {} has empty text", record.record_id)));
        }
        let mut out = Vec::with_capacity(self.plan.factor);
        out.push(record.clone());
        for copy in 1..self.plan.factor {
            out.push(self.augment_record(record, copy)?);
        }
        Ok(out)
    }

    /// Each original followed by its `factor - 1` copies.
    pub fn augment_dataset(&self, records: &[SectionRecord]) -> Result<Vec<SectionRecord>> {
        self.plan.validate()?;
        let groups = records.iter().map(|r| self.expand(r)).collect::<Result<Vec<_>>>()?;
        Ok(groups.into_iter().flatten().collect())
    }

    /// Same output as [`Self::augment_dataset`], computed on the rayon pool.
    pub fn augment_dataset_par(&self, records: &[SectionRecord]) -> Result<Vec<SectionRecord>> {
        self.plan.validate()?;
        let groups = records.par_iter().map(|r| self.expand(r)).collect::<Result<Vec<_>>>()?;
        Ok(groups.into_iter().flatten().collect())
    }
}

/// Augments with the dataset's own vocabulary and no model ports.
pub fn augment_dataset(records: &[SectionRecord], plan: &AugmentPlan) -> Result<Vec<SectionRecord>> {
    Augmenter::new(plan.clone(), build_vocabulary(records)).augment_dataset(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{class_counts, ClassLabel};
    use crate::seed::rng_from_seed;
    use std::collections::HashMap;

    fn record(id: &str, label: ClassLabel, text: &str) -> SectionRecord {
        SectionRecord {
            record_id: id.into(),
            person_id: format!("person-{id}"),
            label,
            text: text.into(),
            normalized_text: None,
        }
    }

    struct Identity;
    impl TranslatorPort for Identity {
        fn forward(&self, text: &str) -> Result<String> {
            Ok(text.to_string())
        }
        fn reverse(&self, text: &str) -> Result<String> {
            Ok(text.to_string())
        }
    }

    struct Pair;
    impl TranslatorPort for Pair {
        fn forward(&self, text: &str) -> Result<String> {
            Ok(if text == "hello" { "merhaba".into() } else { text.into() })
        }
        fn reverse(&self, text: &str) -> Result<String> {
            Ok(if text == "merhaba" { "hi".into() } else { text.into() })
        }
    }

    struct Table(HashMap<&'static str, Vec<&'static str>>);
    impl SimilarityPort for Table {
        fn candidates(&self, words: &[String], position: usize) -> Result<Vec<String>> {
            Ok(self
                .0
                .get(words[position].as_str())
                .map(|c| c.iter().map(|s| s.to_string()).collect())
                .unwrap_or_default())
        }
    }

    #[test]
    fn char_delete_at_fixed_index() {
        assert_eq!(delete_chars_at("python", &[2]), "pyhon");
        let mut rng = rng_from_seed(1);
        let out = char_delete("python", 0.1, &mut rng);
        assert_eq!(out.chars().count(), 5);
    }

    #[test]
    fn char_ops_keep_text_non_empty() {
        let mut rng = rng_from_seed(3);
        assert_eq!(char_delete("a", 1.0, &mut rng), "a");
        let s = char_substitute("abcdefghij", 0.1, &mut rng);
        assert_eq!(s.chars().count(), 10);
        assert_eq!(s.chars().zip("abcdefghij".chars()).filter(|(a, b)| a != b).count(), 1);
    }

    #[test]
    fn word_insert_uses_vocabulary() {
        let mut rng = rng_from_seed(5);
        let vocab = vec!["rust".to_string()];
        let out = word_insert("one two three", &vocab, 0.05, &mut rng);
        assert_eq!(out.split_whitespace().count(), 4);
        assert!(out.contains("rust"));
    }

    #[test]
    fn back_translation_examples() {
        assert_eq!(back_translate("senior  engineer", &Identity).unwrap(), "senior engineer");
        assert_eq!(back_translate("hello", &Pair).unwrap(), "hi");
        assert_eq!(back_translate("", &Pair).unwrap(), "");
    }

    #[test]
    fn contextual_substitution_examples() {
        let port = Table(HashMap::from([("engineer", vec!["dev"])]));
        let mut rng = rng_from_seed(9);
        assert_eq!(
            contextual_substitute("software engineer", &port, 0.5, &mut rng).unwrap(),
            "software dev"
        );
        assert_eq!(
            contextual_substitute("software engineer", &port, 0.0, &mut rng).unwrap(),
            "software engineer"
        );
        let empty = Table(HashMap::new());
        assert_eq!(
            contextual_substitute("software engineer", &empty, 1.0, &mut rng).unwrap(),
            "software engineer"
        );
    }

    #[test]
    fn missing_port_is_named() {
        let plan = AugmentPlan {
            strategy_mix: [0.0, 0.0, 0.0, 0.0, 1.0],
            ..AugmentPlan::default()
        };
        let aug = Augmenter::new(plan, vec![]);
        match aug.augment_record(&record("r", ClassLabel::Skill, "rust"), 1) {
            Err(Error::MissingPort { port, .. }) => assert_eq!(port, "translator"),
            other => panic!("expected missing port, got {other:?}"),
        }
        let plan = AugmentPlan {
            strategy_mix: [0.0, 0.0, 0.0, 1.0, 0.0],
            ..AugmentPlan::default()
        };
        assert!(matches!(
            Augmenter::new(plan, vec![]).augment_record(&record("r", ClassLabel::Skill, "rust"), 1),
            Err(Error::MissingPort { port: "similarity", .. })
        ));
    }

    #[test]
    fn identity_back_translation_copy_is_unchanged() {
        let plan = AugmentPlan {
            strategy_mix: [0.0, 0.0, 0.0, 0.0, 1.0],
            ..AugmentPlan::default()
        };
        let aug = Augmenter::new(plan, vec![]).with_translator(&Identity);
        let src = record("r", ClassLabel::Language, "turkish english");
        let copy = aug.augment_record(&src, 1).unwrap();
        assert_eq!(copy.text, src.text);
        assert_eq!(copy.record_id, "r#aug1");
    }

    #[test]
    fn augment_record_is_deterministic() {
        let aug = Augmenter::new(AugmentPlan { strategy_mix: [1.0, 1.0, 1.0, 0.0, 0.0], ..AugmentPlan::default() }, vec!["x".into()]);
        let src = record("r7", ClassLabel::Experience, "built back end services for insights");
        assert_eq!(aug.augment_record(&src, 2).unwrap(), aug.augment_record(&src, 2).unwrap());
    }

    #[test]
    fn factor_one_is_identity_and_three_triples() {
        let records: Vec<SectionRecord> = ClassLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, c)| record(&format!("r{i}"), *c, "some words here to work with"))
            .collect();
        let plan = AugmentPlan { factor: 1, strategy_mix: [1.0, 1.0, 1.0, 0.0, 0.0], ..AugmentPlan::default() };
        assert_eq!(augment_dataset(&records, &plan).unwrap(), records);

        let plan = AugmentPlan { factor: 3, ..plan };
        let out = augment_dataset(&records, &plan).unwrap();
        assert_eq!(out.len(), 15);
        assert_eq!(class_counts(&out), class_counts(&records).map(|c| c * 3));
    }

    #[test]
    fn plan_validation() {
        assert!(AugmentPlan { factor: 0, ..AugmentPlan::default() }.validate().is_err());
        assert!(AugmentPlan { strategy_mix: [0.0; 5], ..AugmentPlan::default() }.validate().is_err());
        assert!(AugmentPlan { strategy_mix: [-1.0, 1.0, 1.0, 1.0, 1.0], ..AugmentPlan::default() }.validate().is_err());
    }
}
