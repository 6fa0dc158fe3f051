//! Section dataset: the five-class catalog, line-delimited record files,
//! inverse-frequency class weights and person-disjoint splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const NUM_CLASSES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Education,
    Experience,
    Skill,
    Personal,
    Language,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Education,
        ClassLabel::Experience,
        ClassLabel::Skill,
        ClassLabel::Personal,
        ClassLabel::Language,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Education => "education",
            ClassLabel::Experience => "experience",
            ClassLabel::Skill => "skill",
            ClassLabel::Personal => "personal",
            ClassLabel::Language => "language",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_string(),
                line: None,
            })
    }
}

/// One labeled text group of one resume.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub record_id: String,
    pub person_id: String,
    pub label: ClassLabel,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_text: Option<String>,
}

/// On-disk shape of a record; the label stays a string so an unknown class
/// can be reported by name.
#[derive(Deserialize)]
struct RawRecord {
    record_id: String,
    person_id: String,
    label: String,
    text: String,
    #[serde(default)]
    normalized_text: Option<String>,
}

/// Reads a line-delimited JSON dataset. Blank lines are skipped.
pub fn load_text_dataset(path: impl AsRef<Path>) -> Result<Vec<SectionRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_text_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_text_dataset(reader: impl BufRead) -> Result<Vec<SectionRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = raw.label.parse::<ClassLabel>().map_err(|_| Error::UnknownLabel {
            label: raw.label.clone(),
            line: Some(line_no),
        })?;
        let malformed = |message: &str| Error::MalformedLine {
            line: line_no,
            message: message.to_string(),
        };
        if raw.text.trim().is_empty() {
            return Err(malformed("empty text"));
        }
        if raw.person_id.is_empty() {
            return Err(malformed("empty person_id"));
        }
        if !seen.insert(raw.record_id.clone()) {
            return Err(malformed(&format!("duplicate record_id {:?}", raw.record_id)));
        }
        records.push(SectionRecord {
            record_id: raw.record_id,
            person_id: raw.person_id,
            label,
            text: raw.text,
            normalized_text: raw.normalized_text,
        });
    }
    Ok(records)
}

pub fn save_text_dataset(path: impl AsRef<Path>, records: &[SectionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_text_dataset(&mut out, records).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text_dataset(out: &mut impl Write, records: &[SectionRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a classes file (one name per line, line index = class id). The file
/// must list the built-in catalog in catalog order.
pub fn load_classes_file(path: impl AsRef<Path>) -> Result<Vec<ClassLabel>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut classes = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        let label = name.parse::<ClassLabel>().map_err(|_| Error::UnknownLabel {
            label: name.to_string(),
            line: Some(idx + 1),
        })?;
        classes.push(label);
    }
    if classes != ClassLabel::ALL {
        return Err(Error::Config(format!(
            "classes file {} must list {:?} in order",
            path.display(),
            ClassLabel::ALL.map(ClassLabel::name)
        )));
    }
    Ok(classes)
}

pub fn write_classes_file(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let body: String = ClassLabel::ALL.iter().map(|c| format!("{}\n", c.name())).collect();
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn class_counts(records: &[SectionRecord]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for r in records {
        counts[r.label.id()] += 1;
    }
    counts
}

/// Per-class loss weights indexed by class id.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl ClassWeights {
    pub fn uniform() -> Self {
        Self([1.0; NUM_CLASSES])
    }

    /// Inverse-frequency weights `N / (K * n_c)`.
    pub fn from_counts(counts: &[usize; NUM_CLASSES]) -> Result<Self> {
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(ClassLabel::ALL[empty].name()));
        }
        let total: usize = counts.iter().sum();
        let mut weights = [0.0; NUM_CLASSES];
        for (w, &n) in weights.iter_mut().zip(counts) {
            *w = total as f64 / (NUM_CLASSES as f64 * n as f64);
        }
        Ok(Self(weights))
    }

    pub fn get(&self, label: usize) -> f64 {
        self.0[label]
    }
}

pub fn compute_class_weights(records: &[SectionRecord]) -> Result<ClassWeights> {
    ClassWeights::from_counts(&class_counts(records))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::InvalidRatios(format!("ratios must be positive, got {r:?}")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Hamilton (largest-remainder) apportionment of `n` items. Equal remainders
/// go to the earlier share.
pub fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    // Guard against 0.7 * 20 landing at 13.999999999999998.
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    let remainder = |i: usize| quotas[i] - counts[i] as f64;
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratios: SplitRatios,
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub train_persons: BTreeSet<String>,
    pub val_persons: BTreeSet<String>,
    pub test_persons: BTreeSet<String>,
}

impl SplitAssignment {
    pub fn person_counts(&self) -> [usize; 3] {
        [self.train_persons.len(), self.val_persons.len(), self.test_persons.len()]
    }

    /// Partition `records` into (train, val, test) following the assignment.
    pub fn apply(
        &self,
        records: &[SectionRecord],
    ) -> (Vec<SectionRecord>, Vec<SectionRecord>, Vec<SectionRecord>) {
        let pick = |ids: &BTreeSet<String>| {
            records
                .iter()
                .filter(|r| ids.contains(&r.record_id))
                .cloned()
                .collect::<Vec<_>>()
        };
        (pick(&self.train), pick(&self.val), pick(&self.test))
    }
}

/// Shuffles persons (not records) with `seed` and cuts the shuffled list by
/// largest-remainder counts. Every split must receive at least one person.
pub fn split_by_person(
    records: &[SectionRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    let persons: BTreeSet<&str> = records.iter().map(|r| r.person_id.as_str()).collect();
    let mut persons: Vec<&str> = persons.into_iter().collect();
    let counts = largest_remainder(persons.len(), &ratios.as_array());
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InsufficientPersons {
            persons: persons.len(),
            splits: 3,
        });
    }
    persons.shuffle(&mut rng_from_seed(seed));

    let mut split_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut start = 0;
    for (split, &count) in counts.iter().enumerate() {
        for p in &persons[start..start + count] {
            split_of.insert(p, split);
        }
        start += count;
    }

    let mut out = SplitAssignment {
        ratios,
        train: BTreeSet::new(),
        val: BTreeSet::new(),
        test: BTreeSet::new(),
        train_persons: BTreeSet::new(),
        val_persons: BTreeSet::new(),
        test_persons: BTreeSet::new(),
    };
    for (person, &split) in &split_of {
        let set = match split {
            0 => &mut out.train_persons,
            1 => &mut out.val_persons,
            _ => &mut out.test_persons,
        };
        set.insert(person.to_string());
    }
    for r in records {
        let set = match split_of[r.person_id.as_str()] {
            0 => &mut out.train,
            1 => &mut out.val,
            _ => &mut out.test,
        };
        set.insert(r.record_id.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, person: &str, label: ClassLabel) -> SectionRecord {
        SectionRecord {
            record_id: id.into(),
            person_id: person.into(),
            label,
            text: format!("text of {id}"),
            normalized_text: None,
        }
    }

    #[test]
    fn label_ids_are_a_bijection() {
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            assert_eq!(c.id(), i);
            assert_eq!(ClassLabel::from_id(i), Some(*c));
            assert_eq!(c.name().parse::<ClassLabel>().unwrap(), *c);
        }
        assert_eq!(ClassLabel::from_id(5), None);
    }

    #[test]
    fn parse_rejects_unknown_label_by_name() {
        let data = r#"{"record_id":"a","person_id":"p","label":"skill","text":"rust"}
{"record_id":"b","person_id":"p","label":"hobby","text":"chess"}
"#;
        match parse_text_dataset(data.as_bytes()) {
            Err(Error::UnknownLabel { label, line }) => {
                assert_eq!(label, "hobby");
                assert_eq!(line, Some(2));
            }
            other => panic!("expected unknown label, got {other:?}"),
        }
    }

    #[test]
    fn parse_reports_malformed_line_number() {
        let data = "{\"record_id\":\"a\",\"person_id\":\"p\",\"label\":\"skill\",\"text\":\"x\"}\n\n{not json\n";
        match parse_text_dataset(data.as_bytes()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed line, got {other:?}"),
        }
        let empty_text = r#"{"record_id":"a","person_id":"p","label":"skill","text":"  "}"#;
        assert!(matches!(
            parse_text_dataset(empty_text.as_bytes()),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(parse_text_dataset("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn weights_follow_inverse_frequency() {
        // Catalog order: education, experience, skill, personal, language.
        let w = ClassWeights::from_counts(&[282, 272, 281, 286, 231]).unwrap();
        let expect = |n: f64| 1352.0 / (5.0 * n);
        assert!((w.0[0] - expect(282.0)).abs() < 1e-12);
        assert!((w.0[3] - 0.945_454_545_454_545_5).abs() < 1e-12);
        assert!((w.0[4] - 1.170_562_770_562_770_6).abs() < 1e-12);
        assert!((w.0[1] - 0.994_117_647_058_823_6).abs() < 1e-12);
        assert!((w.0[2] - 0.962_277_580_071_174_4).abs() < 1e-12);
        assert!((w.0[0] - 0.958_865_248_226_950_4).abs() < 1e-12);

        assert_eq!(ClassWeights::from_counts(&[10; 5]).unwrap().0, [1.0; 5]);
        assert!(matches!(
            ClassWeights::from_counts(&[3, 0, 1, 1, 1]),
            Err(Error::EmptyClass("experience"))
        ));
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(20, &[0.7, 0.15, 0.15]), vec![14, 3, 3]);
        assert_eq!(largest_remainder(5, &[0.7, 0.15, 0.15]), vec![3, 1, 1]);
        assert_eq!(largest_remainder(4, &[0.7, 0.15, 0.15]), vec![3, 1, 0]);
        assert_eq!(largest_remainder(0, &[0.7, 0.15, 0.15]), vec![0, 0, 0]);
    }

    #[test]
    fn split_twenty_persons() {
        let mut records = Vec::new();
        for p in 0..20 {
            for (k, c) in ClassLabel::ALL.iter().enumerate() {
                records.push(record(&format!("r{p}-{k}"), &format!("p{p:02}"), *c));
            }
        }
        let a = split_by_person(&records, SplitRatios::default(), 42).unwrap();
        assert_eq!(a.person_counts(), [14, 3, 3]);
        assert_eq!(a.train.len() + a.val.len() + a.test.len(), records.len());
        let b = split_by_person(&records, SplitRatios::default(), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_bad_ratios_and_too_few_persons() {
        let records = vec![record("a", "p", ClassLabel::Skill)];
        let degenerate = SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        assert!(matches!(
            split_by_person(&records, degenerate, 0),
            Err(Error::InvalidRatios(_))
        ));
        assert!(matches!(
            split_by_person(&records, SplitRatios::default(), 0),
            Err(Error::InsufficientPersons { persons: 1, .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let records = vec![
            record("a", "p1", ClassLabel::Education),
            SectionRecord {
                normalized_text: Some("b sc".into()),
                ..record("b", "p2", ClassLabel::Language)
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_text_dataset(&path, &records).unwrap();
        assert_eq!(load_text_dataset(&path).unwrap(), records);
    }

    #[test]
    fn classes_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("classes.txt");
        write_classes_file(&path).unwrap();
        assert_eq!(load_classes_file(&path).unwrap(), ClassLabel::ALL);
        std::fs::write(&path, "skill\neducation\n").unwrap();
        assert!(load_classes_file(&path).is_err());
    }
}
