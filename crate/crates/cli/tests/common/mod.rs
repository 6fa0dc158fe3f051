//! Synthetic fixture corpus shared by the CLI integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resume_ie::corpus::{save_text_dataset, split_by_person, ClassLabel, SectionRecord, SplitRatios};
use resume_ie::ports::{ascii_charset, GlyphFont};
use resume_ie::textprep::NormalizationRules;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_resume-ie"))
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Runs the CLI with the artifact-root variable cleared.
pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("RESUME_IE_MODEL_DIR")
        .env("RUST_LOG", "error")
        .output()
        .expect("the CLI binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Section texts of the synthetic resume page in reading order.
pub const RESUME_SECTIONS: [(ClassLabel, &str); 5] = [
    (
        ClassLabel::Education,
        "EDUCATION Bachelor of Science in Computer Engineering, Hacettepe University, 2014-2018. GPA 3.41",
    ),
    (
        ClassLabel::Experience,
        "EXPERIENCE Software Engineer at Aselsan, 2018-2022. Developed embedded systems and led code reviews",
    ),
    (
        ClassLabel::Skill,
        "SKILLS Python, C++, Java, SQL, Docker, Git, Linux, machine learning, teamwork",
    ),
    (
        ClassLabel::Language,
        "LANGUAGES Turkish native, English advanced (C1), German intermediate (B1)",
    ),
    (
        ClassLabel::Personal,
        "PERSONAL INFORMATION Name: Ahmet Yilmaz. Phone: +90 532 418 2290. Email: ahmet.yilmaz@example.com. Born 1995 in Izmir. Driving license B",
    ),
];

const DEGREES: &[&str] = &["Bachelor of Science", "Master of Science", "PhD", "BSc", "MSc", "Associate degree", "High school diploma"];
const FIELDS: &[&str] = &[
    "Computer Engineering",
    "Electrical Engineering",
    "Mathematics",
    "Physics",
    "Economics",
    "Business Administration",
    "Industrial Engineering",
    "Statistics",
];
const SCHOOLS: &[&str] = &[
    "Ankara University",
    "Bogazici University",
    "Hacettepe University",
    "Istanbul Technical University",
    "Middle East Technical University",
    "Ege University",
    "Science High School",
];
const EDU_EXTRAS: &[&str] = &["GPA", "graduated with honors", "thesis on", "faculty of engineering", "exchange semester", "coursework"];

const TITLES: &[&str] = &[
    "Software Engineer",
    "Data Analyst",
    "Project Manager",
    "Intern",
    "Research Assistant",
    "Backend Developer",
    "Test Engineer",
    "Sales Specialist",
];
const COMPANIES: &[&str] = &["Aselsan", "Turkcell", "Havelsan", "Garanti", "Trendyol", "Arcelik", "Vestel", "Roketsan"];
const DUTIES: &[&str] = &[
    "Developed embedded systems",
    "Managed client projects",
    "Led code reviews",
    "Designed web services",
    "Maintained data pipelines",
    "Implemented reporting tools",
    "Coordinated a team of five",
    "Reduced costs by 20 percent",
];

const SKILLS: &[&str] = &[
    "Python", "C++", "Java", "SQL", "Docker", "Kubernetes", "machine learning", "deep learning", "Git", "Linux",
    "Excel", "React", "TensorFlow", "teamwork", "communication", "problem solving", "MATLAB", "AutoCAD",
];

const LANGUAGES: &[&str] = &["Turkish", "English", "German", "French", "Spanish", "Arabic", "Russian", "Italian"];
const LEVELS: &[&str] = &["native", "advanced", "intermediate", "beginner", "fluent", "(C1)", "(B2)", "(B1)", "(A2)"];

const FIRST: &[&str] = &["Ahmet", "Ayse", "Mehmet", "Zeynep", "Can", "Elif", "Mustafa", "Selin", "Emre", "Deniz"];
const LAST: &[&str] = &["Yilmaz", "Kaya", "Demir", "Sahin", "Celik", "Ozturk", "Aydin", "Arslan", "Dogan", "Kilic"];
const CITIES: &[&str] = &["Ankara", "Istanbul", "Izmir", "Bursa", "Antalya", "Eskisehir", "Konya"];
const PERSONAL_EXTRAS: &[&str] = &["Driving license B", "Marital status single", "Marital status married", "Military service completed", "Nationality Turkish"];

const HEADERS: [&[&str]; 5] = [
    &["EDUCATION", "Education", "ACADEMIC BACKGROUND", ""],
    &["EXPERIENCE", "Work Experience", "EMPLOYMENT HISTORY", ""],
    &["SKILLS", "Technical Skills", "SKILL", ""],
    &["PERSONAL INFORMATION", "Personal Details", "CONTACT", ""],
    &["LANGUAGES", "Language", "LANGUAGE", ""],
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

fn years(rng: &mut ChaCha8Rng) -> String {
    let start = rng.gen_range(2000..2020);
    format!("{start}-{}", start + rng.gen_range(1..6))
}

fn section_text(label: ClassLabel, rng: &mut ChaCha8Rng) -> String {
    let body = match label {
        ClassLabel::Education => {
            let mut parts = Vec::new();
            for _ in 0..rng.gen_range(1..3) {
                parts.push(format!(
                    "{} in {}, {}, {}.",
                    pick(rng, DEGREES),
                    pick(rng, FIELDS),
                    pick(rng, SCHOOLS),
                    years(rng)
                ));
            }
            match pick(rng, EDU_EXTRAS) {
                "GPA" => parts.push(format!("GPA {}.{:02}", rng.gen_range(2..4), rng.gen_range(0..100))),
                "thesis on" => parts.push(format!("thesis on {}", pick(rng, FIELDS).to_lowercase())),
                extra => parts.push(extra.to_string()),
            }
            parts.join(" ")
        }
        ClassLabel::Experience => {
            let mut parts = Vec::new();
            for _ in 0..rng.gen_range(1..3) {
                let n = rng.gen_range(1..3);
                let mut duties: Vec<&str> = DUTIES.choose_multiple(rng, n).copied().collect();
                duties.sort();
                parts.push(format!(
                    "{} at {}, {}. {}.",
                    pick(rng, TITLES),
                    pick(rng, COMPANIES),
                    years(rng),
                    duties.join(" and ")
                ));
            }
            parts.join(" ")
        }
        ClassLabel::Skill => {
            let n = rng.gen_range(4..10);
            SKILLS.choose_multiple(rng, n).copied().collect::<Vec<_>>().join(", ")
        }
        ClassLabel::Language => {
            let n = rng.gen_range(2..4);
            let langs: Vec<&str> = LANGUAGES.choose_multiple(rng, n).copied().collect();
            langs
                .iter()
                .map(|l| format!("{l} {}", pick(rng, LEVELS)))
                .collect::<Vec<_>>()
                .join(", ")
        }
        ClassLabel::Personal => {
            let first = pick(rng, FIRST);
            let last = pick(rng, LAST);
            format!(
                "Name: {first} {last}. Phone: +90 5{:02} {:03} {:04}. Email: {}.{}@example.com. Born {} in {}. {}",
                rng.gen_range(0..60),
                rng.gen_range(0..1000),
                rng.gen_range(0..10000),
                first.to_lowercase(),
                last.to_lowercase(),
                rng.gen_range(1970..2002),
                pick(rng, CITIES),
                pick(rng, PERSONAL_EXTRAS)
            )
        }
    };
    let header = pick(rng, HEADERS[label.id()]);
    if header.is_empty() {
        body
    } else {
        format!("{header} {body}")
    }
}

/// `persons` resumes with one section per class, deterministic in `seed`.
pub fn corpus(persons: usize, seed: u64, prefix: &str) -> Vec<SectionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in 0..persons {
        let person_id = format!("{prefix}{p:03}");
        for label in ClassLabel::ALL {
            out.push(SectionRecord {
                record_id: format!("{person_id}-{}", label.name()),
                person_id: person_id.clone(),
                label,
                text: section_text(label, &mut rng),
                normalized_text: None,
            });
        }
    }
    out
}

/// WordPiece vocabulary: specials, every normalized word of `records`, then
/// single characters and their continuation forms.
pub fn wordpiece_vocab(records: &[SectionRecord]) -> String {
    let rules = NormalizationRules::default();
    let words: BTreeSet<String> = records
        .iter()
        .flat_map(|r| {
            rules
                .normalize(&r.text)
                .split_whitespace()
                .map(String::from)
                .collect::<Vec<_>>()
        })
        .collect();
    let chars: Vec<char> = ('a'..='z').chain('0'..='9').chain("@.+-()".chars()).collect();
    let mut lines: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"].map(String::from).to_vec();
    let mut seen: BTreeSet<String> = lines.iter().cloned().collect();
    let candidates = words
        .into_iter()
        .chain(chars.iter().map(|c| c.to_string()))
        .chain(chars.iter().map(|c| format!("##{c}")));
    for token in candidates {
        if seen.insert(token.clone()) {
            lines.push(token);
        }
    }
    lines.join("\n") + "\n"
}

/// 1280×1280 page: two rows of paired sections, then one full-width row.
/// Drawn with 8-pixel cells so the 640-pixel canvas sees the 4-pixel font.
pub fn resume_page() -> RgbImage {
    let charset = ascii_charset();
    let font = GlyphFont { cell: 8 };
    let mut page = RgbImage::from_pixel(1280, 1280, Rgb([255; 3]));
    let column = 544;
    let slots = [(64, 64, column), (672, 64, column), (64, 512, column), (672, 512, column), (64, 960, 1152)];
    for ((_, text), (x, y, width)) in RESUME_SECTIONS.iter().zip(slots) {
        font.draw(&mut page, x, y, text, width, &charset).expect("fixture text fits the page");
    }
    page
}

/// Writes every generated fixture under `dir`. The trained head is not
/// included; it comes from running `train-head` on these files.
pub fn generate(dir: &Path) {
    let models = dir.join("models");
    std::fs::create_dir_all(&models).unwrap();
    std::fs::create_dir_all(dir.join("detect/labels")).unwrap();

    let all = corpus(100, 11, "p");
    let assignment = split_by_person(&all, SplitRatios::default(), 3).unwrap();
    let (train, val, test) = assignment.apply(&all);
    save_text_dataset(dir.join("train.jsonl"), &train).unwrap();
    save_text_dataset(dir.join("val.jsonl"), &val).unwrap();
    save_text_dataset(dir.join("test.jsonl"), &test).unwrap();
    save_text_dataset(dir.join("people20.jsonl"), &corpus(20, 5, "q")).unwrap();
    save_text_dataset(dir.join("augment10.jsonl"), &corpus(2, 9, "a")).unwrap();

    std::fs::write(models.join("vocab.txt"), wordpiece_vocab(&all)).unwrap();
    std::fs::write(models.join("charset.txt"), ascii_charset().to_file_contents()).unwrap();
    std::fs::write(models.join("detector.json"), "{\n  \"kind\": \"ink_blob\",\n  \"source\": \"ink-blob\"\n}\n").unwrap();
    std::fs::write(
        models.join("recognizer.json"),
        "{\n  \"kind\": \"glyph_strip\",\n  \"source\": \"glyph-strip\"\n}\n",
    )
    .unwrap();
    std::fs::write(
        models.join("backbone.json"),
        "{\n  \"kind\": \"hashed\",\n  \"source\": \"hashed-64\",\n  \"params\": { \"dim\": 64, \"seed\": 2024 }\n}\n",
    )
    .unwrap();
    resume_page().save(dir.join("resume.png")).unwrap();

    std::fs::write(dir.join("similarity.tsv"), "python\tjava\tc++\nengineer\tdeveloper\nadvanced\tfluent\n").unwrap();
    std::fs::write(dir.join("translator.tsv"), "software engineer\tyazilim muhendisi\nenglish\tingilizce\n").unwrap();

    // Two canvases, three boxes, and predictions that match them exactly.
    std::fs::write(dir.join("detect/labels/page1.txt"), "0 0.25 0.125 0.4 0.15\n0 0.75 0.125 0.4 0.15\n").unwrap();
    std::fs::write(dir.join("detect/labels/page2.txt"), "0 0.5 0.5 0.9 0.2\n").unwrap();
    std::fs::write(
        dir.join("detect/predictions.txt"),
        "page1 0 0.97 32 32 288 128\npage1 0 0.91 352 32 608 128\npage2 0 0.88 32 256 608 384\n",
    )
    .unwrap();

    std::fs::write(
        dir.join("config.toml"),
        r#"deterministic = true

[model]
model-dir = "models"
tokenizer = "distilbert"

[parse]
conf = 0.25
iou = 0.45
dpi = 150

[train-head]
train = "train.jsonl"
val = "val.jsonl"
model = "models/head.bin"
hidden = 32
patience = 20
seed = 7

[split]
train = 0.7
val = 0.15
test = 0.15
by = "person"
seed = 0

[augment]
factor = 3
seed = 7
"#,
    )
    .unwrap();
}
