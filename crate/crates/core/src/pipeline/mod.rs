//! End-to-end extraction: detect → crop and recognize → normalize →
//! classify, producing one [`ResumeExtraction`] per document.

mod schema;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classify::{Classifier, ClassifierHead, Pooling};
use crate::corpus::{ClassLabel, NUM_CLASSES};
use crate::detect::{detect_regions, Detector, DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};
use crate::error::{Error, Result};
use crate::ingest::{mine_text, rasterize, unletterbox, DocumentKind, PageRenderer, TextMiner, DEFAULT_DPI};
use crate::ocr::{recognize, Charset, Recognizer, DEFAULT_CROP_MARGIN};
use crate::ports::PortManifest;
use crate::textprep::{NormalizationRules, DEFAULT_HEADERS, DEFAULT_STOPWORDS};
use crate::tokenizers::{build_tokenizer, ModelFamily, VocabFiles};

pub use schema::{PipelineMeta, ResumeExtraction, Section, TextSource, SCHEMA_VERSION};

/// Artifacts and thresholds for a pipeline run. Paths are used as given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub detector: PathBuf,
    pub recognizer: PathBuf,
    pub backbone: PathBuf,
    pub head: PathBuf,
    pub vocab: PathBuf,
    pub merges: Option<PathBuf>,
    pub charset: PathBuf,
    pub headers: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub tokenizer: ModelFamily,
    /// Defaults to the family's convention.
    pub pooling: Option<Pooling>,
    pub conf_threshold: f64,
    pub iou_threshold: f64,
    pub dpi: u32,
    pub crop_margin: u32,
    pub seed: u64,
    pub prefer_mined: bool,
    pub merge_labels: bool,
}

impl PipelineConfig {
    /// Config with default thresholds for artifacts laid out under `root`
    /// with the conventional file names.
    pub fn with_root(root: impl AsRef<Path>, tokenizer: ModelFamily) -> Self {
        let root = root.as_ref();
        let vocab = VocabFiles::in_dir(root, tokenizer);
        Self {
            detector: root.join("detector.json"),
            recognizer: root.join("recognizer.json"),
            backbone: root.join("backbone.json"),
            head: root.join("head.bin"),
            vocab: vocab.vocab,
            merges: vocab.merges,
            charset: root.join("charset.txt"),
            headers: None,
            stopwords: None,
            tokenizer,
            pooling: None,
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            dpi: DEFAULT_DPI,
            crop_margin: DEFAULT_CROP_MARGIN,
            seed: 0,
            prefer_mined: false,
            merge_labels: false,
        }
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling.unwrap_or_else(|| Pooling::default_for(self.tokenizer))
    }

    /// Checks thresholds and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("confidence", self.conf_threshold), ("IoU", self.iou_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} threshold {v} outside [0, 1]")));
            }
        }
        if self.dpi == 0 {
            return Err(Error::Config("dpi must be positive".into()));
        }
        let required = [
            ("detector", Some(&self.detector)),
            ("recognizer", Some(&self.recognizer)),
            ("backbone", Some(&self.backbone)),
            ("head", Some(&self.head)),
            ("vocab", Some(&self.vocab)),
            ("merges", self.merges.as_ref()),
            ("charset", Some(&self.charset)),
            ("headers", self.headers.as_ref()),
            ("stopwords", self.stopwords.as_ref()),
        ];
        let missing: Vec<String> = required
            .iter()
            .filter_map(|(name, p)| p.filter(|p| !p.is_file()).map(|p| format!("{name} ({})", p.display())))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing artifact files: {}", missing.join(", "))));
        }
        Ok(())
    }
}

fn model_id(manifest: &PortManifest, path: &Path) -> String {
    manifest
        .source
        .clone()
        .unwrap_or_else(|| path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
}

fn stage(stage: &'static str, page: Option<usize>, region: Option<usize>) -> impl FnOnce(Error) -> Error {
    move |e| Error::Stage {
        stage,
        page,
        region,
        source: Box::new(e),
    }
}

/// Loaded ports plus run settings. Shareable across threads.
pub struct Pipeline {
    config: PipelineConfig,
    detector: Box<dyn Detector>,
    recognizer: Box<dyn Recognizer>,
    classifier: Classifier,
    renderer: Option<Arc<dyn PageRenderer>>,
    doc_miner: Option<Arc<dyn TextMiner>>,
    meta: PipelineMeta,
}

impl Pipeline {
    pub fn load(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let load_manifest = |p: &Path| PortManifest::load(p);
        let det_manifest = load_manifest(&config.detector)?;
        let rec_manifest = load_manifest(&config.recognizer)?;
        let bb_manifest = load_manifest(&config.backbone)?;

        let charset = Charset::load(&config.charset)?;
        let detector = det_manifest.detector()?;
        let recognizer = rec_manifest.recognizer(charset)?;
        let port = bb_manifest.backbone()?;
        let head = ClassifierHead::load(&config.head)?;
        let mut files = VocabFiles::new(&config.vocab);
        files.merges = config.merges.clone();
        let tokenizer = build_tokenizer(config.tokenizer, &files)?;
        let read_list = |p: &Option<PathBuf>, default: &[&str]| -> Result<Vec<String>> {
            match p {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
                }
                None => Ok(default.iter().map(|s| s.to_string()).collect()),
            }
        };
        let headers = read_list(&config.headers, DEFAULT_HEADERS)?;
        let stopwords = read_list(&config.stopwords, DEFAULT_STOPWORDS)?;
        let rules = NormalizationRules::new(headers.iter().map(String::as_str), stopwords.iter().map(String::as_str));
        let warnings = tokenizer.warnings().to_vec();
        let pooling = config.pooling();
        let classifier = Classifier::new(rules, tokenizer, port, pooling, head)?;
        let meta = PipelineMeta {
            classes: ClassLabel::ALL.to_vec(),
            detector: model_id(&det_manifest, &config.detector),
            recognizer: model_id(&rec_manifest, &config.recognizer),
            backbone: model_id(&bb_manifest, &config.backbone),
            head: config
                .head
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            tokenizer: config.tokenizer.name().to_string(),
            pooling: pooling.name().to_string(),
            conf_threshold: config.conf_threshold,
            iou_threshold: config.iou_threshold,
            dpi: config.dpi,
            seed: config.seed,
            pages: 0,
            ocr_mean_confidence: None,
            warnings,
            timestamp: None,
        };
        Ok(Self {
            config,
            detector,
            recognizer,
            classifier,
            renderer: None,
            doc_miner: None,
            meta,
        })
    }

    pub fn with_renderer(mut self, renderer: Arc<dyn PageRenderer>) -> Self {
        self.renderer = Some(renderer);
        self
    }

    pub fn with_doc_miner(mut self, miner: Arc<dyn TextMiner>) -> Self {
        self.doc_miner = Some(miner);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    /// Runs every stage on one document. Failures are wrapped in
    /// [`Error::Stage`] naming the stage, page and region.
    pub fn run(&self, path: impl AsRef<Path>) -> Result<ResumeExtraction> {
        let path = path.as_ref();
        let document_id = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        let kind = DocumentKind::detect(path).map_err(stage("ingest", None, None))?;

        let pages;
        let mut sections = Vec::new();
        let mined = if self.config.prefer_mined && !kind.is_image() {
            mine_text(path, self.doc_miner.as_deref()).map_err(stage("mine", None, None))?
        } else {
            Vec::new()
        };
        if !mined.is_empty() {
            pages = mined.iter().map(|b| b.page + 1).max().unwrap_or(0);
            for (i, block) in mined.iter().enumerate() {
                if block.text.trim().is_empty() {
                    continue;
                }
                let pred = self
                    .classifier
                    .predict(&block.text)
                    .map_err(stage("classify", Some(block.page), Some(i)))?;
                sections.push(Section {
                    label: pred.label,
                    probabilities: pred.probabilities,
                    text: block.text.clone(),
                    boxes: block.bbox.into_iter().collect(),
                    page: block.page,
                    source: TextSource::Mined,
                    ocr_confidence: None,
                });
            }
        } else {
            let images = rasterize(path, self.config.dpi, self.renderer.as_deref())
                .map_err(stage("ingest", None, None))?;
            pages = images.len();
            for page in &images {
                let p = Some(page.source_page);
                let regions = detect_regions(
                    page,
                    self.detector.as_ref(),
                    self.config.conf_threshold,
                    self.config.iou_threshold,
                )
                .map_err(stage("detect", p, None))?;
                let ocr = recognize(page, &regions, self.recognizer.as_ref(), self.config.crop_margin).map_err(|e| {
                    let region = match &e {
                        Error::Recognition { index, .. } => Some(*index),
                        _ => None,
                    };
                    stage("ocr", p, region)(e)
                })?;
                for (i, r) in ocr.iter().enumerate() {
                    let text = r.text.trim();
                    if text.is_empty() {
                        continue;
                    }
                    let pred = self.classifier.predict(text).map_err(stage("classify", p, Some(i)))?;
                    sections.push(Section {
                        label: pred.label,
                        probabilities: pred.probabilities,
                        text: text.to_string(),
                        boxes: vec![unletterbox(&r.region.bbox, page)],
                        page: page.source_page,
                        source: TextSource::Ocr,
                        ocr_confidence: Some(r.mean_confidence),
                    });
                }
            }
        }
        if self.config.merge_labels {
            sections = merge_adjacent(sections);
        }

        let confidences: Vec<f64> = sections.iter().filter_map(|s| s.ocr_confidence).collect();
        let mut meta = self.meta.clone();
        meta.pages = pages;
        meta.ocr_mean_confidence =
            (!confidences.is_empty()).then(|| confidences.iter().sum::<f64>() / confidences.len() as f64);
        Ok(ResumeExtraction {
            schema_version: SCHEMA_VERSION,
            document_id,
            sections,
            pipeline_meta: meta,
        })
    }
}

/// Joins consecutive same-label sections on the same page: texts are
/// joined with a space, boxes concatenated, probabilities and confidences
/// averaged. The label is kept.
pub fn merge_adjacent(sections: Vec<Section>) -> Vec<Section> {
    let mut out: Vec<(Section, usize)> = Vec::new();
    for s in sections {
        match out.last_mut() {
            Some((last, n)) if last.label == s.label && last.page == s.page && last.source == s.source => {
                let k = *n as f64;
                for c in 0..NUM_CLASSES {
                    last.probabilities[c] = (last.probabilities[c] * k + s.probabilities[c]) / (k + 1.0);
                }
                last.ocr_confidence = match (last.ocr_confidence, s.ocr_confidence) {
                    (Some(a), Some(b)) => Some((a * k + b) / (k + 1.0)),
                    (a, b) => a.or(b),
                };
                last.text.push(' ');
                last.text.push_str(&s.text);
                last.boxes.extend(s.boxes);
                *n += 1;
            }
            _ => out.push((s, 1)),
        }
    }
    out.into_iter().map(|(s, _)| s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn section(label: ClassLabel, text: &str, p: [f64; NUM_CLASSES]) -> Section {
        Section {
            label,
            probabilities: p,
            text: text.into(),
            boxes: vec![BBox::new(0.0, 0.0, 1.0, 1.0)],
            page: 0,
            source: TextSource::Ocr,
            ocr_confidence: Some(0.9),
        }
    }

    #[test]
    fn merge_joins_runs_only() {
        let a = [0.6, 0.1, 0.1, 0.1, 0.1];
        let b = [0.8, 0.05, 0.05, 0.05, 0.05];
        let c = [0.1, 0.1, 0.6, 0.1, 0.1];
        let merged = merge_adjacent(vec![
            section(ClassLabel::Education, "bsc", a),
            section(ClassLabel::Education, "msc", b),
            section(ClassLabel::Skill, "rust", c),
            section(ClassLabel::Education, "phd", a),
        ]);
        assert_eq!(merged.len(), 3);
        assert_eq!(merged[0].text, "bsc msc");
        assert_eq!(merged[0].boxes.len(), 2);
        assert!((merged[0].probabilities[0] - 0.7).abs() < 1e-12);
        assert_eq!(merged[2].text, "phd");
    }

    #[test]
    fn missing_files_fail_validation() {
        let dir = tempfile::tempdir().unwrap();
        let config = PipelineConfig::with_root(dir.path(), ModelFamily::Bert);
        let err = config.validate().unwrap_err().to_string();
        assert!(err.contains("head"), "{err}");
        let mut config = config;
        config.conf_threshold = 1.5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn schema_checks() {
        let meta = PipelineMeta {
            classes: ClassLabel::ALL.to_vec(),
            detector: "d".into(),
            recognizer: "r".into(),
            backbone: "b".into(),
            head: "h".into(),
            tokenizer: "bert".into(),
            pooling: "cls".into(),
            conf_threshold: 0.25,
            iou_threshold: 0.45,
            dpi: 150,
            seed: 0,
            pages: 1,
            ocr_mean_confidence: Some(0.9),
            warnings: vec![],
            timestamp: None,
        };
        let mut doc = ResumeExtraction {
            schema_version: SCHEMA_VERSION,
            document_id: "cv.png".into(),
            sections: vec![section(ClassLabel::Skill, "rust", [0.2; NUM_CLASSES])],
            pipeline_meta: meta,
        };
        let back = ResumeExtraction::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        doc.sections[0].probabilities = [0.5; NUM_CLASSES];
        assert!(doc.validate().is_err());
        assert!(ResumeExtraction::from_json(r#"{"schema_version": 1}"#).is_err());
    }
}
