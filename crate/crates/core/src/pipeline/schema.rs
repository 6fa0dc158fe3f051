use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const SCHEMA_VERSION: u32 = 1;

/// How a section's text was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    Ocr,
    Mined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub label: ClassLabel,
    /// Indexed by class id (see `pipeline_meta.classes`).
    pub probabilities: [f64; NUM_CLASSES],
    pub text: String,
    /// Region boxes in original page pixels; empty for mined text without
    /// layout.
    pub boxes: Vec<BBox>,
    pub page: usize,
    pub source: TextSource,
    /// Mean recognizer confidence; absent for mined text.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ocr_confidence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineMeta {
    pub classes: Vec<ClassLabel>,
    pub detector: String,
    pub recognizer: String,
    pub backbone: String,
    pub head: String,
    pub tokenizer: String,
    pub pooling: String,
    pub conf_threshold: f64,
    pub iou_threshold: f64,
    pub dpi: u32,
    pub seed: u64,
    pub pages: usize,
    /// Mean OCR confidence over recognized sections, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ocr_mean_confidence: Option<f64>,
    pub warnings: Vec<String>,
    /// RFC 3339 run time; omitted in deterministic runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResumeExtraction {
    pub schema_version: u32,
    pub document_id: String,
    pub sections: Vec<Section>,
    pub pipeline_meta: PipelineMeta,
}

impl ResumeExtraction {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("extraction documents always serialize")
    }

    /// Parses a document and checks every structural invariant.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("invalid extraction document: {m}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema version {}", self.schema_version));
        }
        if self.document_id.is_empty() {
            return bad("empty document id".into());
        }
        if self.pipeline_meta.classes != ClassLabel::ALL {
            return bad("class list differs from the catalog".into());
        }
        for (i, s) in self.sections.iter().enumerate() {
            let sum: f64 = s.probabilities.iter().sum();
            if s.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
                return bad(format!("section {i} probabilities do not form a distribution"));
            }
            if s.text.trim().is_empty() {
                return bad(format!("section {i} has no text"));
            }
            if s.page >= self.pipeline_meta.pages.max(1) {
                return bad(format!("section {i} page {} out of range", s.page));
            }
            if s.boxes.iter().any(|b| b.is_degenerate() || b.x1 < 0.0 || b.y1 < 0.0) {
                return bad(format!("section {i} has an invalid box"));
            }
            if s.source == TextSource::Ocr && (s.boxes.is_empty() || s.ocr_confidence.is_none()) {
                return bad(format!("OCR section {i} lacks its box or confidence"));
            }
            if let Some(c) = s.ocr_confidence {
                if !(0.0..=1.0).contains(&c) {
                    return bad(format!("section {i} confidence {c}"));
                }
            }
        }
        Ok(())
    }
}
