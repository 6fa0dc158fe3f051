//! Region cropping and greedy (best-path) CTC decoding of recognizer output.

use std::collections::HashSet;
use std::path::Path;

use image::{imageops, RgbImage};
use serde::{Deserialize, Serialize};

use crate::detect::TextRegion;
use crate::error::{Error, Result};
use crate::ingest::PageImage;

pub const BLANK_INDEX: usize = 0;
pub const DEFAULT_CROP_MARGIN: u32 = 2;

/// CTC alphabet. Index 0 is the blank; symbol `i` has index `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Charset {
    symbols: Vec<String>,
}

impl Charset {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &symbols {
            if s.is_empty() {
                return Err(Error::Vocab("empty charset symbol".into()));
            }
            if !seen.insert(s) {
                return Err(Error::Vocab(format!("duplicate charset symbol {s:?}")));
            }
        }
        Ok(Self { symbols })
    }

    pub fn from_chars(chars: &str) -> Result<Self> {
        Self::new(chars.chars().map(String::from).collect())
    }

    /// One symbol per line; lines are not trimmed so a lone space is a
    /// valid symbol.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            content
                .split('\n')
                .map(|l| l.strip_suffix('\r').unwrap_or(l))
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn to_file_contents(&self) -> String {
        self.symbols.iter().map(|s| format!("{s}\n")).collect()
    }

    /// Number of symbols, excluding the blank.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        index.checked_sub(1).and_then(|i| self.symbols.get(i)).map(String::as_str)
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol).map(|i| i + 1)
    }
}

/// Recognizer output: `T` timesteps of `S + 1` logits, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitSeq {
    classes: usize,
    data: Vec<f32>,
}

impl LogitSeq {
    pub fn new(classes: usize, data: Vec<f32>) -> Result<Self> {
        if classes == 0 || data.is_empty() || data.len() % classes != 0 {
            return Err(Error::Shape(format!(
                "{} logits do not form T >= 1 rows of {classes}",
                data.len()
            )));
        }
        Ok(Self { classes, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Shape("ragged logit rows".into()));
        }
        Self::new(classes, rows.concat())
    }

    pub fn timesteps(&self) -> usize {
        self.data.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.classes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub text: String,
    pub mean_confidence: f64,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn softmax_at(row: &[f32], index: usize) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let denom: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
    (row[index] as f64 - max).exp() / denom
}

/// Best-path decoding: per-step argmax (ties to the lowest index), collapse
/// consecutive repeats, drop blanks. Confidence is the mean softmax
/// probability at the steps that emitted a character; 0 when nothing was
/// emitted.
pub fn ctc_greedy_decode(logits: &LogitSeq, charset: &Charset) -> Result<Decoded> {
    if logits.classes() != charset.num_classes() {
        return Err(Error::Shape(format!(
            "recognizer emits {} classes, charset has {} + blank",
            logits.classes(),
            charset.len()
        )));
    }
    let mut text = String::new();
    let mut confidences = Vec::new();
    let mut previous = None;
    for row in logits.rows() {
        let best = argmax(row);
        if best != BLANK_INDEX && previous != Some(best) {
            text.push_str(charset.symbol(best).expect("index within charset"));
            confidences.push(softmax_at(row, best));
        }
        previous = Some(best);
    }
    let mean_confidence = if confidences.is_empty() {
        0.0
    } else {
        confidences.iter().sum::<f64>() / confidences.len() as f64
    };
    Ok(Decoded {
        text,
        mean_confidence,
    })
}

/// Crops `region` (expanded by `margin` pixels) from the canvas, clamped to
/// the canvas bounds.
pub fn crop(page: &PageImage, region: &TextRegion, margin: u32) -> Result<RgbImage> {
    let b = region.bbox;
    if b.is_degenerate() {
        return Err(Error::DegenerateRegion(b.to_array()));
    }
    let (w, h) = page.pixels.dimensions();
    let m = margin as f64;
    let x1 = (b.x1.floor() - m).clamp(0.0, w as f64) as u32;
    let y1 = (b.y1.floor() - m).clamp(0.0, h as f64) as u32;
    let x2 = (b.x2.ceil() + m).clamp(0.0, w as f64) as u32;
    let y2 = (b.y2.ceil() + m).clamp(0.0, h as f64) as u32;
    if x2 <= x1 || y2 <= y1 {
        return Err(Error::DegenerateRegion(b.to_array()));
    }
    Ok(imageops::crop_imm(&page.pixels, x1, y1, x2 - x1, y2 - y1).to_image())
}

/// Text recognizer port: one cropped region in, per-timestep logits out.
/// The port owns any model-specific preprocessing (height normalization and
/// the like).
pub trait Recognizer: Send + Sync {
    fn charset(&self) -> &Charset;
    fn recognize(&self, crop: &RgbImage) -> Result<LogitSeq>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcrResult {
    pub region: TextRegion,
    pub text: String,
    pub mean_confidence: f64,
}

/// Reads every region in reading order (`order_index`, unordered regions
/// last). Regions that decode to nothing are kept with empty text. Errors
/// name the region's position in that order.
pub fn recognize(
    page: &PageImage,
    regions: &[TextRegion],
    recognizer: &dyn Recognizer,
    margin: u32,
) -> Result<Vec<OcrResult>> {
    let mut ordered: Vec<&TextRegion> = regions.iter().collect();
    ordered.sort_by_key(|r| r.order_index.unwrap_or(usize::MAX));
    ordered
        .into_iter()
        .enumerate()
        .map(|(index, region)| {
            let wrap = |e: Error| Error::Recognition {
                index,
                message: e.to_string(),
            };
            let image = crop(page, region, margin).map_err(wrap)?;
            let logits = recognizer.recognize(&image).map_err(wrap)?;
            let decoded = ctc_greedy_decode(&logits, recognizer.charset()).map_err(wrap)?;
            Ok(OcrResult {
                region: region.clone(),
                text: decoded.text,
                mean_confidence: decoded.mean_confidence,
            })
        })
        .collect()
}
