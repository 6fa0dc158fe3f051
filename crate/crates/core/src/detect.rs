//! Detector output decoding: confidence filtering, box conversion, greedy
//! per-class non-maximum suppression and reading order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ingest::{PageImage, CANVAS_SIZE};

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.45;

/// Raw detector output: `N` rows of `(cx, cy, w, h, score_0 .. score_{C-1})`
/// in canvas pixels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetTensor {
    num_classes: usize,
    data: Vec<f32>,
}

impl DetTensor {
    pub fn new(num_classes: usize, data: Vec<f32>) -> Result<Self> {
        if num_classes == 0 || data.len() % (4 + num_classes) != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of 4 + {num_classes}",
                data.len()
            )));
        }
        Ok(Self { num_classes, data })
    }

    pub fn from_rows(num_classes: usize, rows: &[Vec<f32>]) -> Result<Self> {
        Self::new(num_classes, rows.concat())
    }

    pub fn empty(num_classes: usize) -> Self {
        Self {
            num_classes,
            data: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.data.len() / (4 + self.num_classes)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(4 + self.num_classes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextRegion {
    pub bbox: BBox,
    pub score: f64,
    pub class_id: usize,
    pub order_index: Option<usize>,
}

/// Text-group detector port: a letterboxed page in, raw rows out.
pub trait Detector: Send + Sync {
    fn detect(&self, page: &PageImage) -> Result<DetTensor>;
}

/// Runs `detector` and applies decoding, suppression and reading order.
pub fn detect_regions(
    page: &PageImage,
    detector: &dyn Detector,
    conf_threshold: f64,
    iou_threshold: f64,
) -> Result<Vec<TextRegion>> {
    let raw = detector.detect(page)?;
    Ok(reading_order(&nms(&decode(&raw, conf_threshold), iou_threshold)))
}

/// Keeps rows whose best class score reaches `conf_threshold`, converting
/// them to clamped corner boxes. Rows that collapse to zero area after
/// clamping are dropped.
pub fn decode(tensor: &DetTensor, conf_threshold: f64) -> Vec<TextRegion> {
    let size = CANVAS_SIZE as f64;
    tensor
        .rows()
        .filter_map(|row| {
            let (class_id, score) = row[4..]
                .iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best });
            let score = score as f64;
            if !(score >= conf_threshold) {
                return None;
            }
            let [cx, cy, w, h] = [row[0], row[1], row[2], row[3]].map(f64::from);
            let bbox = BBox::from_cxcywh(cx, cy, w, h).clamp(size, size);
            (!bbox.is_degenerate()).then_some(TextRegion {
                bbox,
                score,
                class_id,
                order_index: None,
            })
        })
        .collect()
}

/// Greedy score-descending suppression within each class. A region is
/// dropped iff its IoU with an already kept region of the same class is at
/// least `iou_threshold`. Output is in descending score order; equal scores
/// keep input order.
pub fn nms(regions: &[TextRegion], iou_threshold: f64) -> Vec<TextRegion> {
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| regions[b].score.total_cmp(&regions[a].score).then(a.cmp(&b)));
    let mut kept: Vec<&TextRegion> = Vec::new();
    for i in order {
        let candidate = &regions[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == candidate.class_id && k.bbox.iou(&candidate.bbox) >= iou_threshold);
        if !suppressed {
            kept.push(candidate);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Orders regions top-to-bottom by rows, then left-to-right within a row.
/// A region joins the current row when its vertical centre lies within half
/// the smaller of its own and the row anchor's heights.
pub fn reading_order(regions: &[TextRegion]) -> Vec<TextRegion> {
    let mut sorted: Vec<TextRegion> = regions.to_vec();
    sorted.sort_by(|a, b| {
        a.bbox
            .center()
            .1
            .total_cmp(&b.bbox.center().1)
            .then(a.bbox.x1.total_cmp(&b.bbox.x1))
    });

    let mut rows: Vec<Vec<TextRegion>> = Vec::new();
    for region in sorted {
        let joins = rows.last().is_some_and(|row| {
            let anchor = &row[0].bbox;
            let dy = (region.bbox.center().1 - anchor.center().1).abs();
            dy <= 0.5 * region.bbox.height().min(anchor.height())
        });
        if joins {
            rows.last_mut().unwrap().push(region);
        } else {
            rows.push(vec![region]);
        }
    }

    let mut out = Vec::with_capacity(regions.len());
    for mut row in rows {
        row.sort_by(|a, b| a.bbox.x1.total_cmp(&b.bbox.x1));
        out.extend(row);
    }
    for (i, r) in out.iter_mut().enumerate() {
        r.order_index = Some(i);
    }
    out
}
