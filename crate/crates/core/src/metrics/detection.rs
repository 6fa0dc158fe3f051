use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ingest::CANVAS_SIZE;

/// A scored predicted box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
}

/// Ground truth for a set of images. Images may carry no boxes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub images: BTreeSet<String>,
    pub boxes: Vec<GroundTruthBox>,
}

impl GroundTruth {
    pub fn from_boxes(boxes: Vec<GroundTruthBox>) -> Self {
        Self {
            images: boxes.iter().map(|b| b.image_id.clone()).collect(),
            boxes,
        }
    }
}

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// All-points interpolated average precision. Predictions are visited in
/// descending score order (stable for ties); each takes the unmatched
/// ground truth of the same image and class with the highest IoU, if that
/// IoU reaches `iou_threshold`. Returns 0 when there is no ground truth.
pub fn average_precision(preds: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));

    let mut by_image: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_image.entry((g.image_id.as_str(), g.class_id)).or_default().push(i);
    }
    let mut used = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(order.len());
    for &pi in &order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for &gi in by_image.get(&(p.image_id.as_str(), p.class_id)).into_iter().flatten() {
            if used[gi] {
                continue;
            }
            let iou = p.bbox.iou(&gts[gi].bbox);
            if iou >= iou_threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            used[gi] = true;
        }
        hits.push(best.is_some());
    }
    area_under_envelope(&hits, gts.len())
}

fn area_under_envelope(hits: &[bool], num_gt: usize) -> f64 {
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.into_iter().zip(precision) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionEval {
    pub thresholds: Vec<f64>,
    /// `per_class[c][t]`: AP of class `c` at `thresholds[t]`; `None` for
    /// classes without ground truth.
    pub per_class: Vec<Option<Vec<f64>>>,
    pub map50: f64,
    pub map50_95: f64,
}

/// AP per class and IoU threshold, averaged over classes that have ground
/// truth. Predictions for images absent from `gt` are an error.
pub fn map_eval(preds: &[Detection], gt: &GroundTruth) -> Result<DetectionEval> {
    if let Some(p) = preds.iter().find(|p| !gt.images.contains(&p.image_id)) {
        return Err(Error::UnknownImage(p.image_id.clone()));
    }
    let thresholds = iou_thresholds();
    let num_classes = preds
        .iter()
        .map(|p| p.class_id + 1)
        .chain(gt.boxes.iter().map(|g| g.class_id + 1))
        .max()
        .unwrap_or(0);
    let per_class: Vec<Option<Vec<f64>>> = (0..num_classes)
        .map(|c| {
            let class_gts: Vec<GroundTruthBox> = gt.boxes.iter().filter(|g| g.class_id == c).cloned().collect();
            if class_gts.is_empty() {
                return None;
            }
            let class_preds: Vec<Detection> = preds.iter().filter(|p| p.class_id == c).cloned().collect();
            Some(
                thresholds
                    .iter()
                    .map(|&t| average_precision(&class_preds, &class_gts, t))
                    .collect(),
            )
        })
        .collect();
    let evaluated: Vec<&Vec<f64>> = per_class.iter().flatten().collect();
    let mean = |f: &dyn Fn(&Vec<f64>) -> f64| {
        if evaluated.is_empty() {
            0.0
        } else {
            evaluated.iter().map(|v| f(v)).sum::<f64>() / evaluated.len() as f64
        }
    };
    let map50 = mean(&|v| v[0]);
    let map50_95 = mean(&|v| v.iter().sum::<f64>() / v.len() as f64);
    Ok(DetectionEval {
        thresholds,
        per_class,
        map50,
        map50_95,
    })
}

fn data_lines(reader: impl BufRead) -> impl Iterator<Item = Result<(usize, Vec<String>)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })),
        Ok(l) => {
            let l = l.trim();
            if l.is_empty() || l.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, l.split_whitespace().map(str::to_string).collect())))
            }
        }
    })
}

fn field<T: std::str::FromStr>(fields: &[String], idx: usize, line: usize, name: &str) -> Result<T> {
    fields[idx].parse().map_err(|_| Error::MalformedLine {
        line,
        message: format!("bad {name} {:?}", fields[idx]),
    })
}

fn parse_box(fields: &[String], start: usize, line: usize) -> Result<BBox> {
    let c: Vec<f64> = (start..start + 4)
        .map(|i| field(fields, i, line, "coordinate"))
        .collect::<Result<_>>()?;
    Ok(BBox::new(c[0], c[1], c[2], c[3]))
}

/// Reads `image_id class score x1 y1 x2 y2` lines.
pub fn parse_detections(reader: impl BufRead) -> Result<Vec<Detection>> {
    data_lines(reader)
        .map(|item| {
            let (line, f) = item?;
            if f.len() != 7 {
                return Err(Error::MalformedLine {
                    line,
                    message: format!("expected 7 fields, got {}", f.len()),
                });
            }
            Ok(Detection {
                image_id: f[0].clone(),
                class_id: field(&f, 1, line, "class")?,
                score: field(&f, 2, line, "score")?,
                bbox: parse_box(&f, 3, line)?,
            })
        })
        .collect()
}

/// Reads `image_id class x1 y1 x2 y2` lines; a bare `image_id` line declares
/// an image without boxes.
pub fn parse_ground_truth(reader: impl BufRead) -> Result<GroundTruth> {
    let mut gt = GroundTruth::default();
    for item in data_lines(reader) {
        let (line, f) = item?;
        gt.images.insert(f[0].clone());
        match f.len() {
            1 => {}
            6 => gt.boxes.push(GroundTruthBox {
                image_id: f[0].clone(),
                class_id: field(&f, 1, line, "class")?,
                bbox: parse_box(&f, 2, line)?,
            }),
            n => {
                return Err(Error::MalformedLine {
                    line,
                    message: format!("expected 1 or 6 fields, got {n}"),
                })
            }
        }
    }
    Ok(gt)
}

/// Reads one image's label file in normalized centre format,
/// `class cx cy w h` with coordinates in [0, 1] of the 640×640 canvas.
pub fn parse_yolo_labels(reader: impl BufRead, image_id: &str) -> Result<Vec<GroundTruthBox>> {
    let size = CANVAS_SIZE as f64;
    data_lines(reader)
        .map(|item| {
            let (line, f) = item?;
            if f.len() != 5 {
                return Err(Error::MalformedLine {
                    line,
                    message: format!("{image_id}: expected 5 fields, got {}", f.len()),
                });
            }
            let v: Vec<f64> = (1..5).map(|i| field(&f, i, line, "coordinate")).collect::<Result<_>>()?;
            if v.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::MalformedLine {
                    line,
                    message: format!("{image_id}: coordinates must be normalized to [0, 1]"),
                });
            }
            Ok(GroundTruthBox {
                image_id: image_id.to_string(),
                class_id: field(&f, 0, line, "class")?,
                bbox: BBox::from_cxcywh(v[0] * size, v[1] * size, v[2] * size, v[3] * size),
            })
        })
        .collect()
}

/// Loads every `*.txt` label file in `dir`; the file stem is the image id
/// and an empty file declares an image without boxes.
pub fn load_yolo_label_dir(dir: impl AsRef<Path>) -> Result<GroundTruth> {
    let dir = dir.as_ref();
    let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut gt = GroundTruth::default();
    for path in files {
        let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        gt.boxes.extend(parse_yolo_labels(open(&path)?, &id)?);
        gt.images.insert(id);
    }
    Ok(gt)
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    parse_detections(open(path.as_ref())?)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    parse_ground_truth(open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(img: &str, score: f64, b: [f64; 4]) -> Detection {
        Detection {
            image_id: img.into(),
            class_id: 0,
            score,
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
        }
    }

    fn gt(img: &str, b: [f64; 4]) -> GroundTruthBox {
        GroundTruthBox {
            image_id: img.into(),
            class_id: 0,
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
        }
    }

    #[test]
    fn perfect_and_empty() {
        let gts = vec![gt("a", [0.0, 0.0, 10.0, 10.0]), gt("a", [20.0, 20.0, 30.0, 40.0])];
        let preds: Vec<Detection> = gts.iter().map(|g| det("a", 1.0, g.bbox.to_array())).collect();
        assert_eq!(average_precision(&preds, &gts, 0.5), 1.0);
        assert_eq!(average_precision(&[], &gts, 0.5), 0.0);
        assert_eq!(average_precision(&preds, &[], 0.5), 0.0);
    }

    #[test]
    fn interleaved_false_positive() {
        // TP, FP, TP over two ground truths: PR points (0.5,1), (0.5,0.5), (1,2/3).
        let gts = vec![gt("a", [0.0, 0.0, 10.0, 10.0]), gt("a", [50.0, 50.0, 60.0, 60.0])];
        let preds = vec![
            det("a", 0.9, [0.0, 0.0, 10.0, 10.0]),
            det("a", 0.8, [100.0, 100.0, 110.0, 110.0]),
            det("a", 0.7, [50.0, 50.0, 60.0, 60.0]),
        ];
        let ap = average_precision(&preds, &gts, 0.5);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_prediction_is_false_positive() {
        let gts = vec![gt("a", [0.0, 0.0, 10.0, 10.0])];
        let preds = vec![det("a", 0.9, [0.0, 0.0, 10.0, 10.0]), det("a", 0.8, [0.0, 0.0, 10.0, 10.0])];
        assert_eq!(average_precision(&preds, &gts, 0.5), 1.0);
        let preds = vec![det("a", 0.8, [0.0, 0.0, 10.0, 10.0]), det("a", 0.9, [0.0, 0.0, 10.0, 9.0])];
        assert_eq!(average_precision(&preds, &gts, 0.95), 0.5);
    }

    #[test]
    fn map_over_classes_and_thresholds() {
        let mut boxes = vec![gt("a", [0.0, 0.0, 10.0, 10.0])];
        boxes.push(GroundTruthBox {
            class_id: 2,
            ..gt("b", [0.0, 0.0, 10.0, 10.0])
        });
        let g = GroundTruth::from_boxes(boxes.clone());
        let preds: Vec<Detection> = boxes
            .iter()
            .map(|b| Detection {
                image_id: b.image_id.clone(),
                class_id: b.class_id,
                score: 1.0,
                bbox: b.bbox,
            })
            .collect();
        let e = map_eval(&preds, &g).unwrap();
        assert_eq!((e.map50, e.map50_95), (1.0, 1.0));
        assert!(e.per_class[1].is_none());
        assert_eq!(map_eval(&[], &g).unwrap().map50_95, 0.0);

        // IoU 0.8 counts at 0.50..0.80 only: 7 of 10 thresholds.
        let shifted = vec![det("a", 1.0, [0.0, 0.0, 10.0, 8.0])];
        let g = GroundTruth::from_boxes(vec![gt("a", [0.0, 0.0, 10.0, 10.0])]);
        let e = map_eval(&shifted, &g).unwrap();
        assert_eq!(e.map50, 1.0);
        assert!((e.map50_95 - 0.7).abs() < 1e-12);

        assert!(matches!(map_eval(&[det("zz", 1.0, [0.0; 4])], &g), Err(Error::UnknownImage(_))));
    }

    #[test]
    fn file_formats() {
        let preds = parse_detections("# id cls score box\nimg1 0 0.9 1 2 3 4\n\nimg2 3 0.5 0 0 5 5\n".as_bytes()).unwrap();
        assert_eq!(preds.len(), 2);
        assert_eq!(preds[1].class_id, 3);
        assert!(parse_detections("img1 0 0.9 1 2 3\n".as_bytes()).is_err());
        assert!(matches!(
            parse_detections("img1 x 0.9 1 2 3 4\n".as_bytes()),
            Err(Error::MalformedLine { line: 1, .. })
        ));
        let y = parse_yolo_labels("0 0.5 0.5 0.25 0.125\n".as_bytes(), "p1").unwrap();
        assert_eq!(y[0].bbox, BBox::new(240.0, 280.0, 400.0, 360.0));
        assert!(parse_yolo_labels("0 0.5 0.5 1.5 0.1\n".as_bytes(), "p1").is_err());

        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "0 0.5 0.5 0.5 0.5\n").unwrap();
        std::fs::write(dir.path().join("b.txt"), "").unwrap();
        let g = load_yolo_label_dir(dir.path()).unwrap();
        assert_eq!(g.images.len(), 2);
        assert_eq!(g.boxes.len(), 1);

        let g = parse_ground_truth("img1 0 1 2 3 4\nimg9\n".as_bytes()).unwrap();
        assert_eq!(g.images.len(), 2);
        assert_eq!(g.boxes.len(), 1);
    }
}
