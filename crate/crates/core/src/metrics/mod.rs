//! Classification and detection metrics.

mod detection;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::geometry::BBox;
pub use detection::{
    average_precision, iou_thresholds, load_detections, load_ground_truth, load_yolo_label_dir, map_eval,
    parse_detections, parse_ground_truth, parse_yolo_labels, Detection, DetectionEval, GroundTruth, GroundTruthBox,
};

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// K×K counts, rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape(format!("confusion matrix rows must all have length {k}")));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        for label in [truth, pred] {
            if label >= self.k {
                return Err(Error::LabelOutOfRange { label, classes: self.k });
            }
        }
        self.counts[truth * self.k + pred] += 1;
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.k).map(|p| self.get(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, class)).sum()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassScores>,
    pub micro: f64,
    pub macro_avg: f64,
    pub weighted: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p == r {
        p
    } else if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1_report(cm: &ConfusionMatrix) -> Result<F1Report> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let per_class: Vec<ClassScores> = (0..cm.num_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            let precision = ratio(tp, cm.predicted(c));
            let recall = ratio(tp, cm.support(c));
            ClassScores {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cm.support(c),
            }
        })
        .collect();
    let tp = cm.trace();
    let fp = total - tp;
    let fn_ = total - tp;
    let micro = harmonic(ratio(tp, tp + fp), ratio(tp, tp + fn_));
    let macro_avg = per_class.iter().map(|s| s.f1).sum::<f64>() / per_class.len() as f64;
    let weighted = per_class.iter().map(|s| s.f1 * s.support as f64).sum::<f64>() / total as f64;
    Ok(F1Report {
        per_class,
        micro,
        macro_avg,
        weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(confusion(&[], &[], 3).unwrap().total(), 0);
        assert!(matches!(confusion(&[0], &[], 2), Err(Error::LengthMismatch(1, 0))));
        assert!(matches!(confusion(&[0], &[2], 2), Err(Error::LabelOutOfRange { label: 2, .. })));
    }

    #[test]
    fn two_class_report() {
        let cm = ConfusionMatrix::from_rows(&[vec![8, 2], vec![1, 9]]).unwrap();
        let r = f1_report(&cm).unwrap();
        assert_eq!(r.micro, 0.85);
        assert!((r.per_class[0].f1 - 16.0 / 19.0).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 6.0 / 7.0).abs() < 1e-12);
        assert!((r.macro_avg - 0.849624).abs() < 1e-6);
        assert!((r.weighted - 0.849624).abs() < 1e-6);
    }

    #[test]
    fn zero_support_class() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 0]]).unwrap();
        let r = f1_report(&cm).unwrap();
        assert_eq!(r.per_class[2].f1, 0.0);
        assert_eq!(r.weighted, 1.0);
        assert!((r.macro_avg - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(f1_report(&ConfusionMatrix::zeros(3)), Err(Error::EmptyConfusion)));
    }

    proptest! {
        #[test]
        fn micro_is_accuracy_and_permutation_invariant(
            k in 1usize..6,
            cells in proptest::collection::vec(0u64..20, 36),
            rot in 0usize..6,
        ) {
            let rows: Vec<Vec<u64>> = (0..k).map(|i| cells[i * k..(i + 1) * k].to_vec()).collect();
            let cm = ConfusionMatrix::from_rows(&rows).unwrap();
            prop_assume!(cm.total() > 0);
            let r = f1_report(&cm).unwrap();
            prop_assert!((r.micro - cm.trace() as f64 / cm.total() as f64).abs() < 1e-12);
            let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
            let permuted: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| rows[perm[i]][perm[j]]).collect()).collect();
            let p = f1_report(&ConfusionMatrix::from_rows(&permuted).unwrap()).unwrap();
            prop_assert!((p.micro - r.micro).abs() < 1e-12);
            prop_assert!((p.macro_avg - r.macro_avg).abs() < 1e-12);
            prop_assert!((p.weighted - r.weighted).abs() < 1e-12);
        }
    }
}
