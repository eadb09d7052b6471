//! Confusion-matrix accumulation and IoU / mIoU.
//!
//! Intersections and unions stay exact integers summed over every evaluated
//! image; division happens once, when an IoU is read out. mIoU over a set
//! of images is therefore computed from the summed matrix, never by
//! averaging per-image mIoUs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labelmap::{LabelMap, IGNORE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dimension mismatch: ground truth {gt_w}x{gt_h}, prediction {pred_w}x{pred_h}")]
    DimensionMismatch {
        gt_w: u32,
        gt_h: u32,
        pred_w: u32,
        pred_h: u32,
    },
    #[error("prediction contains the ignore value at ({x},{y})")]
    IgnoreInPrediction { x: u32, y: u32 },
    #[error("{role} value {value} at ({x},{y}) is not a class index below {num_classes}")]
    ClassOutOfRange {
        role: &'static str,
        x: u32,
        y: u32,
        value: u8,
        num_classes: usize,
    },
    #[error("class {class_id} out of range for {num_classes} classes")]
    InvalidClass { class_id: usize, num_classes: usize },
    #[error("cannot merge confusion matrices with {0} and {1} classes")]
    ClassCountMismatch(usize, usize),
    #[error("empty evaluation: no class has a non-zero union")]
    EmptyEvaluation,
}

/// `counts[g * K + p]` is the number of pixels with ground truth `g`
/// predicted as `p`. Ignore-labelled ground-truth pixels are never counted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// The zero matrix.
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Builds a matrix from rows indexed by ground-truth class.
    pub fn from_rows(rows: &[Vec<u64>]) -> Option<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return None;
        }
        Some(Self {
            num_classes: k,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.num_classes.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Adds one ground-truth / prediction pair.
    ///
    /// The matrix is left untouched when an error is returned.
    pub fn accumulate(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<(), MetricsError> {
        if !gt.same_dimensions(pred) {
            return Err(MetricsError::DimensionMismatch {
                gt_w: gt.width(),
                gt_h: gt.height(),
                pred_w: pred.width(),
                pred_h: pred.height(),
            });
        }
        let k = self.num_classes;
        let width = gt.width() as usize;
        let coord = |i: usize| ((i % width) as u32, (i / width) as u32);

        // Validate before touching counts.
        for (i, (&g, &p)) in gt.values().iter().zip(pred.values()).enumerate() {
            if p == IGNORE {
                let (x, y) = coord(i);
                return Err(MetricsError::IgnoreInPrediction { x, y });
            }
            for (role, v) in [("prediction", p), ("ground truth", g)] {
                if v as usize >= k && !(role == "ground truth" && v == IGNORE) {
                    let (x, y) = coord(i);
                    return Err(MetricsError::ClassOutOfRange {
                        role,
                        x,
                        y,
                        value: v,
                        num_classes: k,
                    });
                }
            }
        }
        for (&g, &p) in gt.values().iter().zip(pred.values()) {
            if g != IGNORE {
                self.counts[g as usize * k + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Element-wise sum into `self`.
    pub fn merge_from(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.num_classes != other.num_classes {
            return Err(MetricsError::ClassCountMismatch(
                self.num_classes,
                other.num_classes,
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix, MetricsError> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn class_iou(&self, class_id: usize) -> Result<ClassIoU, MetricsError> {
        let k = self.num_classes;
        if class_id >= k {
            return Err(MetricsError::InvalidClass {
                class_id,
                num_classes: k,
            });
        }
        let tp = self.get(class_id, class_id);
        let row: u64 = (0..k).map(|p| self.get(class_id, p)).sum();
        let col: u64 = (0..k).map(|g| self.get(g, class_id)).sum();
        Ok(ClassIoU {
            class_id,
            intersection: tp,
            union: row + col - tp,
        })
    }

    /// Mean IoU over classes with a non-zero union.
    pub fn miou(&self) -> Result<MiouResult, MetricsError> {
        let per_class = (0..self.num_classes)
            .map(|c| self.class_iou(c))
            .collect::<Result<Vec<_>, _>>()?;
        MiouResult::from_per_class(per_class)
    }
}

/// Exact intersection and union for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "ClassIouRepr", try_from = "ClassIouRepr")]
pub struct ClassIoU {
    pub class_id: usize,
    pub intersection: u64,
    pub union: u64,
}

impl ClassIoU {
    /// `None` when the class appears in neither ground truth nor prediction.
    pub fn iou(&self) -> Option<f64> {
        (self.union > 0).then(|| self.intersection as f64 / self.union as f64)
    }

    pub fn is_defined(&self) -> bool {
        self.union > 0
    }
}

#[derive(Serialize, Deserialize)]
struct ClassIouRepr {
    class_id: usize,
    intersection: u64,
    union: u64,
    #[serde(default)]
    iou: Option<String>,
}

impl From<ClassIoU> for ClassIouRepr {
    fn from(c: ClassIoU) -> Self {
        Self {
            class_id: c.class_id,
            intersection: c.intersection,
            union: c.union,
            iou: c.iou().map(format_decimal),
        }
    }
}

impl TryFrom<ClassIouRepr> for ClassIoU {
    type Error = String;

    fn try_from(r: ClassIouRepr) -> Result<Self, Self::Error> {
        if r.intersection > r.union {
            return Err(format!(
                "class {}: intersection {} exceeds union {}",
                r.class_id, r.intersection, r.union
            ));
        }
        Ok(Self {
            class_id: r.class_id,
            intersection: r.intersection,
            union: r.union,
        })
    }
}

/// Four-decimal rendering used wherever a ratio is shown to people.
pub fn format_decimal(v: f64) -> String {
    format!("{v:.4}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouResult {
    pub per_class: Vec<ClassIoU>,
    pub miou: f64,
    pub num_defined_classes: usize,
}

impl MiouResult {
    pub fn from_per_class(per_class: Vec<ClassIoU>) -> Result<Self, MetricsError> {
        let defined: Vec<f64> = per_class.iter().filter_map(ClassIoU::iou).collect();
        if defined.is_empty() {
            return Err(MetricsError::EmptyEvaluation);
        }
        let miou = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(Self {
            num_defined_classes: defined.len(),
            per_class,
            miou,
        })
    }
}
