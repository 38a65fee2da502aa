//! Segmentation accuracy and scan coverage metrics.

use serde::{Deserialize, Serialize};

use crate::assembler::CumulativeOutput;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::point_stream::{Label, PointStream};
use crate::scanner::ViewFrame;

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_labels(gt: &[Label], pred: &[Label], classes: usize) -> Result<Self> {
        if gt.len() != pred.len() {
            return Err(Error::CardinalityMismatch {
                scale: 0,
                expected: gt.len(),
                actual: pred.len(),
            });
        }
        let mut m = Self::new(classes);
        for (&g, &p) in gt.iter().zip(pred) {
            m.add(g, p)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, gt: Label, pred: Label) -> Result<()> {
        let (g, p) = (usize::from(gt), usize::from(pred));
        for (index, l) in [(0, gt), (1, pred)] {
            if usize::from(l) >= self.classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label: l,
                    class_count: self.classes,
                });
            }
        }
        self.counts[g * self.classes + p] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `None` for a class with an empty union.
    pub fn iou(&self, class: usize) -> Option<f64> {
        let tp = self.get(class, class);
        let row: u64 = (0..self.classes).map(|p| self.get(class, p)).sum();
        let col: u64 = (0..self.classes).map(|g| self.get(g, class)).sum();
        let union = row + col - tp;
        (union > 0).then(|| tp as f64 / union as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouResult {
    /// IoU per class id; `None` where the class has no points in either set.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
    pub included_classes: usize,
}

pub fn miou_from_matrix(m: &ConfusionMatrix) -> Result<MiouResult> {
    if m.total() == 0 {
        return Err(Error::EmptyOutput);
    }
    let per_class: Vec<Option<f64>> = (0..m.classes()).map(|c| m.iou(c)).collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(MiouResult {
        miou: included.iter().sum::<f64>() / included.len() as f64,
        included_classes: included.len(),
        per_class,
    })
}

/// Per-class IoU and their mean over classes with a non-empty union.
pub fn miou(output: &CumulativeOutput) -> Result<MiouResult> {
    if output.is_empty() {
        return Err(Error::EmptyOutput);
    }
    let m = ConfusionMatrix::from_labels(&output.ground_truth(), &output.predicted(), output.class_count)?;
    miou_from_matrix(&m)
}

/// `baseline - scalable`, in percentage points.
pub fn cost_of_scalability(baseline_miou: f64, scalable_final_miou: f64) -> f64 {
    (baseline_miou - scalable_final_miou) * 100.0
}

fn cell_of(view: &ViewFrame, position: [f32; 3], res: usize) -> usize {
    let (yaw, pitch) = view.angles_of(Vec3::from_f32(position));
    let bin = |angle: f64, amp: f64| {
        let u = (angle + amp) / (2.0 * amp);
        ((u * res as f64).floor() as i64).clamp(0, res as i64 - 1) as usize
    };
    bin(pitch, view.amp_y) * res + bin(yaw, view.amp_x)
}

/// Fraction of angular grid cells hit by points with timestamp `<= t`,
/// relative to the cells hit by the whole stream.
pub fn coverage(stream: &PointStream, view: &ViewFrame, t: i64, grid_resolution: usize) -> f64 {
    coverage_curve(stream, view, &[t], grid_resolution)[0]
}

/// [`coverage`] at several instants with a single pass over the stream.
pub fn coverage_curve(stream: &PointStream, view: &ViewFrame, ts: &[i64], grid_resolution: usize) -> Vec<f64> {
    let res = grid_resolution.max(1);
    // Earliest timestamp at which each cell becomes occupied.
    let mut first_hit: Vec<Option<u32>> = vec![None; res * res];
    for p in stream.points() {
        let c = cell_of(view, p.position, res);
        if first_hit[c].is_none() {
            first_hit[c] = Some(p.t);
        }
    }
    let occupied = first_hit.iter().flatten().count();
    ts.iter()
        .map(|&t| {
            if occupied == 0 {
                return 0.0;
            }
            let hit = first_hit
                .iter()
                .flatten()
                .filter(|&&ft| i64::from(ft) <= t)
                .count();
            hit as f64 / occupied as f64
        })
        .collect()
}
