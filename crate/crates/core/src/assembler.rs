//! Cumulative outputs: the refined predictions of scales `1..=i` laid back out
//! in capture order, paired with the ground truth.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::partitioner::Partition;
use crate::point_stream::{Label, PointStream, Tick};
use crate::update::ScalePrediction;

pub const OUTPUT_CSV_HEADER: &str = "x,y,z,t,origin_scale,pred,gt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputPoint {
    pub position: [f32; 3],
    pub t: Tick,
    pub origin_scale: usize,
    pub pred: Label,
    pub gt: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeOutput {
    pub scale: usize,
    pub class_count: usize,
    pub points: Vec<OutputPoint>,
}

impl CumulativeOutput {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn predicted(&self) -> Vec<Label> {
        self.points.iter().map(|p| p.pred).collect()
    }

    pub fn ground_truth(&self) -> Vec<Label> {
        self.points.iter().map(|p| p.gt).collect()
    }

    /// The subset of points that originate from `scale`.
    pub fn from_scale(&self, scale: usize) -> CumulativeOutput {
        CumulativeOutput {
            scale: self.scale,
            class_count: self.class_count,
            points: self
                .points
                .iter()
                .filter(|p| p.origin_scale == scale)
                .copied()
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(40 * (self.len() + 1));
        out.push_str(OUTPUT_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let [x, y, z] = p.position;
            let _ = writeln!(out, "{x},{y},{z},{},{},{},{}", p.t, p.origin_scale, p.pred, p.gt);
        }
        out
    }
}

/// Builds `Y^(s_i)` from predictions of scales `1..=i`, all at level `i`.
pub fn assemble(
    predictions: &[ScalePrediction],
    partitions: &[Partition],
    stream: &PointStream,
) -> Result<CumulativeOutput> {
    let level = predictions.len();
    assemble_with(predictions, partitions, stream, |_| level)
}

/// Concatenates each scale's own, unrefined output (scale `j` at level `j`).
pub fn assemble_unrefined(
    predictions: &[ScalePrediction],
    partitions: &[Partition],
    stream: &PointStream,
) -> Result<CumulativeOutput> {
    assemble_with(predictions, partitions, stream, |scale| scale)
}

fn assemble_with(
    predictions: &[ScalePrediction],
    partitions: &[Partition],
    stream: &PointStream,
    expected_level: impl Fn(usize) -> usize,
) -> Result<CumulativeOutput> {
    let scale = predictions.len();
    if partitions.len() < scale {
        return Err(Error::MissingScale(partitions.len() + 1));
    }
    let src = stream.points();
    let total: usize = partitions[..scale].iter().map(Partition::len).sum();
    let mut points = Vec::with_capacity(total);
    for (j, (pred, part)) in predictions.iter().zip(partitions).enumerate() {
        if pred.scale != j + 1 || part.scale != j + 1 {
            return Err(Error::MissingScale(j + 1));
        }
        let level = expected_level(pred.scale);
        if pred.level != level {
            return Err(Error::LevelMismatch {
                scale: pred.scale,
                expected: level,
                actual: pred.level,
            });
        }
        if pred.len() != part.len() {
            return Err(Error::CardinalityMismatch {
                scale: pred.scale,
                expected: part.len(),
                actual: pred.len(),
            });
        }
        if part.offset + part.len() > src.len() {
            return Err(Error::CardinalityMismatch {
                scale: part.scale,
                expected: src.len(),
                actual: part.offset + part.len(),
            });
        }
        for (r, &pred_label) in pred.labels.iter().enumerate() {
            let gt = &src[part.offset + r];
            points.push(OutputPoint {
                position: gt.position,
                t: gt.t,
                origin_scale: pred.scale,
                pred: pred_label,
                gt: gt.label,
            });
        }
    }
    Ok(CumulativeOutput {
        scale,
        class_count: stream.class_count(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitioner::{partition, PartitionSpec};
    use crate::point_stream::{LabelMap, TimedPoint};
    use std::collections::BTreeMap;

    fn setup() -> (PointStream, Vec<Partition>) {
        let pts = (0..10)
            .map(|i| TimedPoint::new(i as f32, 0.0, 0.0, (i % 3) as u16, i * 10))
            .collect();
        let s = PointStream::new(pts, LabelMap::new(["a", "b", "c"]).unwrap(), BTreeMap::new()).unwrap();
        let parts = partition(&s, &PartitionSpec::new(vec![20, 50, 90]).unwrap()).unwrap();
        (s, parts)
    }

    fn perfect(parts: &[Partition], level: usize) -> Vec<ScalePrediction> {
        parts[..level]
            .iter()
            .map(|p| ScalePrediction {
                scale: p.scale,
                level,
                positions: p.positions(),
                labels: p.points.iter().map(|q| q.label).collect(),
            })
            .collect()
    }

    #[test]
    fn first_scale_is_its_own_output() {
        let (s, parts) = setup();
        let out = assemble(&perfect(&parts, 1), &parts, &s).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.points.iter().all(|p| p.origin_scale == 1));
    }

    #[test]
    fn perfect_predictions_reproduce_ground_truth() {
        let (s, parts) = setup();
        let out = assemble(&perfect(&parts, 3), &parts, &s).unwrap();
        assert_eq!(out.predicted(), out.ground_truth());
        let ts: Vec<u32> = out.points.iter().map(|p| p.t).collect();
        assert_eq!(ts, s.points().iter().map(|p| p.t).collect::<Vec<_>>());
    }

    #[test]
    fn stale_levels_are_rejected() {
        let (s, parts) = setup();
        let mut preds = perfect(&parts, 2);
        preds[0].level = 1;
        assert!(matches!(
            assemble(&preds, &parts, &s),
            Err(Error::LevelMismatch { scale: 1, expected: 2, actual: 1 })
        ));
        preds[0].level = 1;
        preds[1].level = 2;
        assert!(assemble_unrefined(&preds, &parts, &s).is_ok());
    }

    #[test]
    fn csv_layout() {
        let (s, parts) = setup();
        let out = assemble(&perfect(&parts, 1), &parts, &s).unwrap();
        let csv = out.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("x,y,z,t,origin_scale,pred,gt"));
        assert_eq!(lines.next(), Some("0,0,0,0,1,0,0"));
    }
}
