//! Per-scale semantic predictors.
//!
//! A predictor labels one partition and hands an opaque [`ScaleContext`] to
//! the next scale. Two reference implementations stand in for a learned
//! backbone: a noisy oracle that corrupts ground truth at a per-scale rate,
//! and a nearest-neighbor classifier over the previous scales' labeled cloud.

use std::any::Any;
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partitioner::Partition;
use crate::point_stream::{Label, PointStream};
use crate::update::{majority_vote, KdTree};

/// Side information passed from scale `i` to scale `i + 1`.
#[derive(Clone)]
pub struct ScaleContext {
    payload: Arc<dyn Any + Send + Sync>,
}

impl ScaleContext {
    pub fn new<T: Any + Send + Sync>(payload: T) -> Self {
        Self {
            payload: Arc::new(payload),
        }
    }

    pub fn downcast_ref<T: Any>(&self) -> Option<&T> {
        self.payload.downcast_ref()
    }
}

impl fmt::Debug for ScaleContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScaleContext").finish_non_exhaustive()
    }
}

/// Cumulative labeled cloud through some scale; the context payload of the
/// reference predictors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub positions: Vec<[f32; 3]>,
    pub labels: Vec<Label>,
}

impl LabeledCloud {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn extended(prev: Option<&LabeledCloud>, partition: &Partition, labels: &[Label]) -> Self {
        let mut cloud = prev.cloned().unwrap_or_default();
        cloud.positions.extend(partition.points.iter().map(|p| p.position));
        cloud.labels.extend_from_slice(labels);
        cloud
    }
}

pub trait ScalePredictor: Send + Sync {
    /// Labels for every point of `partition`, in partition order, and the
    /// context for the next scale.
    fn predict(
        &self,
        partition: &Partition,
        ctx: Option<&ScaleContext>,
    ) -> Result<(Vec<Label>, ScaleContext)>;

    /// Whether the labels depend on the incoming context.
    fn uses_context(&self) -> bool;
}

/// Keeps the true label with probability `1 - p_i`, otherwise picks one of
/// the other `C - 1` classes uniformly.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    error_rates: Vec<f64>,
    class_count: usize,
    seed: u64,
}

impl NoisyOracle {
    pub fn new(error_rates: Vec<f64>, class_count: usize, seed: u64) -> Result<Self> {
        validate_rates(&error_rates)?;
        if class_count == 0 {
            return Err(Error::Config("class count must be positive".into()));
        }
        Ok(Self {
            error_rates,
            class_count,
            seed,
        })
    }

    pub fn error_rate(&self, scale: usize) -> Result<f64> {
        scale
            .checked_sub(1)
            .and_then(|i| self.error_rates.get(i))
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "no error rate configured for scale {scale} ({} given)",
                    self.error_rates.len()
                ))
            })
    }
}

impl ScalePredictor for NoisyOracle {
    fn predict(
        &self,
        partition: &Partition,
        ctx: Option<&ScaleContext>,
    ) -> Result<(Vec<Label>, ScaleContext)> {
        let p = self.error_rate(partition.scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(partition.scale as u64);
        let others = self.class_count as u32 - 1;
        let labels: Vec<Label> = partition
            .points
            .iter()
            .map(|pt| {
                let flip = rng.random::<f64>() < p;
                if flip && others > 0 {
                    let wrong = rng.random_range(0..others) as Label;
                    if wrong >= pt.label {
                        wrong + 1
                    } else {
                        wrong
                    }
                } else {
                    pt.label
                }
            })
            .collect();
        let prev = ctx.and_then(|c| c.downcast_ref::<LabeledCloud>());
        let next = LabeledCloud::extended(prev, partition, &labels);
        Ok((labels, ScaleContext::new(next)))
    }

    fn uses_context(&self) -> bool {
        false
    }
}

/// Majority label of the `k` nearest points in the incoming context cloud;
/// the first scale votes over a labeled seed cloud instead.
#[derive(Debug, Clone)]
pub struct SeededKnn {
    k: usize,
    seed_cloud: Arc<LabeledCloud>,
}

impl SeededKnn {
    pub fn new(k: usize, seed_cloud: LabeledCloud) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("k_cls must be at least 1".into()));
        }
        Ok(Self {
            k,
            seed_cloud: Arc::new(seed_cloud),
        })
    }
}

impl ScalePredictor for SeededKnn {
    fn predict(
        &self,
        partition: &Partition,
        ctx: Option<&ScaleContext>,
    ) -> Result<(Vec<Label>, ScaleContext)> {
        let prev = ctx.and_then(|c| c.downcast_ref::<LabeledCloud>());
        let reference = prev.unwrap_or(&self.seed_cloud);
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let tree = KdTree::build(&reference.positions);
        let labels: Vec<Label> = partition
            .points
            .iter()
            .map(|pt| {
                majority_vote(tree.knn(pt.position, self.k).into_iter().map(|i| reference.labels[i]))
                    .expect("reference is non-empty")
            })
            .collect();
        let next = LabeledCloud::extended(prev, partition, &labels);
        Ok((labels, ScaleContext::new(next)))
    }

    fn uses_context(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorVariant {
    #[default]
    NoisyOracle,
    SeededKnn,
}

impl std::str::FromStr for PredictorVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy-oracle" => Ok(Self::NoisyOracle),
            "seeded-knn" => Ok(Self::SeededKnn),
            other => Err(Error::Config(format!("unknown predictor {other:?}"))),
        }
    }
}

pub const DEFAULT_ERROR_RATES: [f64; 5] = [0.40, 0.30, 0.20, 0.12, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub variant: PredictorVariant,
    /// Per-scale corruption probabilities (noisy oracle).
    pub error_rates: Vec<f64>,
    /// Neighbor count (seeded knn).
    pub k_cls: usize,
    /// Size of the ground-truth seed cloud sampled from the stream (seeded knn).
    pub seed_points: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            variant: PredictorVariant::NoisyOracle,
            error_rates: DEFAULT_ERROR_RATES.to_vec(),
            k_cls: 5,
            seed_points: 256,
            seed: 0,
        }
    }
}

fn validate_rates(rates: &[f64]) -> Result<()> {
    if rates.is_empty() {
        return Err(Error::Config("at least one error rate is required".into()));
    }
    if let Some(p) = rates.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("error rate {p} is not a probability")));
    }
    Ok(())
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match self.variant {
            PredictorVariant::NoisyOracle => {
                if let Err(e) = validate_rates(&self.error_rates) {
                    problems.push(e.to_string());
                }
            }
            PredictorVariant::SeededKnn => {
                if self.k_cls < 1 {
                    problems.push("k_cls must be at least 1".to_string());
                }
                if self.seed_points < 1 {
                    problems.push("seed_points must be at least 1".to_string());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Instantiates the configured predictor for `stream`.
    pub fn build(&self, stream: &PointStream) -> Result<Arc<dyn ScalePredictor>> {
        self.validate()?;
        Ok(match self.variant {
            PredictorVariant::NoisyOracle => Arc::new(NoisyOracle::new(
                self.error_rates.clone(),
                stream.class_count(),
                self.seed,
            )?),
            PredictorVariant::SeededKnn => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let n = self.seed_points.min(stream.len());
                let mut picks = index::sample(&mut rng, stream.len(), n).into_vec();
                picks.sort_unstable();
                let pts = stream.points();
                let cloud = LabeledCloud {
                    positions: picks.iter().map(|&i| pts[i].position).collect(),
                    labels: picks.iter().map(|&i| pts[i].label).collect(),
                };
                Arc::new(SeededKnn::new(self.k_cls, cloud)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_stream::TimedPoint;

    fn partition_of(n: usize, scale: usize, classes: u16) -> Partition {
        Partition {
            scale,
            lower: -1,
            upper: n as u32,
            offset: 0,
            points: (0..n)
                .map(|i| TimedPoint::new(i as f32, 0.0, 0.0, (i % classes as usize) as u16, i as u32))
                .collect(),
        }
    }

    #[test]
    fn zero_error_rate_is_ground_truth() {
        let part = partition_of(500, 1, 11);
        let oracle = NoisyOracle::new(vec![0.0], 11, 1).unwrap();
        let (labels, _) = oracle.predict(&part, None).unwrap();
        assert!(labels.iter().zip(&part.points).all(|(l, p)| *l == p.label));
    }

    #[test]
    fn unit_error_rate_never_matches() {
        let part = partition_of(500, 2, 11);
        let oracle = NoisyOracle::new(vec![0.0, 1.0], 11, 1).unwrap();
        let (labels, _) = oracle.predict(&part, None).unwrap();
        assert!(labels.iter().zip(&part.points).all(|(l, p)| *l != p.label && *l < 11));
    }

    #[test]
    fn noisy_oracle_is_deterministic_per_seed() {
        let part = partition_of(300, 1, 11);
        let a = NoisyOracle::new(vec![0.5], 11, 7).unwrap().predict(&part, None).unwrap().0;
        let b = NoisyOracle::new(vec![0.5], 11, 7).unwrap().predict(&part, None).unwrap().0;
        let c = NoisyOracle::new(vec![0.5], 11, 8).unwrap().predict(&part, None).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn missing_rate_is_a_config_error() {
        let part = partition_of(10, 3, 11);
        let oracle = NoisyOracle::new(vec![0.1, 0.1], 11, 0).unwrap();
        assert!(matches!(oracle.predict(&part, None), Err(Error::Config(_))));
        assert!(NoisyOracle::new(vec![1.5], 11, 0).is_err());
    }

    #[test]
    fn context_accumulates_the_labeled_cloud() {
        let oracle = NoisyOracle::new(vec![0.0, 0.0], 11, 0).unwrap();
        let (_, c1) = oracle.predict(&partition_of(4, 1, 11), None).unwrap();
        let (_, c2) = oracle.predict(&partition_of(3, 2, 11), Some(&c1)).unwrap();
        assert_eq!(c2.downcast_ref::<LabeledCloud>().unwrap().len(), 7);
    }

    #[test]
    fn seeded_knn_uses_seed_then_context() {
        let seed = LabeledCloud {
            positions: vec![[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]],
            labels: vec![1, 2],
        };
        let knn = SeededKnn::new(1, seed).unwrap();
        let part = partition_of(3, 1, 11);
        let (labels, ctx) = knn.predict(&part, None).unwrap();
        assert_eq!(labels, vec![1, 1, 1]);
        let mut next = partition_of(2, 2, 11);
        next.points[1].position = [2.2, 0.0, 0.0];
        let (labels2, _) = knn.predict(&next, Some(&ctx)).unwrap();
        assert_eq!(labels2, vec![1, 1]);
    }

    #[test]
    fn seeded_knn_with_empty_reference_errors() {
        let knn = SeededKnn::new(3, LabeledCloud::default()).unwrap();
        assert!(matches!(
            knn.predict(&partition_of(2, 1, 11), None),
            Err(Error::EmptyReference)
        ));
    }

    #[test]
    fn config_validation() {
        let cfg = PredictorConfig {
            error_rates: vec![0.2, -0.1],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = PredictorConfig {
            variant: PredictorVariant::SeededKnn,
            k_cls: 0,
            ..Default::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("k_cls"));
        assert_eq!("seeded-knn".parse::<PredictorVariant>().unwrap(), PredictorVariant::SeededKnn);
    }
}
