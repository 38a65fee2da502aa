//! Refinement of lower-scale predictions by the next scale's labels.
//!
//! Each point of scale `i` takes the majority label among its `K` nearest
//! neighbors in scale `i + 1`. When scale `j` arrives, the cascade refines
//! `j - 1` with `j`, then `j - 2` with the freshly refined `j - 1`, and so on
//! down to scale 1, so every lower scale ends up at refinement level `j`.

pub mod knn;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point_stream::Label;

pub use knn::KdTree;

/// Labels of one scale's points, refined with every scale up to `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePrediction {
    pub scale: usize,
    pub level: usize,
    pub positions: Vec<[f32; 3]>,
    pub labels: Vec<Label>,
}

impl ScalePrediction {
    /// A fresh prediction of scale `scale`, at its own level.
    pub fn new(scale: usize, positions: Vec<[f32; 3]>, labels: Vec<Label>) -> Result<Self> {
        if positions.len() != labels.len() {
            return Err(Error::CardinalityMismatch {
                scale,
                expected: positions.len(),
                actual: labels.len(),
            });
        }
        Ok(Self {
            scale,
            level: scale,
            positions,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateConfig {
    /// Neighbors consulted per vote.
    pub k: usize,
    pub metric: Metric,
}

pub const DEFAULT_UPDATE_K: usize = 5;

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_UPDATE_K,
            metric: Metric::Euclidean,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("update k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Majority label among `neighbors` (closest first). A tie between the top
/// classes goes to the one held by the nearest neighbor.
pub fn majority_vote(neighbors: impl IntoIterator<Item = Label>) -> Option<Label> {
    let labels: Vec<Label> = neighbors.into_iter().collect();
    let mut counts: Vec<(Label, usize)> = Vec::new();
    for &l in &labels {
        match counts.iter_mut().find(|(c, _)| *c == l) {
            Some((_, n)) => *n += 1,
            None => counts.push((l, 1)),
        }
    }
    let top = counts.iter().map(|&(_, n)| n).max()?;
    labels
        .into_iter()
        .find(|l| counts.iter().any(|&(c, n)| c == *l && n == top))
}

/// Refines `lower` with the labels of the next scale `upper`.
pub fn refine(lower: &ScalePrediction, upper: &ScalePrediction, cfg: &UpdateConfig) -> Result<ScalePrediction> {
    cfg.validate()?;
    if upper.scale != lower.scale + 1 {
        return Err(Error::ScaleMismatch {
            expected: lower.scale + 1,
            actual: upper.scale,
        });
    }
    for p in [lower, upper] {
        if p.positions.len() != p.labels.len() {
            return Err(Error::CardinalityMismatch {
                scale: p.scale,
                expected: p.positions.len(),
                actual: p.labels.len(),
            });
        }
    }
    if upper.is_empty() {
        return Ok(ScalePrediction {
            level: upper.level,
            ..lower.clone()
        });
    }
    let tree = KdTree::build(&upper.positions);
    let labels = lower
        .positions
        .iter()
        .map(|&q| {
            majority_vote(tree.knn(q, cfg.k).into_iter().map(|i| upper.labels[i]))
                .expect("upper scale is non-empty")
        })
        .collect();
    Ok(ScalePrediction {
        scale: lower.scale,
        level: upper.level,
        positions: lower.positions.clone(),
        labels,
    })
}

/// One `refine` call inside a cascade arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineStep {
    pub lower_scale: usize,
    pub lower_len: usize,
    pub upper_len: usize,
    pub elapsed: Duration,
}

/// Incremental refinement cascade: feed scale predictions in order; after each
/// arrival every held scale is at the newest level.
#[derive(Debug, Clone)]
pub struct Cascade {
    cfg: UpdateConfig,
    scales: Vec<ScalePrediction>,
}

impl Cascade {
    pub fn new(cfg: UpdateConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            scales: Vec::new(),
        })
    }

    /// Accepts the fresh output of the next scale and refines all lower scales.
    pub fn push(&mut self, prediction: ScalePrediction) -> Result<&[ScalePrediction]> {
        self.push_observed(prediction, |_| {})
    }

    /// Like [`Cascade::push`], reporting each refinement step as it finishes.
    pub fn push_observed(
        &mut self,
        prediction: ScalePrediction,
        mut observe: impl FnMut(RefineStep),
    ) -> Result<&[ScalePrediction]> {
        let expected = self.scales.len() + 1;
        if prediction.scale != expected {
            return Err(Error::ScaleMismatch {
                expected,
                actual: prediction.scale,
            });
        }
        if prediction.level != prediction.scale {
            return Err(Error::LevelMismatch {
                scale: prediction.scale,
                expected: prediction.scale,
                actual: prediction.level,
            });
        }
        self.scales.push(prediction);
        for i in (1..self.scales.len()).rev() {
            let started = Instant::now();
            let refined = refine(&self.scales[i - 1], &self.scales[i], &self.cfg)?;
            observe(RefineStep {
                lower_scale: i,
                lower_len: refined.len(),
                upper_len: self.scales[i].len(),
                elapsed: started.elapsed(),
            });
            self.scales[i - 1] = refined;
        }
        Ok(&self.scales)
    }

    pub fn predictions(&self) -> &[ScalePrediction] {
        &self.scales
    }

    pub fn into_predictions(self) -> Vec<ScalePrediction> {
        self.scales
    }
}

/// Brings scales `1..=m` to level `m`.
///
/// The input may be partially refined already: scales `1..=j` at level `j` and
/// every later scale at its own level. Only the missing arrival steps run.
pub fn cascade(predictions: &[ScalePrediction], cfg: &UpdateConfig) -> Result<Vec<ScalePrediction>> {
    cfg.validate()?;
    for (i, p) in predictions.iter().enumerate() {
        if p.scale != i + 1 {
            return Err(Error::MissingScale(i + 1));
        }
    }
    let Some(first) = predictions.first() else {
        return Ok(Vec::new());
    };
    let done = first.level;
    if done > predictions.len() {
        return Err(Error::LevelMismatch {
            scale: 1,
            expected: predictions.len(),
            actual: done,
        });
    }
    for p in predictions {
        let expected = if p.scale <= done { done } else { p.scale };
        if p.level != expected {
            return Err(Error::LevelMismatch {
                scale: p.scale,
                expected,
                actual: p.level,
            });
        }
    }
    let mut state = Cascade {
        cfg: cfg.clone(),
        scales: predictions[..done].to_vec(),
    };
    for p in &predictions[done..] {
        state.push(p.clone())?;
    }
    Ok(state.into_predictions())
}
