//! Joint acquisition and processing of a scalable stream.
//!
//! Scale `i` becomes ready once its partition has been acquired, at
//! `s_i * tick_duration`. Its predictor runs as soon as the partition is ready,
//! a worker is free and (with the fusion dependency on) the previous scale has
//! produced its context. When a scale finishes, the refinement cascade brings
//! all lower scales to its level and the cumulative output is published.
//! Publication is in scale order.
//!
//! Two backends share this contract. The simulator computes labels once and
//! derives the timeline by list scheduling over the stage durations; the real
//! executor runs every scale on its own thread against the wall clock. Labels
//! never depend on the backend or the timing parameters.

mod real;
mod sim;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::assembler::{assemble, assemble_unrefined, CumulativeOutput, OutputPoint};
use crate::error::{Error, Result};
use crate::partitioner::{partition, Partition, PartitionSpec};
use crate::point_stream::PointStream;
use crate::predictors::{PredictorConfig, ScalePredictor};
use crate::update::{Cascade, RefineStep, ScalePrediction, UpdateConfig};

/// How long a stage takes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DurationModel {
    /// `base + per_point * n` seconds, zero for an empty input. For refinement
    /// `n` is the lower plus upper point count.
    Synthetic { base: f64, per_point: f64 },
    /// `base + coefficient * n^exponent` seconds, zero for an empty input.
    Power { base: f64, coefficient: f64, exponent: f64 },
    /// Wall-clock time of the actual computation.
    Measured,
}

impl DurationModel {
    fn validate(&self, what: &str) -> Result<()> {
        match *self {
            DurationModel::Synthetic { base, per_point } => {
                if !(base >= 0.0 && base.is_finite() && per_point >= 0.0 && per_point.is_finite()) {
                    return Err(Error::Config(format!("{what} durations must be finite and non-negative")));
                }
                Ok(())
            }
            DurationModel::Power {
                base,
                coefficient,
                exponent,
            } => {
                if ![base, coefficient, exponent].iter().all(|v| *v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{what} durations must be finite and non-negative")));
                }
                Ok(())
            }
            DurationModel::Measured => Ok(()),
        }
    }

    fn of_count(&self, n: usize) -> f64 {
        match *self {
            _ if n == 0 => 0.0,
            DurationModel::Synthetic { base, per_point } => base + per_point * n as f64,
            DurationModel::Power {
                base,
                coefficient,
                exponent,
            } => base + coefficient * (n as f64).powf(exponent),
            DurationModel::Measured => unreachable!("measured durations have no closed form"),
        }
    }

    pub fn predict_seconds(&self, points: usize, measured: Duration) -> f64 {
        match *self {
            DurationModel::Measured => measured.as_secs_f64(),
            _ => self.of_count(points),
        }
    }

    pub fn refine_seconds(&self, step: &RefineStep) -> f64 {
        match *self {
            DurationModel::Measured => step.elapsed.as_secs_f64(),
            _ if step.lower_len == 0 || step.upper_len == 0 => 0.0,
            _ => self.of_count(step.lower_len + step.upper_len),
        }
    }

    fn synthetic(&self) -> bool {
        !matches!(self, DurationModel::Measured)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapMode {
    /// Partitions arrive at `s_i * tick_duration`.
    #[default]
    Measured,
    /// Acquisition slow enough that every stage before the last finishes
    /// before the next partition arrives (simulation only).
    FullOverlap,
    /// Acquisition is instantaneous; all processing happens afterwards.
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Sim,
    Real,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Backend::Sim),
            "real" => Ok(Backend::Real),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingModel {
    /// Seconds per scan tick.
    pub tick_duration: f64,
    pub processing: DurationModel,
    pub refine: DurationModel,
    pub overlap: OverlapMode,
    /// Scale `i` waits for the context of scale `i - 1`.
    pub fusion_dependency: bool,
    /// Concurrent processing lanes.
    pub workers: usize,
    pub backend: Backend,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self {
            tick_duration: 1e-5,
            processing: DurationModel::Power {
                base: 5e-3,
                coefficient: 2e-8,
                exponent: 1.5,
            },
            refine: DurationModel::Synthetic {
                base: 1e-3,
                per_point: 2e-7,
            },
            overlap: OverlapMode::Measured,
            fusion_dependency: true,
            workers: 1,
            backend: Backend::Sim,
        }
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.tick_duration > 0.0 && self.tick_duration.is_finite()) {
            problems.push(format!("tick_duration must be positive, got {}", self.tick_duration));
        }
        if let Err(e) = self.processing.validate("processing") {
            problems.push(e.to_string());
        }
        if let Err(e) = self.refine.validate("refine") {
            problems.push(e.to_string());
        }
        if self.workers < 1 {
            problems.push("workers must be at least 1".into());
        }
        if self.backend == Backend::Real && self.overlap == OverlapMode::FullOverlap {
            problems.push("full-overlap is a simulation-only bound; use mode sim".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PartitionReady,
    ScaleStart,
    ScaleDone,
    RefineDone,
    CumulativeAvailable,
    BaselineStart,
    BaselineDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub scale: usize,
    /// For `refine_done`: the scale whose arrival triggered the refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<usize>,
    /// Seconds since the start of acquisition.
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub scale: usize,
    pub points: usize,
    /// Predictor time, seconds.
    pub predict: f64,
    /// Total cascade time triggered by this scale, seconds.
    pub cascade: f64,
    /// Individual refinement steps, highest lower scale first.
    pub refine_steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub backend: Backend,
    /// Tick duration the partitions actually arrived with.
    pub tick_duration: f64,
    pub acquisition_end: f64,
    pub events: Vec<Event>,
    pub stages: Vec<StageTiming>,
}

impl Timeline {
    pub fn instant(&self, kind: EventKind, scale: usize) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == kind && e.scale == scale)
            .map(|e| e.at)
    }

    pub fn scale_count(&self) -> usize {
        self.stages.len()
    }

    /// Finish time of the last cumulative output.
    pub fn finish(&self) -> Option<f64> {
        self.instant(EventKind::CumulativeAvailable, self.scale_count())
    }

    /// Checks the scheduling contract: instants are non-negative, no scale
    /// starts before its partition (or, with `fusion`, before the previous
    /// scale's context), and outputs are published in scale order after the
    /// scale itself finished.
    pub fn check_causality(&self, fusion: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::IncompleteTimeline(msg));
        if let Some(e) = self.events.iter().find(|e| e.at.is_nan() || e.at < 0.0) {
            return bad(format!("negative instant {e:?}"));
        }
        let mut previous_publish = 0.0;
        for i in 1..=self.scale_count() {
            let get = |kind| {
                self.instant(kind, i)
                    .ok_or_else(|| Error::IncompleteTimeline(format!("missing {kind:?} for scale {i}")))
            };
            let ready = get(EventKind::PartitionReady)?;
            let start = get(EventKind::ScaleStart)?;
            let done = get(EventKind::ScaleDone)?;
            let publish = get(EventKind::CumulativeAvailable)?;
            if start < ready {
                return bad(format!("scale {i} starts at {start} before its partition at {ready}"));
            }
            if fusion && i > 1 {
                let ctx = get_prev(self, i - 1)?;
                if start < ctx {
                    return bad(format!("scale {i} starts before the context of scale {}", i - 1));
                }
            }
            if done < start || publish < done || publish < previous_publish {
                return bad(format!("scale {i} events out of order"));
            }
            previous_publish = publish;
        }
        Ok(())
    }
}

fn get_prev(t: &Timeline, scale: usize) -> Result<f64> {
    t.instant(EventKind::ScaleDone, scale)
        .ok_or_else(|| Error::IncompleteTimeline(format!("missing scale_done for scale {scale}")))
}

/// Everything a scalable run produces.
#[derive(Debug, Clone)]
pub struct ScalableRun {
    pub partitions: Vec<Partition>,
    /// Fresh, unrefined prediction of every scale.
    pub fresh: Vec<ScalePrediction>,
    /// Every scale refined to the final level.
    pub refined: Vec<ScalePrediction>,
    /// `Y^(s_i)` for every `i`.
    pub cumulative: Vec<CumulativeOutput>,
    /// The same prefixes built from unrefined predictions.
    pub unrefined: Vec<CumulativeOutput>,
    pub timeline: Timeline,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub output: CumulativeOutput,
    pub timeline: Timeline,
}

fn effective_tick(timing: &TimingModel, cuts: &[u32], stage_seconds: &[f64]) -> f64 {
    match timing.overlap {
        OverlapMode::Measured => timing.tick_duration,
        OverlapMode::NoOverlap => 0.0,
        OverlapMode::FullOverlap => cuts
            .windows(2)
            .zip(stage_seconds)
            .map(|(w, &d)| d / f64::from(w[1] - w[0]))
            .fold(timing.tick_duration, f64::max),
    }
}

/// Runs the scalable pipeline with a configured predictor.
pub fn run_scalable(
    stream: &PointStream,
    spec: &PartitionSpec,
    predictor_cfg: &PredictorConfig,
    update_cfg: &UpdateConfig,
    timing: &TimingModel,
) -> Result<ScalableRun> {
    let predictor = predictor_cfg.build(stream)?;
    run_scalable_with(stream, spec, predictor, update_cfg, timing)
}

pub fn run_scalable_with(
    stream: &PointStream,
    spec: &PartitionSpec,
    predictor: Arc<dyn ScalePredictor>,
    update_cfg: &UpdateConfig,
    timing: &TimingModel,
) -> Result<ScalableRun> {
    timing.validate()?;
    update_cfg.validate()?;
    let partitions = partition(stream, spec)?;
    let fusion = fusion_effective(timing, predictor.as_ref());
    match timing.backend {
        Backend::Sim => sim::run(stream, spec, partitions, predictor.as_ref(), update_cfg, timing, fusion),
        Backend::Real => real::run(stream, spec, partitions, predictor, update_cfg, timing, fusion),
    }
}

/// A predictor that reads its context always has to wait for it.
pub fn fusion_effective(timing: &TimingModel, predictor: &dyn ScalePredictor) -> bool {
    timing.fusion_dependency || predictor.uses_context()
}

/// Cascade arrival of one scale, with its cumulative outputs.
pub(crate) struct Arrival {
    pub steps: Vec<RefineStep>,
    pub cumulative: CumulativeOutput,
    pub unrefined: CumulativeOutput,
}

pub(crate) fn arrive(
    cascade: &mut Cascade,
    fresh: ScalePrediction,
    fresh_so_far: &[ScalePrediction],
    partitions: &[Partition],
    stream: &PointStream,
    mut on_step: impl FnMut(&RefineStep),
) -> Result<Arrival> {
    let mut steps = Vec::new();
    let state = cascade.push_observed(fresh, |step| {
        on_step(&step);
        steps.push(step);
    })?;
    let cumulative = assemble(state, partitions, stream)?;
    let unrefined = assemble_unrefined(fresh_so_far, partitions, stream)?;
    Ok(Arrival {
        steps,
        cumulative,
        unrefined,
    })
}

/// Non-scalable reference: one prediction over the full cloud once
/// acquisition is complete, using the final scale's predictor.
pub fn run_baseline(
    stream: &PointStream,
    scale_count: usize,
    predictor_cfg: &PredictorConfig,
    timing: &TimingModel,
) -> Result<BaselineRun> {
    let predictor = predictor_cfg.build(stream)?;
    run_baseline_with(stream, scale_count, predictor.as_ref(), timing)
}

pub fn run_baseline_with(
    stream: &PointStream,
    scale_count: usize,
    predictor: &dyn ScalePredictor,
    timing: &TimingModel,
) -> Result<BaselineRun> {
    timing.validate()?;
    let scale = scale_count.max(1);
    let whole = Partition::whole(stream, scale);
    let started = std::time::Instant::now();
    let (labels, _) = predictor.predict(&whole, None)?;
    let measured = started.elapsed();
    let mut seconds = timing.processing.predict_seconds(whole.len(), measured);
    if timing.backend == Backend::Real && timing.processing.synthetic() {
        // The emulated device never finishes faster than the model says.
        seconds = seconds.max(measured.as_secs_f64());
    }
    let start = f64::from(stream.max_timestamp().unwrap_or(0)) * timing.tick_duration;
    let done = start + seconds;
    let output = CumulativeOutput {
        scale,
        class_count: stream.class_count(),
        points: stream
            .points()
            .iter()
            .zip(&labels)
            .map(|(p, &pred)| OutputPoint {
                position: p.position,
                t: p.t,
                origin_scale: scale,
                pred,
                gt: p.label,
            })
            .collect(),
    };
    let ev = |kind, at| Event {
        kind,
        scale,
        trigger: None,
        at,
    };
    Ok(BaselineRun {
        output,
        timeline: Timeline {
            backend: timing.backend,
            tick_duration: timing.tick_duration,
            acquisition_end: start,
            events: vec![ev(EventKind::BaselineStart, start), ev(EventKind::BaselineDone, done)],
            stages: vec![StageTiming {
                scale,
                points: whole.len(),
                predict: seconds,
                cascade: 0.0,
                refine_steps: Vec::new(),
            }],
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyMetrics {
    pub acquisition_end: f64,
    /// Time from the end of acquisition to the final cumulative output.
    pub post_acquisition: f64,
    /// Full-overlap residual: the last scale's predictor plus its cascade.
    pub lower_bound: f64,
    /// No-overlap latency: the sum of every stage.
    pub upper_bound: f64,
    pub baseline_processing: f64,
    /// `1 - post_acquisition / baseline_processing`.
    pub speedup: f64,
    /// Latency of the first cumulative output after its partition became
    /// ready, relative to the baseline's inference time.
    pub first_prediction_fraction: f64,
    /// Instant of each cumulative output, seconds since acquisition start.
    pub availability: Vec<f64>,
}

pub fn latency_metrics(scalable: &Timeline, baseline: &Timeline) -> Result<LatencyMetrics> {
    let k = scalable.scale_count();
    if k == 0 {
        return Err(Error::IncompleteTimeline("no stages".into()));
    }
    let availability = (1..=k)
        .map(|i| {
            scalable
                .instant(EventKind::CumulativeAvailable, i)
                .ok_or_else(|| Error::IncompleteTimeline(format!("scale {i} never published")))
        })
        .collect::<Result<Vec<_>>>()?;
    let first_ready = scalable
        .instant(EventKind::PartitionReady, 1)
        .ok_or_else(|| Error::IncompleteTimeline("scale 1 partition never ready".into()))?;
    let bstart = baseline
        .events
        .iter()
        .find(|e| e.kind == EventKind::BaselineStart)
        .ok_or_else(|| Error::IncompleteTimeline("baseline never started".into()))?
        .at;
    let bdone = baseline
        .events
        .iter()
        .find(|e| e.kind == EventKind::BaselineDone)
        .ok_or_else(|| Error::IncompleteTimeline("baseline never finished".into()))?
        .at;
    let baseline_processing = bdone - bstart;
    let post_acquisition = availability[k - 1] - scalable.acquisition_end;
    let last = &scalable.stages[k - 1];
    let ratio = |x: f64| if baseline_processing > 0.0 { x / baseline_processing } else { 0.0 };
    Ok(LatencyMetrics {
        acquisition_end: scalable.acquisition_end,
        post_acquisition,
        lower_bound: last.predict + last.cascade,
        upper_bound: scalable.stages.iter().map(|s| s.predict + s.cascade).sum(),
        baseline_processing,
        speedup: if baseline_processing > 0.0 {
            1.0 - ratio(post_acquisition)
        } else {
            0.0
        },
        first_prediction_fraction: ratio(availability[0] - first_ready),
        availability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timeline(events: Vec<(EventKind, usize, f64)>, acq_end: f64, stages: Vec<(f64, f64)>) -> Timeline {
        Timeline {
            backend: Backend::Sim,
            tick_duration: 1.0,
            acquisition_end: acq_end,
            events: events
                .into_iter()
                .map(|(kind, scale, at)| Event {
                    kind,
                    scale,
                    trigger: None,
                    at,
                })
                .collect(),
            stages: stages
                .into_iter()
                .enumerate()
                .map(|(i, (predict, cascade))| StageTiming {
                    scale: i + 1,
                    points: 0,
                    predict,
                    cascade,
                    refine_steps: vec![],
                })
                .collect(),
        }
    }

    fn baseline(start: f64, done: f64) -> Timeline {
        timeline(
            vec![(EventKind::BaselineStart, 1, start), (EventKind::BaselineDone, 1, done)],
            start,
            vec![(done - start, 0.0)],
        )
    }

    #[test]
    fn constructed_sixty_percent_speedup() {
        use EventKind::*;
        let scalable = timeline(
            vec![
                (PartitionReady, 1, 1.0),
                (CumulativeAvailable, 1, 1.7),
                (PartitionReady, 2, 20.0),
                (CumulativeAvailable, 2, 24.0),
            ],
            20.0,
            vec![(0.7, 0.0), (3.0, 1.0)],
        );
        let m = latency_metrics(&scalable, &baseline(20.0, 30.0)).unwrap();
        assert_eq!(m.post_acquisition, 4.0);
        assert_eq!(m.baseline_processing, 10.0);
        assert!((m.speedup - 0.6).abs() < 1e-12);
        assert!((m.first_prediction_fraction - 0.07).abs() < 1e-12);
        assert_eq!(m.lower_bound, 4.0);
        assert_eq!(m.upper_bound, 4.7);
    }

    #[test]
    fn equal_latency_gives_zero_speedup() {
        use EventKind::*;
        let scalable = timeline(
            vec![(PartitionReady, 1, 5.0), (CumulativeAvailable, 1, 8.0)],
            5.0,
            vec![(3.0, 0.0)],
        );
        let m = latency_metrics(&scalable, &baseline(5.0, 8.0)).unwrap();
        assert_eq!(m.speedup, 0.0);
    }

    #[test]
    fn incomplete_timelines_error() {
        use EventKind::*;
        let scalable = timeline(vec![(PartitionReady, 1, 0.0)], 0.0, vec![(1.0, 0.0)]);
        assert!(matches!(
            latency_metrics(&scalable, &baseline(0.0, 1.0)),
            Err(Error::IncompleteTimeline(_))
        ));
        let done = timeline(
            vec![(PartitionReady, 1, 0.0), (CumulativeAvailable, 1, 1.0)],
            0.0,
            vec![(1.0, 0.0)],
        );
        assert!(latency_metrics(&done, &timeline(vec![], 0.0, vec![])).is_err());
    }

    #[test]
    fn timing_validation() {
        let bad = TimingModel {
            tick_duration: 0.0,
            workers: 0,
            backend: Backend::Real,
            overlap: OverlapMode::FullOverlap,
            ..Default::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("tick_duration") && msg.contains("workers") && msg.contains("full-overlap"));
    }

    #[test]
    fn synthetic_durations_are_zero_for_empty_inputs() {
        let m = DurationModel::Synthetic {
            base: 1.0,
            per_point: 0.5,
        };
        assert_eq!(m.predict_seconds(0, Duration::from_secs(3)), 0.0);
        assert_eq!(m.predict_seconds(4, Duration::ZERO), 3.0);
        let step = RefineStep {
            lower_scale: 1,
            lower_len: 2,
            upper_len: 0,
            elapsed: Duration::ZERO,
        };
        assert_eq!(m.refine_seconds(&step), 0.0);
    }

    #[test]
    fn power_durations() {
        let m = DurationModel::Power {
            base: 0.5,
            coefficient: 0.25,
            exponent: 1.5,
        };
        assert_eq!(m.predict_seconds(4, Duration::from_secs(9)), 2.5);
        assert_eq!(m.predict_seconds(0, Duration::ZERO), 0.0);
        let step = RefineStep {
            lower_scale: 1,
            lower_len: 1,
            upper_len: 3,
            elapsed: Duration::ZERO,
        };
        assert_eq!(m.refine_seconds(&step), 2.5);
        let bad = DurationModel::Power {
            base: 0.0,
            coefficient: 1.0,
            exponent: f64::NAN,
        };
        assert!(bad.validate("processing").is_err());
    }

    #[test]
    fn default_processing_favors_smaller_partitions() {
        let m = TimingModel::default().processing;
        let parts = [1429usize, 2881, 6510, 14412, 22018];
        let split: f64 = parts.iter().map(|&n| m.predict_seconds(n, Duration::ZERO)).sum();
        let whole = m.predict_seconds(parts.iter().sum(), Duration::ZERO);
        assert!(split < whole, "{split} vs {whole}");
    }
}
