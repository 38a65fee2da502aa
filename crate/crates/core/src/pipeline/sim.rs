use std::time::Instant;

use super::{arrive, effective_tick, Event, EventKind, ScalableRun, StageTiming, Timeline, TimingModel};
use crate::error::Result;
use crate::partitioner::{Partition, PartitionSpec};
use crate::point_stream::PointStream;
use crate::predictors::{ScaleContext, ScalePredictor};
use crate::update::{Cascade, ScalePrediction, UpdateConfig};

/// A unit of work for the list scheduler.
#[derive(Debug, Clone)]
pub(crate) struct Job {
    pub release: f64,
    pub deps: Vec<usize>,
    pub duration: f64,
}

/// Greedy list scheduling on `workers` identical lanes. Whenever a lane is
/// free, the lowest-index job that is released and whose dependencies have
/// finished starts. Returns `(start, finish)` per job.
pub(crate) fn list_schedule(jobs: &[Job], workers: usize) -> Vec<(f64, f64)> {
    let n = jobs.len();
    let mut slot: Vec<Option<(f64, f64)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut running: Vec<usize> = Vec::new();
    let mut now = 0.0_f64;
    loop {
        loop {
            let mut changed = false;
            running.retain(|&j| {
                let finished = slot[j].is_some_and(|(_, f)| f <= now);
                if finished {
                    done[j] = true;
                    changed = true;
                }
                !finished
            });
            for j in 0..n {
                if running.len() >= workers.max(1) {
                    break;
                }
                if slot[j].is_none() && jobs[j].release <= now && jobs[j].deps.iter().all(|&d| done[d]) {
                    slot[j] = Some((now, now + jobs[j].duration));
                    running.push(j);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
        let next_finish = running.iter().filter_map(|&j| slot[j].map(|(_, f)| f));
        let next_release = (0..n)
            .filter(|&j| slot[j].is_none() && jobs[j].release > now)
            .map(|j| jobs[j].release);
        match next_finish.chain(next_release).reduce(f64::min) {
            Some(t) => now = t,
            None => unreachable!("job graph has a dependency cycle"),
        }
    }
    slot.into_iter().map(|s| s.expect("every job scheduled")).collect()
}

pub(super) fn run(
    stream: &PointStream,
    spec: &PartitionSpec,
    partitions: Vec<Partition>,
    predictor: &dyn ScalePredictor,
    update_cfg: &UpdateConfig,
    timing: &TimingModel,
    fusion: bool,
) -> Result<ScalableRun> {
    let k = partitions.len();
    let mut cascade = Cascade::new(update_cfg.clone())?;
    let mut fresh: Vec<ScalePrediction> = Vec::with_capacity(k);
    let mut cumulative = Vec::with_capacity(k);
    let mut unrefined = Vec::with_capacity(k);
    let mut stages = Vec::with_capacity(k);
    let mut context: Option<ScaleContext> = None;

    for part in &partitions {
        let started = Instant::now();
        let ctx = if fusion { context.as_ref() } else { None };
        let (labels, next) = predictor.predict(part, ctx)?;
        let measured = started.elapsed();
        context = Some(next);
        let prediction = ScalePrediction::new(part.scale, part.positions(), labels)?;
        fresh.push(prediction.clone());
        let arrival = arrive(&mut cascade, prediction, &fresh, &partitions, stream, |_| {})?;
        let refine_steps: Vec<f64> = arrival.steps.iter().map(|s| timing.refine.refine_seconds(s)).collect();
        stages.push(StageTiming {
            scale: part.scale,
            points: part.len(),
            predict: timing.processing.predict_seconds(part.len(), measured),
            cascade: refine_steps.iter().sum(),
            refine_steps,
        });
        cumulative.push(arrival.cumulative);
        unrefined.push(arrival.unrefined);
    }

    let stage_seconds: Vec<f64> = stages.iter().map(|s| s.predict + s.cascade).collect();
    let tau = effective_tick(timing, spec.cuts(), &stage_seconds);
    let ready: Vec<f64> = spec.cuts().iter().map(|&c| f64::from(c) * tau).collect();

    // Job 2i predicts scale i + 1, job 2i + 1 runs its cascade arrival.
    let mut jobs = Vec::with_capacity(2 * k);
    for (i, st) in stages.iter().enumerate() {
        let mut deps = Vec::new();
        if fusion && i > 0 {
            deps.push(2 * (i - 1));
        }
        jobs.push(Job {
            release: ready[i],
            deps,
            duration: st.predict,
        });
        let mut deps = vec![2 * i];
        if i > 0 {
            deps.push(2 * i - 1);
        }
        jobs.push(Job {
            release: 0.0,
            deps,
            duration: st.cascade,
        });
    }
    let slots = list_schedule(&jobs, timing.workers);

    let mut events = Vec::with_capacity(6 * k);
    for (i, st) in stages.iter().enumerate() {
        let scale = i + 1;
        let ev = |kind, at| Event {
            kind,
            scale,
            trigger: None,
            at,
        };
        let (p_start, p_done) = slots[2 * i];
        let (c_start, c_done) = slots[2 * i + 1];
        events.push(ev(EventKind::PartitionReady, ready[i]));
        events.push(ev(EventKind::ScaleStart, p_start));
        events.push(ev(EventKind::ScaleDone, p_done));
        let mut at = c_start;
        for (step, secs) in (1..scale).rev().zip(&st.refine_steps) {
            at += secs;
            events.push(Event {
                kind: EventKind::RefineDone,
                scale: step,
                trigger: Some(scale),
                at,
            });
        }
        events.push(ev(EventKind::CumulativeAvailable, c_done));
    }
    events.sort_by(|a, b| a.at.total_cmp(&b.at));

    Ok(ScalableRun {
        partitions,
        fresh,
        refined: cascade.into_predictions(),
        cumulative,
        unrefined,
        timeline: Timeline {
            backend: timing.backend,
            tick_duration: tau,
            acquisition_end: f64::from(spec.last_cut()) * tau,
            events,
            stages,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(release: f64, deps: &[usize], duration: f64) -> Job {
        Job {
            release,
            deps: deps.to_vec(),
            duration,
        }
    }

    #[test]
    fn single_lane_serialises_in_priority_order() {
        let jobs = [job(0.0, &[], 2.0), job(0.0, &[], 1.0), job(0.5, &[], 1.0)];
        assert_eq!(list_schedule(&jobs, 1), vec![(0.0, 2.0), (2.0, 3.0), (3.0, 4.0)]);
    }

    #[test]
    fn lanes_run_in_parallel() {
        let jobs = [job(0.0, &[], 2.0), job(0.0, &[], 1.0), job(0.0, &[1], 1.0)];
        assert_eq!(list_schedule(&jobs, 2), vec![(0.0, 2.0), (0.0, 1.0), (1.0, 2.0)]);
    }

    #[test]
    fn idle_until_release() {
        let jobs = [job(3.0, &[], 1.0), job(0.0, &[0], 0.0)];
        assert_eq!(list_schedule(&jobs, 1), vec![(3.0, 4.0), (4.0, 4.0)]);
    }
}
