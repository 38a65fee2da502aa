use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use super::{arrive, Event, EventKind, ScalableRun, StageTiming, Timeline, TimingModel};
use crate::assembler::CumulativeOutput;
use crate::error::{Error, Result};
use crate::partitioner::{Partition, PartitionSpec};
use crate::point_stream::PointStream;
use crate::predictors::{ScaleContext, ScalePredictor};
use crate::update::{Cascade, ScalePrediction, UpdateConfig};

struct Progress {
    ready: Vec<bool>,
    contexts: Vec<Option<ScaleContext>>,
    fresh: Vec<Option<ScalePrediction>>,
    published: usize,
    failed: Option<Error>,
}

struct Published {
    cascade: Cascade,
    cumulative: Vec<CumulativeOutput>,
    unrefined: Vec<CumulativeOutput>,
    stages: Vec<Option<StageTiming>>,
}

struct Shared {
    origin: Instant,
    progress: Mutex<Progress>,
    changed: Condvar,
    free_workers: Mutex<usize>,
    worker_freed: Condvar,
    events: Mutex<Vec<Event>>,
    out: Mutex<Published>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Shared {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn record(&self, kind: EventKind, scale: usize, trigger: Option<usize>, at: f64) {
        lock(&self.events).push(Event {
            kind,
            scale,
            trigger,
            at,
        });
    }

    /// Blocks until `cond` holds; `None` once any worker failed.
    fn wait_for(&self, cond: impl Fn(&Progress) -> bool) -> Option<MutexGuard<'_, Progress>> {
        let mut g = lock(&self.progress);
        loop {
            if g.failed.is_some() {
                return None;
            }
            if cond(&g) {
                return Some(g);
            }
            g = self.changed.wait(g).unwrap_or_else(|p| p.into_inner());
        }
    }

    fn fail(&self, e: Error) {
        let mut g = lock(&self.progress);
        g.failed.get_or_insert(e);
        drop(g);
        self.changed.notify_all();
    }

    fn acquire_worker(&self) -> WorkerSlot<'_> {
        let mut free = lock(&self.free_workers);
        while *free == 0 {
            free = self.worker_freed.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        WorkerSlot(self)
    }

    fn sleep_until(&self, at: f64) {
        let ahead = at - self.now();
        if ahead > 0.0 {
            thread::sleep(Duration::from_secs_f64(ahead));
        }
    }
}

struct WorkerSlot<'a>(&'a Shared);

impl Drop for WorkerSlot<'_> {
    fn drop(&mut self) {
        *lock(&self.0.free_workers) += 1;
        self.0.worker_freed.notify_one();
    }
}

struct Ctx<'a> {
    shared: &'a Shared,
    stream: &'a PointStream,
    partitions: &'a [Partition],
    predictor: &'a dyn ScalePredictor,
    timing: &'a TimingModel,
    fusion: bool,
}

fn process_scale(c: &Ctx<'_>, idx: usize) -> Result<()> {
    let shared = c.shared;
    let scale = idx + 1;
    let part = &c.partitions[idx];
    let Some(g) = shared.wait_for(|p| p.ready[idx] && (!c.fusion || idx == 0 || p.contexts[idx - 1].is_some())) else {
        return Ok(());
    };
    let ctx = if c.fusion && idx > 0 { g.contexts[idx - 1].clone() } else { None };
    drop(g);

    let worker = shared.acquire_worker();
    let start = shared.now();
    shared.record(EventKind::ScaleStart, scale, None, start);
    let (labels, next) = c.predictor.predict(part, ctx.as_ref())?;
    let measured = Duration::from_secs_f64(shared.now() - start);
    shared.sleep_until(start + c.timing.processing.predict_seconds(part.len(), measured));
    let done = shared.now();
    shared.record(EventKind::ScaleDone, scale, None, done);
    drop(worker);
    let prediction = ScalePrediction::new(scale, part.positions(), labels)?;
    {
        let mut g = lock(&shared.progress);
        g.contexts[idx] = Some(next);
        g.fresh[idx] = Some(prediction.clone());
    }
    shared.changed.notify_all();

    let Some(g) = shared.wait_for(|p| p.published == idx) else {
        return Ok(());
    };
    let fresh: Vec<ScalePrediction> = g.fresh[..=idx].iter().map(|f| f.clone().expect("earlier scales done")).collect();
    drop(g);

    let worker = shared.acquire_worker();
    let cascade_start = shared.now();
    let mut out = lock(&shared.out);
    let mut step_start = cascade_start;
    let mut refine_steps = Vec::new();
    let arrival = arrive(&mut out.cascade, prediction, &fresh, c.partitions, c.stream, |step| {
        shared.sleep_until(step_start + c.timing.refine.refine_seconds(step));
        let now = shared.now();
        shared.record(EventKind::RefineDone, step.lower_scale, Some(scale), now);
        refine_steps.push(now - step_start);
        step_start = now;
    })?;
    let published = shared.now();
    out.cumulative.push(arrival.cumulative);
    out.unrefined.push(arrival.unrefined);
    out.stages[idx] = Some(StageTiming {
        scale,
        points: part.len(),
        predict: done - start,
        cascade: published - cascade_start,
        refine_steps,
    });
    drop(out);
    shared.record(EventKind::CumulativeAvailable, scale, None, published);
    drop(worker);
    lock(&shared.progress).published = scale;
    shared.changed.notify_all();
    Ok(())
}

pub(super) fn run(
    stream: &PointStream,
    spec: &PartitionSpec,
    partitions: Vec<Partition>,
    predictor: Arc<dyn ScalePredictor>,
    update_cfg: &UpdateConfig,
    timing: &TimingModel,
    fusion: bool,
) -> Result<ScalableRun> {
    let k = partitions.len();
    let tau = super::effective_tick(timing, spec.cuts(), &[]);
    let shared = Shared {
        origin: Instant::now(),
        progress: Mutex::new(Progress {
            ready: vec![false; k],
            contexts: vec![None; k],
            fresh: vec![None; k],
            published: 0,
            failed: None,
        }),
        changed: Condvar::new(),
        free_workers: Mutex::new(timing.workers),
        worker_freed: Condvar::new(),
        events: Mutex::new(Vec::with_capacity(6 * k)),
        out: Mutex::new(Published {
            cascade: Cascade::new(update_cfg.clone())?,
            cumulative: Vec::with_capacity(k),
            unrefined: Vec::with_capacity(k),
            stages: vec![None; k],
        }),
    };
    let ctx = Ctx {
        shared: &shared,
        stream,
        partitions: &partitions,
        predictor: predictor.as_ref(),
        timing,
        fusion,
    };

    thread::scope(|s| {
        for idx in 0..k {
            let ctx = &ctx;
            s.spawn(move || {
                if let Err(e) = process_scale(ctx, idx) {
                    ctx.shared.fail(e);
                }
            });
        }
        for (idx, &cut) in spec.cuts().iter().enumerate() {
            let at = f64::from(cut) * tau;
            shared.sleep_until(at);
            let mut g = lock(&shared.progress);
            if g.failed.is_some() {
                break;
            }
            g.ready[idx] = true;
            drop(g);
            shared.record(EventKind::PartitionReady, idx + 1, None, at);
            shared.changed.notify_all();
        }
    });

    if let Some(e) = lock(&shared.progress).failed.take() {
        return Err(e);
    }
    let progress = shared.progress.into_inner().unwrap_or_else(|p| p.into_inner());
    let out = shared.out.into_inner().unwrap_or_else(|p| p.into_inner());
    let mut events = shared.events.into_inner().unwrap_or_else(|p| p.into_inner());
    events.sort_by(|a, b| a.at.total_cmp(&b.at));
    let stages = out
        .stages
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Worker(format!("scale {} never finished", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let fresh = progress
        .fresh
        .into_iter()
        .map(|f| f.ok_or_else(|| Error::Worker("missing fresh prediction".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalableRun {
        partitions,
        fresh,
        refined: out.cascade.into_predictions(),
        cumulative: out.cumulative,
        unrefined: out.unrefined,
        timeline: Timeline {
            backend: timing.backend,
            tick_duration: tau,
            acquisition_end: f64::from(spec.last_cut()) * tau,
            events,
            stages,
        },
    })
}
