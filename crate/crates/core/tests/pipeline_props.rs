mod common;

use std::sync::Arc;

use proptest::prelude::*;
use scalestream_core::pipeline::{run_baseline_with, BaselineRun};
use scalestream_core::predictors::LabeledCloud;
use scalestream_core::{
    latency_metrics, run_scalable_with, scan, Backend, DurationModel, EventKind, LissajousConfig, NoisyOracle,
    OverlapMode, PartitionSpec, PointStream, ScalableRun, ScalePredictor, Scene, SeededKnn, TimingModel,
    UpdateConfig,
};

fn oracle(scales: usize, classes: usize, seed: u64) -> Arc<dyn ScalePredictor> {
    Arc::new(NoisyOracle::new(vec![0.2; scales], classes, seed).unwrap())
}

fn run_tiny(timing: &TimingModel) -> (ScalableRun, BaselineRun) {
    let s = common::tiny_stream();
    let spec = PartitionSpec::new(vec![10, 20, 40]).unwrap();
    let p = oracle(3, 3, 1);
    let run = run_scalable_with(&s, &spec, p.clone(), &UpdateConfig::default(), timing).unwrap();
    let base = run_baseline_with(&s, 3, p.as_ref(), timing).unwrap();
    (run, base)
}

fn at(run: &ScalableRun, kind: EventKind, scale: usize) -> f64 {
    run.timeline.instant(kind, scale).unwrap()
}

#[test]
fn closed_form_timeline_with_idle_gaps() {
    use EventKind::*;
    let (run, base) = run_tiny(&common::tiny_timing(0.125, OverlapMode::Measured));
    let expect = [
        (PartitionReady, 1, 1.25),
        (ScaleStart, 1, 1.25),
        (ScaleDone, 1, 1.75),
        (CumulativeAvailable, 1, 1.75),
        (PartitionReady, 2, 2.5),
        (ScaleStart, 2, 2.5),
        (ScaleDone, 2, 3.25),
        (CumulativeAvailable, 2, 3.875),
        (PartitionReady, 3, 5.0),
        (ScaleStart, 3, 5.0),
        (ScaleDone, 3, 6.0),
        (CumulativeAvailable, 3, 7.5),
    ];
    for (kind, scale, t) in expect {
        assert_eq!(at(&run, kind, scale), t, "{kind:?} {scale}");
    }
    let refines: Vec<(usize, Option<usize>, f64)> = run
        .timeline
        .events
        .iter()
        .filter(|e| e.kind == RefineDone)
        .map(|e| (e.scale, e.trigger, e.at))
        .collect();
    assert_eq!(refines, vec![(1, Some(2), 3.875), (2, Some(3), 6.875), (1, Some(3), 7.5)]);
    let m = latency_metrics(&run.timeline, &base.timeline).unwrap();
    assert_eq!(m.acquisition_end, 5.0);
    assert_eq!(m.post_acquisition, 2.5);
    assert_eq!(m.lower_bound, 2.5);
    assert_eq!(m.upper_bound, 4.375);
    assert_eq!(m.baseline_processing, 2.25);
    assert_eq!(base.timeline.acquisition_end, 39.0 * 0.125);
    assert_eq!(m.first_prediction_fraction, 0.5 / 2.25);
    assert_eq!(m.speedup, 1.0 - 2.5 / 2.25);
}

#[test]
fn closed_form_timeline_with_queueing() {
    use EventKind::*;
    let (run, _) = run_tiny(&common::tiny_timing(1.0 / 64.0, OverlapMode::Measured));
    let expect = [
        (ScaleStart, 1, 0.15625),
        (CumulativeAvailable, 1, 0.65625),
        (ScaleStart, 2, 0.65625),
        (ScaleDone, 2, 1.40625),
        (CumulativeAvailable, 2, 2.03125),
        (ScaleStart, 3, 2.03125),
        (ScaleDone, 3, 3.03125),
        (CumulativeAvailable, 3, 4.53125),
    ];
    for (kind, scale, t) in expect {
        assert_eq!(at(&run, kind, scale), t, "{kind:?} {scale}");
    }
    assert_eq!(run.timeline.acquisition_end, 0.625);
}

#[test]
fn overlap_modes_hit_their_bounds() {
    let (no, _) = run_tiny(&common::tiny_timing(1.0 / 64.0, OverlapMode::NoOverlap));
    assert_eq!(no.timeline.acquisition_end, 0.0);
    assert_eq!(no.timeline.finish().unwrap(), 4.375);

    let (full, _) = run_tiny(&common::tiny_timing(1.0 / 64.0, OverlapMode::FullOverlap));
    let tau = full.timeline.tick_duration;
    assert!((tau - 1.375 / 20.0).abs() < 1e-15);
    let post = full.timeline.finish().unwrap() - full.timeline.acquisition_end;
    assert!((post - 2.5).abs() < 1e-12, "{post}");
}

#[test]
fn second_lane_overlaps_cascade_with_next_scale() {
    let mut timing = common::tiny_timing(1.0 / 64.0, OverlapMode::Measured);
    timing.workers = 2;
    timing.fusion_dependency = false;
    let (run, _) = run_tiny(&timing);
    // Lane A: scale 1 [0.15625, 0.65625), then scale 3 [0.65625, 1.65625).
    // Lane B: scale 2 [0.3125, 1.0625), cascade 2 until 1.6875, cascade 3
    // after both scale 3 and cascade 2.
    assert_eq!(at(&run, EventKind::ScaleStart, 2), 0.3125);
    assert_eq!(at(&run, EventKind::ScaleStart, 3), 0.65625);
    assert_eq!(at(&run, EventKind::ScaleDone, 3), 1.65625);
    assert_eq!(at(&run, EventKind::CumulativeAvailable, 2), 1.6875);
    assert_eq!(at(&run, EventKind::CumulativeAvailable, 3), 3.1875);
    run.timeline.check_causality(false).unwrap();
}

fn room_stream(ticks: u32, seed: u64) -> PointStream {
    let scene = Scene::default_room();
    let pose = scalestream_core::scanner::default_pose(&scene, seed).unwrap();
    scan(&scene, &pose, &LissajousConfig { ticks, ..Default::default() }).unwrap()
}

fn arb_timing() -> impl Strategy<Value = TimingModel> {
    (
        1e-6f64..1e-3,
        prop_oneof![
            Just(DurationModel::Measured),
            (0.0f64..0.01, 0.0f64..1e-5).prop_map(|(base, per_point)| DurationModel::Synthetic { base, per_point }),
        ],
        (0.0f64..0.005, 0.0f64..1e-6).prop_map(|(base, per_point)| DurationModel::Synthetic { base, per_point }),
        prop_oneof![Just(OverlapMode::Measured), Just(OverlapMode::NoOverlap), Just(OverlapMode::FullOverlap)],
        any::<bool>(),
        1usize..4,
    )
        .prop_map(|(tick_duration, processing, refine, overlap, fusion_dependency, workers)| TimingModel {
            tick_duration,
            processing,
            refine,
            overlap,
            fusion_dependency,
            workers,
            backend: Backend::Sim,
        })
}

fn labels_of(run: &ScalableRun) -> Vec<Vec<u16>> {
    run.cumulative.iter().map(|c| c.predicted()).chain(run.fresh.iter().map(|f| f.labels.clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn timeline_invariants_hold(timing in arb_timing(), seed in 0u64..4) {
        let s = room_stream(6000, seed);
        let spec = PartitionSpec::new(vec![300, 900, 2500, 6000]).unwrap();
        let p = oracle(4, 11, seed);
        let run = run_scalable_with(&s, &spec, p, &UpdateConfig::default(), &timing).unwrap();
        let tl = &run.timeline;
        tl.check_causality(timing.fusion_dependency).unwrap();
        for (i, &cut) in spec.cuts().iter().enumerate() {
            prop_assert_eq!(tl.instant(EventKind::PartitionReady, i + 1).unwrap(), f64::from(cut) * tl.tick_duration);
        }
        let post = tl.finish().unwrap() - tl.acquisition_end;
        let last = tl.stages.last().unwrap();
        let upper: f64 = tl.stages.iter().map(|s| s.predict + s.cascade).sum();
        prop_assert!(post >= last.predict + last.cascade - 1e-12);
        prop_assert!(post <= upper + 1e-12);
        for (i, c) in run.cumulative.iter().enumerate() {
            prop_assert_eq!(c.len(), s.prefix_len(i64::from(spec.cuts()[i])));
            let src: Vec<_> = s.points()[..c.len()].iter().map(|p| (p.position, p.t, p.label)).collect();
            let out: Vec<_> = c.points.iter().map(|p| (p.position, p.t, p.gt)).collect();
            prop_assert_eq!(src, out);
        }
    }

    #[test]
    fn single_lane_bound_ordering(timing in arb_timing(), seed in 0u64..4) {
        let s = room_stream(6000, seed);
        let spec = PartitionSpec::new(vec![300, 900, 2500, 6000]).unwrap();
        let p = oracle(4, 11, seed);
        let post = |overlap| {
            let t = TimingModel { overlap, workers: 1, processing: synthetic(&timing.processing), ..timing.clone() };
            let r = run_scalable_with(&s, &spec, p.clone(), &UpdateConfig::default(), &t).unwrap();
            r.timeline.finish().unwrap() - r.timeline.acquisition_end
        };
        let (full, measured, none) = (post(OverlapMode::FullOverlap), post(OverlapMode::Measured), post(OverlapMode::NoOverlap));
        prop_assert!(full <= measured + 1e-12, "{} > {}", full, measured);
        prop_assert!(measured <= none + 1e-12, "{} > {}", measured, none);
    }

    #[test]
    fn labels_do_not_depend_on_timing(a in arb_timing(), b in arb_timing(), seed in 0u64..4) {
        let s = room_stream(6000, seed);
        let spec = PartitionSpec::new(vec![300, 900, 2500, 6000]).unwrap();
        let p = oracle(4, 11, seed);
        let ra = run_scalable_with(&s, &spec, p.clone(), &UpdateConfig::default(), &a).unwrap();
        let rb = run_scalable_with(&s, &spec, p, &UpdateConfig::default(), &b).unwrap();
        prop_assert_eq!(labels_of(&ra), labels_of(&rb));
        prop_assert_eq!(ra.refined, rb.refined);
    }
}

/// Replaces a measured duration model with a fixed synthetic one.
fn synthetic(model: &DurationModel) -> DurationModel {
    match model {
        DurationModel::Measured => DurationModel::Synthetic { base: 1e-3, per_point: 1e-6 },
        other => *other,
    }
}

#[test]
fn real_executor_matches_the_simulator() {
    let s = room_stream(6000, 2);
    let spec = PartitionSpec::new(vec![300, 900, 2500, 6000]).unwrap();
    for predictor in [
        oracle(4, 11, 2),
        Arc::new(SeededKnn::new(3, seed_cloud(&s)).unwrap()) as Arc<dyn ScalePredictor>,
    ] {
        let sim = TimingModel {
            tick_duration: 2e-6,
            processing: DurationModel::Synthetic { base: 2e-3, per_point: 1e-6 },
            refine: DurationModel::Synthetic { base: 5e-4, per_point: 1e-7 },
            fusion_dependency: false,
            ..Default::default()
        };
        let real = TimingModel { backend: Backend::Real, workers: 2, ..sim.clone() };
        let a = run_scalable_with(&s, &spec, predictor.clone(), &UpdateConfig::default(), &sim).unwrap();
        let b = run_scalable_with(&s, &spec, predictor.clone(), &UpdateConfig::default(), &real).unwrap();
        assert_eq!(labels_of(&a), labels_of(&b));
        assert_eq!(b.timeline.backend, Backend::Real);
        let fusion = scalestream_core::pipeline::fusion_effective(&real, predictor.as_ref());
        b.timeline.check_causality(fusion).unwrap();
        for st in &b.timeline.stages {
            let floor = sim.processing.predict_seconds(st.points, std::time::Duration::ZERO);
            assert!(st.predict >= floor, "scale {} ran {} < {}", st.scale, st.predict, floor);
        }
    }
}

fn seed_cloud(s: &PointStream) -> LabeledCloud {
    LabeledCloud {
        positions: s.points().iter().step_by(97).map(|p| p.position).collect(),
        labels: s.points().iter().step_by(97).map(|p| p.label).collect(),
    }
}

#[test]
fn real_mode_rejects_full_overlap() {
    let timing = TimingModel { backend: Backend::Real, overlap: OverlapMode::FullOverlap, ..Default::default() };
    let s = common::tiny_stream();
    let spec = PartitionSpec::new(vec![10, 20, 40]).unwrap();
    assert!(run_scalable_with(&s, &spec, oracle(3, 3, 0), &UpdateConfig::default(), &timing).is_err());
}

#[test]
fn predictor_errors_surface_from_both_backends() {
    let s = common::tiny_stream();
    let spec = PartitionSpec::new(vec![10, 20, 40]).unwrap();
    let short = oracle(2, 3, 0);
    for backend in [Backend::Sim, Backend::Real] {
        let timing = TimingModel { backend, tick_duration: 1e-6, ..Default::default() };
        assert!(run_scalable_with(&s, &spec, short.clone(), &UpdateConfig::default(), &timing).is_err());
    }
}

#[test]
fn baseline_covers_the_same_points_as_the_final_output() {
    let s = room_stream(6000, 1);
    let spec = PartitionSpec::new(vec![300, 900, 2500, 6000]).unwrap();
    let p = oracle(4, 11, 1);
    let run = run_scalable_with(&s, &spec, p.clone(), &UpdateConfig::default(), &TimingModel::default()).unwrap();
    let base = run_baseline_with(&s, 4, p.as_ref(), &TimingModel::default()).unwrap();
    let key = |o: &scalestream_core::CumulativeOutput| o.points.iter().map(|p| (p.position, p.t, p.gt)).collect::<Vec<_>>();
    assert_eq!(key(run.cumulative.last().unwrap()), key(&base.output));
}
