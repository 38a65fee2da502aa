//! Independent reference implementations and generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use scalestream_core::{DurationModel, Label, LabelMap, OverlapMode, PointStream, ScalePrediction, TimedPoint, TimingModel};

pub fn labels(classes: usize) -> LabelMap {
    LabelMap::new((0..classes).map(|c| format!("class{c}"))).unwrap()
}

/// Random valid stream: coordinates on a coarse grid, non-decreasing ticks.
pub fn arb_stream(max_len: usize, max_classes: usize) -> impl Strategy<Value = PointStream> {
    (1..=max_classes).prop_flat_map(move |classes| {
        let point = (-50i32..50, -50i32..50, -50i32..50, 0..classes as u16, 0u32..40);
        (Just(classes), prop::collection::vec(point, 0..max_len), any::<u8>()).prop_map(
            |(classes, raw, meta_len)| {
                let mut t = 0u32;
                let points = raw
                    .into_iter()
                    .map(|(x, y, z, l, dt)| {
                        t += dt;
                        TimedPoint::new(x as f32 * 0.25, y as f32 * 0.25, z as f32 * 0.25, l, t)
                    })
                    .collect();
                let meta: BTreeMap<String, String> = (0..meta_len % 4)
                    .map(|i| (format!("key{i}"), format!("value-{i}-{meta_len}")))
                    .collect();
                PointStream::new(points, labels(classes), meta).unwrap()
            },
        )
    })
}

/// Strictly increasing cuts whose last element covers `max_t`.
pub fn arb_cuts(max_t: u32) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::btree_set(0..=max_t + 20, 0..6).prop_map(move |set| {
        let mut cuts: Vec<u32> = set.into_iter().filter(|&c| c < max_t).collect();
        cuts.push(max_t + 3);
        cuts
    })
}

/// Interval filter: scale `i` gets every point with `s_{i-1} < t <= s_i`.
pub fn partition_oracle(points: &[TimedPoint], cuts: &[u32]) -> Vec<Vec<TimedPoint>> {
    (0..cuts.len())
        .map(|i| {
            let lo = if i == 0 { -1 } else { i64::from(cuts[i - 1]) };
            let hi = i64::from(cuts[i]);
            points
                .iter()
                .filter(|p| i64::from(p.t) > lo && i64::from(p.t) <= hi)
                .copied()
                .collect()
        })
        .collect()
}

pub fn dist2(a: [f32; 3], b: [f32; 3]) -> f64 {
    (0..3).map(|i| (f64::from(a[i]) - f64::from(b[i])).powi(2)).sum()
}

/// Linear scan; ties in distance go to the lower index.
pub fn linear_knn(query: [f32; 3], reference: &[[f32; 3]], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = reference.iter().enumerate().map(|(i, &p)| (dist2(query, p), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Plurality of `ordered` (closest first); among tied labels the one whose
/// first occurrence is earliest.
pub fn vote_oracle(ordered: &[Label]) -> Label {
    let mut count: BTreeMap<Label, usize> = BTreeMap::new();
    let mut first: BTreeMap<Label, usize> = BTreeMap::new();
    for (rank, &l) in ordered.iter().enumerate() {
        *count.entry(l).or_default() += 1;
        first.entry(l).or_insert(rank);
    }
    *count
        .keys()
        .min_by_key(|l| (std::cmp::Reverse(count[*l]), first[*l]))
        .expect("at least one neighbor")
}

pub fn refine_oracle(lower: &ScalePrediction, upper: &ScalePrediction, k: usize) -> ScalePrediction {
    let labels = if upper.labels.is_empty() {
        lower.labels.clone()
    } else {
        lower
            .positions
            .iter()
            .map(|&q| {
                let nn: Vec<Label> = linear_knn(q, &upper.positions, k).into_iter().map(|i| upper.labels[i]).collect();
                vote_oracle(&nn)
            })
            .collect()
    };
    ScalePrediction {
        scale: lower.scale,
        level: upper.level,
        positions: lower.positions.clone(),
        labels,
    }
}

/// Scale `i` (0-based) as seen once scale `m` has arrived, written as the
/// nested composition `Y_i(m) = UM(Y_i, Y_{i+1}(m))` with `Y_m(m) = Y_m`.
pub fn nested(fresh: &[ScalePrediction], i: usize, m: usize, k: usize) -> ScalePrediction {
    if i == m {
        fresh[i].clone()
    } else {
        refine_oracle(&fresh[i], &nested(fresh, i + 1, m, k), k)
    }
}

/// Random fresh predictions of `scales` scales with tiny coordinate ranges,
/// so distance ties are common.
pub fn arb_fresh(scales: std::ops::RangeInclusive<usize>, classes: u16) -> impl Strategy<Value = Vec<ScalePrediction>> {
    prop::collection::vec(
        prop::collection::vec(((0i8..6, 0i8..6, 0i8..3), 0..classes), 0..14),
        scales,
    )
    .prop_map(|scales| {
        scales
            .into_iter()
            .enumerate()
            .map(|(i, pts)| {
                let (positions, labels) = pts
                    .into_iter()
                    .map(|((x, y, z), l)| ([f32::from(x), f32::from(y), f32::from(z) * 0.5], l))
                    .unzip();
                ScalePrediction::new(i + 1, positions, labels).unwrap()
            })
            .collect()
    })
}

/// IoU per class from point-index sets.
pub fn brute_iou(gt: &[Label], pred: &[Label], classes: usize) -> Vec<Option<f64>> {
    (0..classes as Label)
        .map(|c| {
            let g: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == c).collect();
            let p: BTreeSet<usize> = (0..pred.len()).filter(|&i| pred[i] == c).collect();
            let union = g.union(&p).count();
            (union > 0).then(|| g.intersection(&p).count() as f64 / union as f64)
        })
        .collect()
}

pub fn brute_miou(gt: &[Label], pred: &[Label], classes: usize) -> f64 {
    let ious: Vec<f64> = brute_iou(gt, pred, classes).into_iter().flatten().collect();
    ious.iter().sum::<f64>() / ious.len() as f64
}

/// Slab-method ray/box intersection: entry parameter from outside, exit
/// parameter from inside, `None` on a miss.
pub fn slab(min: [f64; 3], max: [f64; 3], origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < min[a] || origin[a] > max[a] {
                return None;
            }
            continue;
        }
        let t1 = (min[a] - origin[a]) / dir[a];
        let t2 = (max[a] - origin[a]) / dir[a];
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    if t_far < t_near || t_far < 0.0 {
        return None;
    }
    Some(if t_near >= 0.0 { t_near } else { t_far })
}

/// coverage(2000) / coverage(65536) on the default room, default pose for
/// seed 0, 16x16 grid, measured at first build.
pub const COVERAGE_2000_RATIO_FROZEN: f64 = 1.0;
pub const COVERAGE_REGRESSION_GRID: usize = 16;

/// Nine points: two in (-1, 10], three in (10, 20], four in (20, 40].
pub fn tiny_stream() -> PointStream {
    let ts = [3, 10, 11, 15, 20, 21, 30, 33, 39];
    let pts = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| TimedPoint::new(i as f32, (i % 2) as f32, 0.0, (i % 3) as u16, t))
        .collect();
    PointStream::new(pts, labels(3), BTreeMap::new()).unwrap()
}

pub fn tiny_timing(tick: f64, overlap: OverlapMode) -> TimingModel {
    TimingModel {
        tick_duration: tick,
        processing: DurationModel::Synthetic { base: 0.0, per_point: 0.25 },
        refine: DurationModel::Synthetic { base: 0.0, per_point: 0.125 },
        overlap,
        ..Default::default()
    }
}

