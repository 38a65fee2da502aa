//! Timestamp partitioning of a stream into resolution scales.
//!
//! Scale `i` owns the points with `s_{i-1} < t <= s_i`, where `s_0 = -1`.
//! Stream timestamps never decrease, so every partition is a contiguous
//! run of the stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point_stream::{PointStream, Tick, TimedPoint};

pub const DEFAULT_CUTS: [Tick; 5] = [2000, 6000, 15000, 35000, 65536];

/// Strictly increasing cut timestamps, one per scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tick>", into = "Vec<Tick>")]
pub struct PartitionSpec {
    cuts: Vec<Tick>,
}

impl PartitionSpec {
    pub fn new(cuts: Vec<Tick>) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::Config("at least one cut is required".into()));
        }
        if let Some(w) = cuts.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "cuts must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self { cuts })
    }

    pub fn cuts(&self) -> &[Tick] {
        &self.cuts
    }

    pub fn scale_count(&self) -> usize {
        self.cuts.len()
    }

    pub fn last_cut(&self) -> Tick {
        *self.cuts.last().expect("non-empty")
    }

    /// Exclusive lower bound of scale `scale` (1-based).
    pub fn lower_bound(&self, scale: usize) -> i64 {
        if scale <= 1 {
            -1
        } else {
            i64::from(self.cuts[scale - 2])
        }
    }

    /// Scale index (1-based) owning timestamp `t`, if any.
    pub fn scale_of(&self, t: Tick) -> Option<usize> {
        let i = self.cuts.partition_point(|&c| c < t);
        (i < self.cuts.len()).then_some(i + 1)
    }
}

impl Default for PartitionSpec {
    fn default() -> Self {
        default_spec()
    }
}

impl TryFrom<Vec<Tick>> for PartitionSpec {
    type Error = Error;
    fn try_from(cuts: Vec<Tick>) -> Result<Self> {
        PartitionSpec::new(cuts)
    }
}

impl From<PartitionSpec> for Vec<Tick> {
    fn from(spec: PartitionSpec) -> Self {
        spec.cuts
    }
}

pub fn default_spec() -> PartitionSpec {
    PartitionSpec {
        cuts: DEFAULT_CUTS.to_vec(),
    }
}

/// The input of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// 1-based scale index.
    pub scale: usize,
    /// Exclusive lower timestamp bound.
    pub lower: i64,
    /// Inclusive upper timestamp bound.
    pub upper: Tick,
    /// Index of the first point of this partition in the source stream.
    pub offset: usize,
    pub points: Vec<TimedPoint>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains_time(&self, t: Tick) -> bool {
        i64::from(t) > self.lower && t <= self.upper
    }

    pub fn positions(&self) -> Vec<[f32; 3]> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// The whole stream as a single partition, as seen by a non-scalable
    /// predictor.
    pub fn whole(stream: &PointStream, scale: usize) -> Self {
        Partition {
            scale,
            lower: -1,
            upper: stream.max_timestamp().unwrap_or(0),
            offset: 0,
            points: stream.points().to_vec(),
        }
    }
}

pub fn partition(stream: &PointStream, spec: &PartitionSpec) -> Result<Vec<Partition>> {
    check_coverage(stream, spec)?;
    let pts = stream.points();
    let mut start = 0;
    Ok(spec
        .cuts()
        .iter()
        .enumerate()
        .map(|(i, &cut)| {
            let end = start + pts[start..].partition_point(|p| p.t <= cut);
            let part = Partition {
                scale: i + 1,
                lower: spec.lower_bound(i + 1),
                upper: cut,
                offset: start,
                points: pts[start..end].to_vec(),
            };
            start = end;
            part
        })
        .collect())
}

fn check_coverage(stream: &PointStream, spec: &PartitionSpec) -> Result<()> {
    match stream.max_timestamp() {
        Some(max) if max > spec.last_cut() => Err(Error::CutsTooShort {
            last_cut: spec.last_cut(),
            max_timestamp: max,
            dropped: stream.len() - stream.prefix_len(i64::from(spec.last_cut())),
        }),
        _ => Ok(()),
    }
}

/// Incremental partitioner for live streams. A partition is emitted as soon as
/// a point beyond its upper cut arrives, or when the stream ends.
#[derive(Debug)]
pub struct StreamingPartitioner {
    spec: PartitionSpec,
    current: usize,
    offset: usize,
    buffer: Vec<TimedPoint>,
    last_t: Option<Tick>,
}

impl StreamingPartitioner {
    pub fn new(spec: PartitionSpec) -> Self {
        Self {
            spec,
            current: 0,
            offset: 0,
            buffer: Vec::new(),
            last_t: None,
        }
    }

    fn emit(&mut self) -> Partition {
        let scale = self.current + 1;
        let points = std::mem::take(&mut self.buffer);
        let part = Partition {
            scale,
            lower: self.spec.lower_bound(scale),
            upper: self.spec.cuts()[self.current],
            offset: self.offset,
            points,
        };
        self.offset += part.len();
        self.current += 1;
        part
    }

    /// Feeds one point and returns every partition it completes.
    pub fn push(&mut self, point: TimedPoint) -> Result<Vec<Partition>> {
        if let Some(prev) = self.last_t {
            if point.t < prev {
                return Err(Error::NonMonotonicTimestamp {
                    index: self.offset + self.buffer.len(),
                    previous: prev,
                    current: point.t,
                });
            }
        }
        if point.t > self.spec.last_cut() {
            return Err(Error::CutsTooShort {
                last_cut: self.spec.last_cut(),
                max_timestamp: point.t,
                dropped: 1,
            });
        }
        self.last_t = Some(point.t);
        let mut done = Vec::new();
        while point.t > self.spec.cuts()[self.current] {
            done.push(self.emit());
        }
        self.buffer.push(point);
        Ok(done)
    }

    /// Flushes the remaining partitions, including trailing empty ones.
    pub fn finish(mut self) -> Vec<Partition> {
        let mut done = Vec::new();
        while self.current < self.spec.scale_count() {
            done.push(self.emit());
        }
        done
    }
}
