//! Resolution-scalable processing of temporally ordered point streams.
//!
//! A single-beam scanner traces a Lissajous figure and emits labeled points in
//! capture order ([`scanner`], [`point_stream`]). The stream is cut into
//! nested temporal scales ([`partitioner`]), each scale is labeled as soon as
//! it arrives ([`predictors`]), and earlier scales are refined by majority
//! vote over the nearest points of the next scale ([`update`]). The refined
//! scales are laid out as cumulative outputs ([`assembler`]), scheduled
//! against acquisition ([`pipeline`]) and scored ([`evaluation`], [`report`]).

pub mod assembler;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod partitioner;
pub mod pipeline;
pub mod point_stream;
pub mod predictors;
pub mod report;
pub mod scanner;
pub mod update;

pub use assembler::{assemble, assemble_unrefined, CumulativeOutput, OutputPoint};
pub use error::{Error, Result};
pub use evaluation::{cost_of_scalability, coverage, coverage_curve, miou, ConfusionMatrix, MiouResult};
pub use geometry::{Aabb, Vec3};
pub use partitioner::{partition, Partition, PartitionSpec, StreamingPartitioner};
pub use pipeline::{
    latency_metrics, run_baseline, run_scalable, run_scalable_with, Backend, DurationModel, Event, EventKind,
    LatencyMetrics, OverlapMode, ScalableRun, Timeline, TimingModel,
};
pub use point_stream::{read_stream, write_stream, Label, LabelMap, PointStream, Tick, TimedPoint};
pub use predictors::{NoisyOracle, PredictorConfig, PredictorVariant, ScaleContext, ScalePredictor, SeededKnn};
pub use report::MetricsReport;
pub use scanner::{scan, CameraPose, LissajousConfig, Scene, ViewFrame};
pub use update::{cascade, knn::knn, majority_vote, refine, Cascade, ScalePrediction, UpdateConfig};
