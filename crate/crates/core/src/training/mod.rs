//! Segmenting encoded programs, the optimizer loop and model evaluation.

mod data;
mod evaluate;
mod optim;
mod trainer;

pub use data::{
    segment_stream, EncodedProgram, Fingerprints, InitialQuery, SegmentBatch, SegmentRow, SegmentStream, Shard,
};
pub use evaluate::{build_report, predict, program_accuracies, Baseline, Predictions, QueryPrediction, ReportOptions};
pub use optim::Adam;
pub use trainer::{
    effective_alpha, train, weight_sweep, EpochMetrics, NoopObserver, StepReport, SweepRow, TrainConfig, TrainObserver,
    TrainOutcome, Trainer,
};
