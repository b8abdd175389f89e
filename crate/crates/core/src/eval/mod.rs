//! Scoring: top-1 accuracy with the UNK rule, normalized improvement,
//! per-type breakdowns and the two-sample significance statistics.

mod metrics;
mod report;
mod stats;

pub(crate) use metrics::is_correct;
pub use metrics::{
    normalized_improvement, per_type_accuracy, resolve_type_set, top1_accuracy, Accuracy, TypeAccuracy, DIFFICULT_TYPES,
};
pub use report::{EvalReport, Improvement, Significance, TypeRow};
pub use stats::{cliffs_delta, wilcoxon_rank_sum, RankSumTest, EXACT_LIMIT};
