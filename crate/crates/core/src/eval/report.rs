use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::{Accuracy, TypeAccuracy};
use crate::model::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub vs: String,
    pub task: Task,
    pub baseline: f64,
    pub upper_bound: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub vs: String,
    pub task: Task,
    /// Independent units compared (programs).
    pub samples: usize,
    pub wilcoxon_statistic: f64,
    pub wilcoxon_p: f64,
    pub exact: bool,
    pub cliffs_delta: f64,
}

/// One row of a per-type table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub name: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_type: f64,
    pub accuracy_value: f64,
    pub type_counts: Accuracy,
    pub value_counts: Accuracy,
    /// Fraction of value targets that are `UNK`.
    pub unk_rate: f64,
    pub loss: f64,
    pub normalized_improvements: Vec<Improvement>,
    /// Every target type with its counts.
    pub per_type_accuracy: BTreeMap<String, TypeAccuracy>,
    pub difficult_types: Option<Vec<TypeRow>>,
    pub significance: Vec<Significance>,
    pub fingerprint: String,
}
