use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::data::{segment_stream, Fingerprints, Shard};
use super::trainer::{effective_alpha, forward_batch, next_memories, reset_memories, SPECIALS};
use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::eval::{
    cliffs_delta, is_correct, normalized_improvement, per_type_accuracy, resolve_type_set, wilcoxon_rank_sum, Accuracy,
    EvalReport, Improvement, Significance, TypeRow,
};
use crate::model::{Heads, Model, Task};
use crate::tensor::argmax;
use crate::vocab::Vocab;

/// Top-1 prediction for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPrediction {
    pub program: usize,
    pub position: usize,
    pub target_type: u32,
    pub target_value: u32,
    pub predicted_type: u32,
    pub predicted_value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    /// Ordered by program, then position.
    pub queries: Vec<QueryPrediction>,
    /// Weighted loss with the model's effective loss weights.
    pub loss: f64,
    pub type_loss: f64,
    pub value_loss: f64,
}

impl Predictions {
    pub fn counts(&self, task: Task) -> Accuracy {
        let mut acc = Accuracy::default();
        for q in &self.queries {
            let (p, t) = match task {
                Task::Type => (q.predicted_type, q.target_type),
                Task::Value => (q.predicted_value, q.target_value),
            };
            if let Some(ok) = is_correct(p, t, SPECIALS, task) {
                acc.record(ok);
            }
        }
        acc
    }

    pub fn accuracy(&self, task: Task) -> f64 {
        self.counts(task).fraction()
    }
}

/// Scores every query of `shard` in program order, carrying memory across the
/// segments of each program as in training.
pub fn predict(model: &Model, shard: &Shard, expected: &Fingerprints) -> Result<Predictions> {
    if shard.programs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if shard.path_len != model.config().path_len {
        return Err(Error::Config(alloc::format!(
            "shard paths have m = {}, model expects {}",
            shard.path_len,
            model.config().path_len
        )));
    }
    let stream = segment_stream(shard, expected, model.config().segment_len, 1, None)?;
    let mut memories = Vec::new();
    let mut queries = Vec::with_capacity(shard.num_queries());
    let mut type_sum = 0.0;
    let mut value_sum = 0.0;
    for batch in stream {
        reset_memories(model, &batch, &mut memories);
        let mut g = Graph::new(model.params());
        let fwd = forward_batch(model, &mut g, &batch, &memories, Heads::BOTH)?;
        let (Some(tl), Some(vl)) = (fwd.type_logits, fwd.value_logits) else {
            memories = next_memories(model, &g, &batch, &memories, &fwd.layer_inputs)?;
            continue;
        };
        let t_ce = g.softmax_xent(tl, &fwd.type_targets);
        let v_ce = g.softmax_xent(vl, &fwd.value_targets);
        type_sum += g.value(t_ce).get(0, 0);
        value_sum += g.value(v_ce).get(0, 0);
        let (tm, vm) = (g.value(tl), g.value(vl));
        for (r, q) in fwd.queries.iter().enumerate() {
            let Some((program, position)) = *q else { continue };
            queries.push(QueryPrediction {
                program,
                position,
                target_type: fwd.type_targets[r].expect("query has a target") as u32,
                target_value: fwd.value_targets[r].expect("query has a target") as u32,
                predicted_type: argmax(tm.row(r)) as u32,
                predicted_value: argmax(vm.row(r)) as u32,
            });
        }
        memories = next_memories(model, &g, &batch, &memories, &fwd.layer_inputs)?;
    }
    let n = queries.len().max(1) as f64;
    let (type_loss, value_loss) = (type_sum / n, value_sum / n);
    let alpha = effective_alpha(model.config(), model.ablation());
    Ok(Predictions { queries, loss: alpha[0] * type_loss + alpha[1] * value_loss, type_loss, value_loss })
}

/// Per-program accuracy, the sample unit for significance tests. Programs
/// without a scored query are left out.
pub fn program_accuracies(predictions: &Predictions, task: Task) -> Vec<f64> {
    let mut per: BTreeMap<usize, Accuracy> = BTreeMap::new();
    for q in &predictions.queries {
        let (p, t) = match task {
            Task::Type => (q.predicted_type, q.target_type),
            Task::Value => (q.predicted_value, q.target_value),
        };
        if let Some(ok) = is_correct(p, t, SPECIALS, task) {
            per.entry(q.program).or_default().record(ok);
        }
    }
    per.values().filter(|a| a.total > 0).map(Accuracy::fraction).collect()
}

/// A reference accuracy to express improvements against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub name: String,
    pub task: Task,
    pub accuracy: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ReportOptions<'a> {
    pub baselines: Vec<Baseline>,
    /// Type names for the difficult-type breakdown.
    pub difficult_types: Option<Vec<String>>,
    /// Reject breakdown names missing from the type vocabulary.
    pub strict_types: bool,
    /// Another model's predictions on the same shard, for significance tests.
    pub compare: Option<(String, &'a Predictions)>,
    pub fingerprint: String,
}

pub fn build_report(predictions: &Predictions, types: &Vocab, options: &ReportOptions<'_>) -> Result<EvalReport> {
    let type_counts = predictions.counts(Task::Type);
    let value_counts = predictions.counts(Task::Value);
    let accuracy_type = type_counts.fraction();
    let accuracy_value = value_counts.fraction();

    let normalized_improvements = options
        .baselines
        .iter()
        .map(|b| {
            let ours = match b.task {
                Task::Type => accuracy_type,
                Task::Value => accuracy_value,
            };
            Ok(Improvement {
                vs: b.name.clone(),
                task: b.task,
                baseline: b.accuracy,
                upper_bound: b.upper_bound,
                value: normalized_improvement(ours, b.accuracy, b.upper_bound)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let preds: Vec<u32> = predictions.queries.iter().map(|q| q.predicted_type).collect();
    let targets: Vec<u32> = predictions.queries.iter().map(|q| q.target_type).collect();
    let present: Vec<u32> = targets.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut by_type = BTreeMap::new();
    if !present.is_empty() {
        for (id, acc) in per_type_accuracy(&preds, &targets, &present)? {
            by_type.insert(String::from(types.decode(id)?), acc);
        }
    }

    let difficult_types = match &options.difficult_types {
        None => None,
        Some(names) => {
            let resolved = resolve_type_set(types, names, options.strict_types)?;
            let ids: Vec<u32> = resolved.iter().filter_map(|(_, id)| *id).collect();
            let table = if ids.is_empty() { BTreeMap::new() } else { per_type_accuracy(&preds, &targets, &ids)? };
            Some(
                resolved
                    .into_iter()
                    .map(|(name, id)| {
                        let acc = id.and_then(|i| table.get(&i).copied()).unwrap_or_default();
                        TypeRow { name, correct: acc.correct, total: acc.total, accuracy: acc.accuracy }
                    })
                    .collect(),
            )
        }
    };

    let mut significance = Vec::new();
    if let Some((name, other)) = &options.compare {
        for task in [Task::Type, Task::Value] {
            let x = program_accuracies(predictions, task);
            let y = program_accuracies(other, task);
            if x.is_empty() || y.is_empty() {
                continue;
            }
            let test = wilcoxon_rank_sum(&x, &y)?;
            significance.push(Significance {
                vs: name.clone(),
                task,
                samples: x.len(),
                wilcoxon_statistic: test.statistic,
                wilcoxon_p: test.p_value,
                exact: test.exact,
                cliffs_delta: cliffs_delta(&x, &y)?,
            });
        }
    }

    let unk = predictions.queries.iter().filter(|q| q.target_value == SPECIALS.unk).count();
    let unk_rate = if predictions.queries.is_empty() { 0.0 } else { unk as f64 / predictions.queries.len() as f64 };
    Ok(EvalReport {
        accuracy_type,
        accuracy_value,
        type_counts,
        value_counts,
        unk_rate,
        loss: predictions.loss,
        normalized_improvements,
        per_type_accuracy: by_type,
        difficult_types,
        significance,
        fingerprint: options.fingerprint.clone(),
    })
}
