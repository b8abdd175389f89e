use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::vocab::{Specials, Vocab};

/// The statement types singled out as hard-to-predict structure.
pub const DIFFICULT_TYPES: [&str; 8] = [
    "ContinueStatement",
    "ForStatement",
    "WhileStatement",
    "ReturnStatement",
    "SwitchStatement",
    "ThrowStatement",
    "TryStatement",
    "IfStatement",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn record(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }

    pub fn merge(&mut self, other: Accuracy) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

/// Counts for one query position; `PAD` targets are skipped and, for the
/// value task, an `UNK` target is always wrong.
pub(crate) fn is_correct(prediction: u32, target: u32, specials: Specials, task: Task) -> Option<bool> {
    if target == specials.pad {
        return None;
    }
    if task == Task::Value && target == specials.unk {
        return Some(false);
    }
    Some(prediction == target)
}

pub fn top1_counts(predictions: &[u32], targets: &[u32], specials: Specials, task: Task) -> Result<Accuracy> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(alloc::format!("{} predictions vs {} targets", predictions.len(), targets.len())));
    }
    let mut acc = Accuracy::default();
    for (&p, &t) in predictions.iter().zip(targets) {
        if let Some(ok) = is_correct(p, t, specials, task) {
            acc.record(ok);
        }
    }
    Ok(acc)
}

/// Fraction of non-pad positions whose argmax prediction equals the target.
pub fn top1_accuracy(predictions: &[u32], targets: &[u32], specials: Specials, task: Task) -> Result<f64> {
    top1_counts(predictions, targets, specials, task).map(|a| a.fraction())
}

/// Improvement of `acc_x` over `acc_y` relative to the room left below `acc_ub`
/// (or, for a decrease, relative to `acc_y`).
pub fn normalized_improvement(acc_x: f64, acc_y: f64, acc_ub: f64) -> Result<f64> {
    for (name, v) in [("acc_x", acc_x), ("acc_y", acc_y), ("acc_ub", acc_ub)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(alloc::format!("{name} = {v} is not in [0, 1]")));
        }
    }
    if acc_ub < acc_x.max(acc_y) {
        return Err(Error::Domain(alloc::format!("upper bound {acc_ub} is below max({acc_x}, {acc_y})")));
    }
    if acc_x > acc_y {
        Ok((acc_x - acc_y) / (acc_ub - acc_y))
    } else if acc_x == acc_y {
        Ok(0.0)
    } else {
        if acc_y == 0.0 {
            return Err(Error::Domain("acc_y must be positive for a decrease".into()));
        }
        Ok((acc_x - acc_y) / acc_y)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeAccuracy {
    pub correct: usize,
    pub total: usize,
    /// `None` when the type never occurs as a target.
    pub accuracy: Option<f64>,
}

/// Type-prediction accuracy restricted to queries whose target type is in `type_set`.
pub fn per_type_accuracy(
    predictions: &[u32],
    targets: &[u32],
    type_set: &[u32],
) -> Result<BTreeMap<u32, TypeAccuracy>> {
    if type_set.is_empty() {
        return Err(Error::Domain("type set is empty".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Shape(alloc::format!("{} predictions vs {} targets", predictions.len(), targets.len())));
    }
    let mut out: BTreeMap<u32, TypeAccuracy> = type_set.iter().map(|&t| (t, TypeAccuracy::default())).collect();
    for (&p, &t) in predictions.iter().zip(targets) {
        if let Some(entry) = out.get_mut(&t) {
            entry.total += 1;
            entry.correct += usize::from(p == t);
        }
    }
    for e in out.values_mut() {
        e.accuracy = (e.total > 0).then(|| e.correct as f64 / e.total as f64);
    }
    Ok(out)
}

/// Maps type names to ids. With `strict`, a name outside the vocabulary is an
/// error; otherwise it resolves to `None` and is reported as absent.
pub fn resolve_type_set<S: AsRef<str>>(vocab: &Vocab, names: &[S], strict: bool) -> Result<Vec<(String, Option<u32>)>> {
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let name = name.as_ref();
        if vocab.contains(name) {
            out.push((name.into(), Some(vocab.encode(name))));
        } else if strict {
            let valid: Vec<&str> = vocab.tokens()[3..].iter().map(String::as_str).collect();
            return Err(Error::UnknownType { name: name.into(), valid: valid.join(", ") });
        } else {
            out.push((name.into(), None));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{PAD_ID, UNK_ID};
    use alloc::vec;

    const S: Specials = Specials { pad: 0, unk: 1, empty: 2 };

    #[test]
    fn perfect_predictions() {
        assert_eq!(top1_accuracy(&[3, 4, 5], &[3, 4, 5], S, Task::Value).unwrap(), 1.0);
    }

    #[test]
    fn unk_target_is_wrong_even_when_predicted() {
        assert_eq!(top1_accuracy(&[UNK_ID], &[UNK_ID], S, Task::Value).unwrap(), 0.0);
        // Types have no such rule.
        assert_eq!(top1_accuracy(&[UNK_ID], &[UNK_ID], S, Task::Type).unwrap(), 1.0);
    }

    #[test]
    fn hand_counted_mix() {
        // targets [a, b, UNK, c], argmax [a, x, UNK, c]
        let (a, b, c, x) = (3, 4, 5, 6);
        let acc = top1_accuracy(&[a, x, UNK_ID, c], &[a, b, UNK_ID, c], S, Task::Value).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn pads_are_skipped() {
        let acc = top1_counts(&[3, 9, 4], &[3, PAD_ID, 5], S, Task::Type).unwrap();
        assert_eq!(acc, Accuracy { correct: 1, total: 2 });
        assert!(top1_accuracy(&[1], &[1, 2], S, Task::Type).is_err());
    }

    #[test]
    fn improvement_values() {
        assert!((normalized_improvement(0.869, 0.806, 1.0).unwrap() - 0.325).abs() < 1e-3);
        assert!((normalized_improvement(0.732, 0.701, 0.89).unwrap() - 0.164).abs() < 1e-3);
        assert_eq!(normalized_improvement(0.4, 0.4, 0.9).unwrap(), 0.0);
        assert!((normalized_improvement(0.70, 0.80, 1.0).unwrap() + 0.125).abs() < 1e-12);
        assert!(matches!(normalized_improvement(0.9, 0.5, 0.8), Err(Error::Domain(_))));
        assert!(matches!(normalized_improvement(0.0, 0.0, 0.8), Ok(x) if x == 0.0));
    }

    #[test]
    fn improvement_is_continuous_at_equality() {
        let eps = 1e-12;
        let above = normalized_improvement(0.5 + eps, 0.5, 1.0).unwrap();
        let below = normalized_improvement(0.5 - eps, 0.5, 1.0).unwrap();
        assert!(above.abs() < 1e-9 && below.abs() < 1e-9);
    }

    #[test]
    fn per_type_counts() {
        let preds = [3, 3, 4, 5, 4, 6];
        let targets = [3, 4, 4, 5, 4, 3];
        let m = per_type_accuracy(&preds, &targets, &[3, 4, 7]).unwrap();
        assert_eq!(m[&3], TypeAccuracy { correct: 1, total: 2, accuracy: Some(0.5) });
        assert_eq!(m[&4].correct, 2);
        assert_eq!(m[&4].total, 3);
        assert_eq!(m[&7], TypeAccuracy { correct: 0, total: 0, accuracy: None });
        assert!(per_type_accuracy(&preds, &targets, &[]).is_err());
    }

    #[test]
    fn unknown_type_names() {
        let v = Vocab::from_tokens(vec!["<pad>".into(), "<unk>".into(), "EMPTY".into(), "IfStatement".into()], None)
            .unwrap();
        let err = resolve_type_set(&v, &["Nope"], true).unwrap_err();
        assert!(matches!(err, Error::UnknownType { ref valid, .. } if valid.contains("IfStatement")));
        let lenient = resolve_type_set(&v, &DIFFICULT_TYPES, false).unwrap();
        assert_eq!(lenient.iter().filter(|(_, id)| id.is_some()).count(), 1);
    }
}
