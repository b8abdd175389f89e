//! Task-specific output layers and the weighted multi-task loss.

use alloc::vec::Vec;

use super::{check_alpha, Model, Task};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{softmax, Matrix};

/// Next-node distributions over both vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    pub type_probs: Vec<f64>,
    pub value_probs: Vec<f64>,
}

impl Model {
    /// `softmax(W_y tanh(W_o [hidden; path]) + b_y)` logits on the tape.
    pub fn head_logits(&self, g: &mut Graph, task: Task, hidden: Var, path: Option<Var>) -> Var {
        let head = match task {
            Task::Type => &self.layout.type_head,
            Task::Value => &self.layout.value_head,
        };
        let input = match path {
            Some(p) => g.concat_cols(&[hidden, p]),
            None => hidden,
        };
        let w_o = g.param(head.w_o);
        let w_y = g.param(head.w_y);
        let b_y = g.param(head.b_y);
        let o = g.matmul(input, w_o);
        let o = g.tanh(o);
        let logits = g.matmul(o, w_y);
        g.add_row(logits, b_y)
    }

    /// Both distributions for a single position.
    ///
    /// `path_vec` must be given exactly when the model has a path encoder.
    pub fn predict_heads(&self, hidden: &[f64], path_vec: Option<&[f64]>) -> Result<PredictionDistribution> {
        let h = self.config.hidden();
        if hidden.len() != h {
            return Err(Error::Shape(alloc::format!("hidden state of width {}, expected {h}", hidden.len())));
        }
        match (self.ablation.use_path, path_vec) {
            (true, Some(p)) if p.len() == self.config.path_dim => {}
            (true, Some(p)) => {
                return Err(Error::Shape(alloc::format!(
                    "path vector of width {}, expected {}",
                    p.len(),
                    self.config.path_dim
                )))
            }
            (true, None) => return Err(Error::Shape("model expects a path vector".into())),
            (false, Some(_)) => return Err(Error::Shape("model was built without a path encoder".into())),
            (false, None) => {}
        }
        let mut g = Graph::new(&self.params);
        let hv = g.constant(Matrix::row_vector(hidden.to_vec()));
        let pv = path_vec.map(|p| g.constant(Matrix::row_vector(p.to_vec())));
        let t = self.head_logits(&mut g, Task::Type, hv, pv);
        let v = self.head_logits(&mut g, Task::Value, hv, pv);
        Ok(PredictionDistribution { type_probs: softmax(g.value(t).row(0)), value_probs: softmax(g.value(v).row(0)) })
    }

    /// `α_type · CE_type + α_value · CE_value`, each averaged over `count`
    /// positions, on the tape. Heads whose logits are `None` contribute nothing.
    #[allow(clippy::too_many_arguments)]
    pub fn loss(
        &self,
        g: &mut Graph,
        type_logits: Option<Var>,
        value_logits: Option<Var>,
        type_targets: &[Option<usize>],
        value_targets: &[Option<usize>],
        alpha: [f64; 2],
        count: usize,
    ) -> Result<Option<Var>> {
        check_alpha(alpha)?;
        if count == 0 {
            return Ok(None);
        }
        let denom = count as f64;
        let mut terms = Vec::new();
        if let Some(t) = type_logits {
            let ce = g.softmax_xent(t, type_targets);
            terms.push(g.scale(ce, alpha[0] / denom));
        }
        if let Some(v) = value_logits {
            let ce = g.softmax_xent(v, value_targets);
            terms.push(g.scale(ce, alpha[1] / denom));
        }
        let mut acc = match terms.first() {
            Some(&t) => t,
            None => return Ok(None),
        };
        for &t in &terms[1..] {
            acc = g.add(acc, t);
        }
        Ok(Some(acc))
    }
}

/// Weighted multi-task cross-entropy over probability rows, averaged over
/// positions that have a target.
///
/// Value targets equal to `UNK` are ordinary classes here; they only count
/// as wrong when scoring accuracy.
pub fn mtl_loss(
    dists: &[PredictionDistribution],
    targets: &[(Option<u32>, Option<u32>)],
    alpha: [f64; 2],
) -> Result<f64> {
    check_alpha(alpha)?;
    if dists.len() != targets.len() {
        return Err(Error::Shape(alloc::format!("{} distributions vs {} targets", dists.len(), targets.len())));
    }
    let mut type_sum = 0.0;
    let mut value_sum = 0.0;
    let mut type_n = 0usize;
    let mut value_n = 0usize;
    for (d, &(t, v)) in dists.iter().zip(targets) {
        if let Some(t) = t {
            let p = *d.type_probs.get(t as usize).ok_or(Error::Index { index: t as usize, len: d.type_probs.len() })?;
            type_sum -= libm::log(p);
            type_n += 1;
        }
        if let Some(v) = v {
            let p =
                *d.value_probs.get(v as usize).ok_or(Error::Index { index: v as usize, len: d.value_probs.len() })?;
            value_sum -= libm::log(p);
            value_n += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(alpha[0] * mean(type_sum, type_n) + alpha[1] * mean(value_sum, value_n))
}
