use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{segment_stream, Fingerprints, SegmentBatch, SegmentRow, Shard};
use super::evaluate::predict;
use super::optim::Adam;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::eval::{is_correct, Accuracy};
use crate::model::{check_alpha, Ablation, Heads, MemoryState, Model, ModelConfig, SegmentInput, Task};
use crate::tensor::{argmax, Matrix};
use crate::vocab::{Specials, EMPTY_ID, PAD_ID, UNK_ID};

pub(crate) const SPECIALS: Specials = Specials { pad: PAD_ID, unk: UNK_ID, empty: EMPTY_ID };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Epochs between periodic checkpoints.
    pub checkpoint_every: usize,
    pub ablation: Ablation,
    pub seed: u64,
    /// Visit programs in a fresh random order every epoch.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
            checkpoint_every: 1,
            ablation: Ablation::default(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("epochs", self.epochs), ("batch_size", self.batch_size), ("checkpoint_every", self.checkpoint_every)]
        {
            if v == 0 {
                return Err(Error::Config(alloc::format!("{name} must be positive")));
            }
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("eps", self.eps), ("clip_norm", self.clip_norm)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(alloc::format!("{name} must be positive")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(alloc::format!("{name} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Loss weights actually applied: the configured ones under multi-task
/// training, otherwise all weight on the single trained task.
pub fn effective_alpha(config: &ModelConfig, ablation: Ablation) -> [f64; 2] {
    if ablation.use_mtl {
        config.alpha
    } else {
        match ablation.single_task {
            Task::Type => [1.0, 0.0],
            Task::Value => [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub type_counts: Accuracy,
    pub value_counts: Accuracy,
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    /// Accuracy of the predictions made during the epoch, before each update.
    pub train_type_accuracy: Option<f64>,
    pub train_value_accuracy: Option<f64>,
    pub mean_grad_norm: f64,
    pub valid_loss: Option<f64>,
    pub valid_type_accuracy: Option<f64>,
    pub valid_value_accuracy: Option<f64>,
}

/// Hooks called by [`train`], typically to write logs and checkpoints.
pub trait TrainObserver {
    /// Called after every epoch. `best` is set when the validation loss
    /// improved; `checkpoint` when a periodic checkpoint is due.
    fn on_epoch(&mut self, metrics: &EpochMetrics, model: &Model, best: bool, checkpoint: bool) -> Result<()>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopObserver;

impl TrainObserver for NoopObserver {
    fn on_epoch(&mut self, _: &EpochMetrics, _: &Model, _: bool, _: bool) -> Result<()> {
        Ok(())
    }
}

/// Logits and targets for the active rows of one batch.
pub(crate) struct BatchForward {
    pub type_logits: Option<Var>,
    pub value_logits: Option<Var>,
    pub type_targets: Vec<Option<usize>>,
    pub value_targets: Vec<Option<usize>>,
    /// `(program, flat position)` of every logit row; `None` for masked rows.
    pub queries: Vec<Option<(usize, usize)>>,
    /// Per batch row, the encoder layer inputs of its segment.
    pub layer_inputs: Vec<Vec<Var>>,
}

/// Runs every active row of `batch` through `model` on one tape.
pub(crate) fn forward_batch(
    model: &Model,
    g: &mut Graph,
    batch: &SegmentBatch,
    memories: &[MemoryState],
    heads: Heads,
) -> Result<BatchForward> {
    let mut type_parts = Vec::new();
    let mut value_parts = Vec::new();
    let mut out = BatchForward {
        type_logits: None,
        value_logits: None,
        type_targets: Vec::new(),
        value_targets: Vec::new(),
        queries: Vec::new(),
        layer_inputs: vec![Vec::new(); batch.rows.len()],
    };
    for (r, row) in batch.rows.iter().enumerate() {
        let Some(program) = row.program else { continue };
        let mem = memories[r].to_graph(g);
        let input = SegmentInput {
            types: &row.input_types[..row.len],
            values: &row.input_values[..row.len],
            initial_path: row.initial.as_ref().map(|i| &i.path),
            paths: &row.paths[..row.len],
        };
        let seg = model.forward_segment(g, input, &mem, heads)?;
        type_parts.extend(seg.type_logits);
        value_parts.extend(seg.value_logits);
        out.layer_inputs[r] = seg.layer_inputs;
        push_targets(&mut out, program, row);
    }
    let cat = |g: &mut Graph, parts: &[Var]| match parts {
        [] => None,
        [one] => Some(*one),
        _ => Some(g.concat_rows(parts)),
    };
    out.type_logits = cat(g, &type_parts);
    out.value_logits = cat(g, &value_parts);
    Ok(out)
}

fn push_targets(out: &mut BatchForward, program: usize, row: &SegmentRow) {
    if let Some(init) = &row.initial {
        out.type_targets.push(Some(init.target_type as usize));
        out.value_targets.push(Some(init.target_value as usize));
        out.queries.push(Some((program, 0)));
    }
    for t in 0..row.len {
        if row.mask[t] {
            out.type_targets.push(Some(row.target_types[t] as usize));
            out.value_targets.push(Some(row.target_values[t] as usize));
            out.queries.push(Some((program, row.start + t + 1)));
        } else {
            out.type_targets.push(None);
            out.value_targets.push(None);
            out.queries.push(None);
        }
    }
}

/// Memory each row starts its next segment with.
pub(crate) fn next_memories(
    model: &Model,
    g: &Graph,
    batch: &SegmentBatch,
    memories: &[MemoryState],
    layer_inputs: &[Vec<Var>],
) -> Result<Vec<MemoryState>> {
    let n_layers = model.config().n_layers;
    batch
        .rows
        .iter()
        .zip(memories)
        .zip(layer_inputs)
        .map(|((row, mem), inputs)| {
            if row.program.is_none() || !model.ablation().use_recurrence {
                return Ok(MemoryState::empty(n_layers));
            }
            let values: Vec<Matrix> = inputs.iter().map(|&v| g.value(v).clone()).collect();
            mem.advance(&values, model.config().mem_len)
        })
        .collect()
}

/// Memory state before a batch: emptied at program starts and, without
/// recurrence, before every segment.
pub(crate) fn reset_memories(model: &Model, batch: &SegmentBatch, memories: &mut Vec<MemoryState>) {
    let n_layers = model.config().n_layers;
    memories.resize(batch.rows.len(), MemoryState::empty(n_layers));
    for (row, mem) in batch.rows.iter().zip(memories.iter_mut()) {
        if row.reset || !model.ablation().use_recurrence {
            *mem = MemoryState::empty(n_layers);
        }
    }
}

fn count_correct(g: &Graph, logits: Option<Var>, targets: &[Option<usize>], task: Task) -> Accuracy {
    let mut acc = Accuracy::default();
    let Some(l) = logits else { return acc };
    let m = g.value(l);
    for (r, t) in targets.iter().enumerate() {
        if let Some(t) = *t {
            if let Some(ok) = is_correct(argmax(m.row(r)) as u32, t as u32, SPECIALS, task) {
                acc.record(ok);
            }
        }
    }
    acc
}

/// Optimizer state and per-row memory for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    config: TrainConfig,
    adam: Adam,
    memories: Vec<MemoryState>,
    rng: ChaCha8Rng,
    epoch: usize,
    step: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if model.ablation() != config.ablation {
            return Err(Error::Config("model ablation differs from the training configuration".into()));
        }
        check_alpha(effective_alpha(model.config(), config.ablation))?;
        let adam = Adam::new(model.params(), config.learning_rate, config.beta1, config.beta2, config.eps);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { model, config, adam, memories: Vec::new(), rng, epoch: 0, step: 0 })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn alpha(&self) -> [f64; 2] {
        effective_alpha(self.model.config(), self.config.ablation)
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One optimizer update on `batch`, carrying memory from the previous batch.
    pub fn step(&mut self, batch: &SegmentBatch) -> Result<StepReport> {
        reset_memories(&self.model, batch, &mut self.memories);
        let heads = self.model.trained_heads();
        let alpha = self.alpha();
        let count = batch.num_targets();

        let mut g = Graph::new(self.model.params());
        let fwd = forward_batch(&self.model, &mut g, batch, &self.memories, heads)?;
        let type_counts = count_correct(&g, fwd.type_logits, &fwd.type_targets, Task::Type);
        let value_counts = count_correct(&g, fwd.value_logits, &fwd.value_targets, Task::Value);
        let next = next_memories(&self.model, &g, batch, &self.memories, &fwd.layer_inputs)?;
        let loss_var = self.model.loss(
            &mut g,
            fwd.type_logits,
            fwd.value_logits,
            &fwd.type_targets,
            &fwd.value_targets,
            alpha,
            count,
        )?;
        let Some(loss_var) = loss_var else {
            self.memories = next;
            self.step += 1;
            return Ok(StepReport { loss: 0.0, grad_norm: 0.0, type_counts, value_counts, targets: 0 });
        };
        let loss = g.value(loss_var).get(0, 0);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: self.epoch, step: self.step, loss });
        }
        let mut grads = g.backward(loss_var).params;
        drop(g);
        let grad_norm = grads.clip_global_norm(self.config.clip_norm);
        if !grad_norm.is_finite() {
            return Err(Error::Divergence { epoch: self.epoch, step: self.step, loss: grad_norm });
        }
        self.adam.step(self.model.params_mut(), &grads);
        self.memories = next;
        self.step += 1;
        Ok(StepReport { loss, grad_norm, type_counts, value_counts, targets: count })
    }

    /// Program visiting order for the next epoch.
    fn epoch_order(&mut self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.config.shuffle {
            order.shuffle(&mut self.rng);
        }
        order
    }

    /// One pass over `shard`; returns the training half of the epoch metrics.
    pub fn run_epoch(&mut self, shard: &Shard, expected: &Fingerprints) -> Result<EpochMetrics> {
        if shard.programs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if shard.path_len != self.model.config().path_len {
            return Err(Error::Config(alloc::format!(
                "shard paths have m = {}, model expects {}",
                shard.path_len,
                self.model.config().path_len
            )));
        }
        let order = self.epoch_order(shard.programs.len());
        let stream =
            segment_stream(shard, expected, self.model.config().segment_len, self.config.batch_size, Some(&order))?;
        self.memories.clear();
        self.step = 0;
        let heads = self.model.trained_heads();
        let mut loss_sum = 0.0;
        let mut targets = 0usize;
        let mut norm_sum = 0.0;
        let mut steps = 0usize;
        let mut type_acc = Accuracy::default();
        let mut value_acc = Accuracy::default();
        for batch in stream {
            let r = self.step(&batch)?;
            loss_sum += r.loss * r.targets as f64;
            targets += r.targets;
            norm_sum += r.grad_norm;
            steps += 1;
            type_acc.merge(r.type_counts);
            value_acc.merge(r.value_counts);
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            steps,
            train_loss: if targets == 0 { 0.0 } else { loss_sum / targets as f64 },
            train_type_accuracy: heads.type_head.then(|| type_acc.fraction()),
            train_value_accuracy: heads.value_head.then(|| value_acc.fraction()),
            mean_grad_norm: if steps == 0 { 0.0 } else { norm_sum / steps as f64 },
            valid_loss: None,
            valid_type_accuracy: None,
            valid_value_accuracy: None,
        };
        self.epoch += 1;
        Ok(metrics)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Epoch and parameters with the lowest validation loss.
    pub best: Option<(usize, Model)>,
    pub log: Vec<EpochMetrics>,
}

/// Trains a fresh model on `train_shard`, scoring `valid_shard` after every epoch.
pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_shard: &Shard,
    valid_shard: Option<&Shard>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let model = Model::new(model_config.clone(), train_config.ablation)?;
    let mut trainer = Trainer::new(model, train_config.clone())?;
    let expected = train_shard.fingerprints.clone();
    if let Some(v) = valid_shard {
        v.fingerprints.check(&expected)?;
    }
    let mut log = Vec::with_capacity(train_config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;
    for epoch in 0..train_config.epochs {
        let mut m = trainer.run_epoch(train_shard, &expected)?;
        let mut improved = false;
        if let Some(v) = valid_shard {
            let p = predict(trainer.model(), v, &expected)?;
            let heads = trainer.model().trained_heads();
            m.valid_loss = Some(p.loss);
            m.valid_type_accuracy = heads.type_head.then(|| p.accuracy(Task::Type));
            m.valid_value_accuracy = heads.value_head.then(|| p.accuracy(Task::Value));
            if best.as_ref().is_none_or(|(_, l, _)| p.loss < *l) {
                best = Some((epoch, p.loss, trainer.model().clone()));
                improved = true;
            }
        }
        let checkpoint = (epoch + 1) % train_config.checkpoint_every == 0 || epoch + 1 == train_config.epochs;
        observer.on_epoch(&m, trainer.model(), improved, checkpoint)?;
        log.push(m);
    }
    Ok(TrainOutcome { model: trainer.into_model(), best: best.map(|(e, _, m)| (e, m)), log })
}

/// One row of a loss-weight sweep; `None` marks a task with zero weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: [f64; 2],
    pub type_accuracy: Option<f64>,
    pub value_accuracy: Option<f64>,
    pub valid_loss: f64,
}

/// Trains one model per weight setting and scores each on `valid_shard`.
pub fn weight_sweep(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_shard: &Shard,
    valid_shard: &Shard,
    grid: &[[f64; 2]],
) -> Result<Vec<SweepRow>> {
    for &alpha in grid {
        check_alpha(alpha)?;
    }
    let mut train_config = train_config.clone();
    train_config.ablation.use_mtl = true;
    grid.iter()
        .map(|&alpha| {
            let cfg = ModelConfig { alpha, ..model_config.clone() };
            let out = train(&cfg, &train_config, train_shard, None, &mut NoopObserver)?;
            let p = predict(&out.model, valid_shard, &train_shard.fingerprints)?;
            Ok(SweepRow {
                alpha,
                type_accuracy: (alpha[0] > 0.0).then(|| p.accuracy(Task::Type)),
                value_accuracy: (alpha[1] > 0.0).then(|| p.accuracy(Task::Value)),
                valid_loss: p.loss,
            })
        })
        .collect()
}
