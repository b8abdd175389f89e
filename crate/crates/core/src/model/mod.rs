//! The network: node embeddings, the segment-recurrent self-attention
//! encoder, the bidirectional path-to-root encoder and the two task heads.

mod config;
mod encoder;
mod heads;
mod path;

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::corpus::PathIds;
use crate::error::{Error, Result};
use crate::params::{Init, ParamId, ParamStore};

pub use config::{check_alpha, Ablation, ModelConfig, Task};
pub use encoder::{relative_position_table, MemoryState};
pub use heads::{mtl_loss, PredictionDistribution};

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
struct LayerParams {
    w_q: ParamId,
    w_k: ParamId,
    w_v: ParamId,
    w_r: ParamId,
    content_bias: ParamId,
    position_bias: ParamId,
    w_o: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    ff1_w: ParamId,
    ff1_b: ParamId,
    ff2_w: ParamId,
    ff2_b: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

#[derive(Debug, Clone)]
struct LstmParams {
    w_x: ParamId,
    w_h: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct HeadParams {
    w_o: ParamId,
    w_y: ParamId,
    b_y: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    type_emb: ParamId,
    value_emb: ParamId,
    initial_hidden: ParamId,
    layers: Vec<LayerParams>,
    path: Option<(LstmParams, LstmParams)>,
    type_head: HeadParams,
    value_head: HeadParams,
}

/// Which head a forward pass should evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heads {
    pub type_head: bool,
    pub value_head: bool,
}

impl Heads {
    pub const BOTH: Heads = Heads { type_head: true, value_head: true };
}

/// One segment of one program as the model consumes it.
#[derive(Debug, Clone, Copy)]
pub struct SegmentInput<'a> {
    pub types: &'a [u32],
    pub values: &'a [u32],
    /// Present when the segment opens a program: the first node is predicted
    /// from the learned initial state with this (all-`PAD`) path.
    pub initial_path: Option<&'a PathIds>,
    /// Path of the node predicted after each input position.
    pub paths: &'a [PathIds],
}

/// Graph handles produced by [`Model::forward_segment`].
///
/// Logit rows are ordered: the initial query (if any), then one row per input.
#[derive(Debug, Clone)]
pub struct SegmentOutput {
    pub type_logits: Option<Var>,
    pub value_logits: Option<Var>,
    /// Input to every encoder layer, used to extend the memory.
    pub layer_inputs: Vec<Var>,
    pub top: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    ablation: Ablation,
    params: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fresh parameters: fan-in scaled uniform matrices, zero biases, unit
    /// layer-norm gains, all drawn from a ChaCha stream seeded with `config.seed`.
    pub fn new(config: ModelConfig, ablation: Ablation) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let h = config.hidden();
        let inner = config.n_heads * config.d_head;

        let type_emb = p.add("embed.type", config.type_vocab_size, config.d_type, Init::FanIn(config.d_type), &mut rng);
        let value_emb =
            p.add("embed.value", config.value_vocab_size, config.d_value, Init::FanIn(config.d_value), &mut rng);
        let initial_hidden = p.add("initial_hidden", 1, h, Init::Zeros, &mut rng);

        let layers = (0..config.n_layers)
            .map(|n| {
                let name = |s: &str| format!("layer{n}.{s}");
                LayerParams {
                    w_q: p.add(&name("attn.q"), h, inner, Init::FanIn(h), &mut rng),
                    w_k: p.add(&name("attn.k"), h, inner, Init::FanIn(h), &mut rng),
                    w_v: p.add(&name("attn.v"), h, inner, Init::FanIn(h), &mut rng),
                    w_r: p.add(&name("attn.r"), h, inner, Init::FanIn(h), &mut rng),
                    content_bias: p.add(&name("attn.content_bias"), 1, inner, Init::Zeros, &mut rng),
                    position_bias: p.add(&name("attn.position_bias"), 1, inner, Init::Zeros, &mut rng),
                    w_o: p.add(&name("attn.o"), inner, h, Init::FanIn(inner), &mut rng),
                    ln1_gain: p.add(&name("ln1.gain"), 1, h, Init::Ones, &mut rng),
                    ln1_bias: p.add(&name("ln1.bias"), 1, h, Init::Zeros, &mut rng),
                    ff1_w: p.add(&name("ff1.w"), h, config.d_ff, Init::FanIn(h), &mut rng),
                    ff1_b: p.add(&name("ff1.b"), 1, config.d_ff, Init::Zeros, &mut rng),
                    ff2_w: p.add(&name("ff2.w"), config.d_ff, h, Init::FanIn(config.d_ff), &mut rng),
                    ff2_b: p.add(&name("ff2.b"), 1, h, Init::Zeros, &mut rng),
                    ln2_gain: p.add(&name("ln2.gain"), 1, h, Init::Ones, &mut rng),
                    ln2_bias: p.add(&name("ln2.bias"), 1, h, Init::Zeros, &mut rng),
                }
            })
            .collect();

        let path = ablation.use_path.then(|| {
            let hd = config.path_dim / 2;
            let mut lstm = |dir: &str| LstmParams {
                w_x: p.add(&format!("path.{dir}.w_x"), config.d_type, 4 * hd, Init::FanIn(config.d_type), &mut rng),
                w_h: p.add(&format!("path.{dir}.w_h"), hd, 4 * hd, Init::FanIn(hd), &mut rng),
                bias: p.add(&format!("path.{dir}.bias"), 1, 4 * hd, Init::Zeros, &mut rng),
            };
            let fwd = lstm("fwd");
            let bwd = lstm("bwd");
            (fwd, bwd)
        });

        let head_in = if ablation.use_path { h + config.path_dim } else { h };
        let mut head = |task: &str, vocab: usize| HeadParams {
            w_o: p.add(&format!("head.{task}.w_o"), head_in, h, Init::FanIn(head_in), &mut rng),
            w_y: p.add(&format!("head.{task}.w_y"), h, vocab, Init::FanIn(h), &mut rng),
            b_y: p.add(&format!("head.{task}.b_y"), 1, vocab, Init::Zeros, &mut rng),
        };
        let type_head = head("type", config.type_vocab_size);
        let value_head = head("value", config.value_vocab_size);

        let layout = Layout { type_emb, value_emb, initial_hidden, layers, path, type_head, value_head };
        Ok(Self { config, ablation, params: p, layout })
    }

    /// Rebuilds a model and replaces its parameters with `params`.
    pub fn from_params(config: ModelConfig, ablation: Ablation, params: &ParamStore) -> Result<Self> {
        let mut m = Self::new(config, ablation)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Heads that take part in training under the current ablation and weights.
    pub fn trained_heads(&self) -> Heads {
        if self.ablation.use_mtl {
            Heads::BOTH
        } else {
            Heads {
                type_head: self.ablation.single_task == Task::Type,
                value_head: self.ablation.single_task == Task::Value,
            }
        }
    }

    /// Parameter ids grouped by component, for diagnostics and gradient checks.
    pub fn param_groups(&self) -> Vec<(&'static str, Vec<ParamId>)> {
        let l = &self.layout;
        let mut groups = Vec::new();
        groups.push(("embeddings", alloc::vec![l.type_emb, l.value_emb, l.initial_hidden]));
        let mut attn = Vec::new();
        let mut ff = Vec::new();
        for layer in &l.layers {
            attn.extend([
                layer.w_q,
                layer.w_k,
                layer.w_v,
                layer.w_r,
                layer.content_bias,
                layer.position_bias,
                layer.w_o,
            ]);
            ff.extend([
                layer.ln1_gain,
                layer.ln1_bias,
                layer.ff1_w,
                layer.ff1_b,
                layer.ff2_w,
                layer.ff2_b,
                layer.ln2_gain,
                layer.ln2_bias,
            ]);
        }
        groups.push(("attention", attn));
        groups.push(("feed_forward", ff));
        if let Some((f, b)) = &l.path {
            groups.push(("path_encoder", alloc::vec![f.w_x, f.w_h, f.bias, b.w_x, b.w_h, b.bias]));
        }
        let heads = [&l.type_head, &l.value_head].iter().flat_map(|h| [h.w_o, h.w_y, h.b_y]).collect();
        groups.push(("heads", heads));
        groups
    }

    pub(crate) fn check_type_id(&self, id: u32) -> Result<()> {
        if id as usize >= self.config.type_vocab_size {
            return Err(Error::Index { index: id as usize, len: self.config.type_vocab_size });
        }
        Ok(())
    }

    pub(crate) fn check_value_id(&self, id: u32) -> Result<()> {
        if id as usize >= self.config.value_vocab_size {
            return Err(Error::Index { index: id as usize, len: self.config.value_vocab_size });
        }
        Ok(())
    }

    /// `[type embedding; value embedding]` for one node.
    pub fn embed(&self, type_id: u32, value_id: u32) -> Result<Vec<f64>> {
        self.check_type_id(type_id)?;
        self.check_value_id(value_id)?;
        let mut v = self.params.get(self.layout.type_emb).row(type_id as usize).to_vec();
        v.extend_from_slice(self.params.get(self.layout.value_emb).row(value_id as usize));
        Ok(v)
    }

    /// Node vectors of a sequence on the tape.
    pub fn embed_sequence(&self, g: &mut Graph, types: &[u32], values: &[u32]) -> Result<Var> {
        if types.len() != values.len() {
            return Err(Error::Shape(format!("{} types vs {} values", types.len(), values.len())));
        }
        for (&t, &v) in types.iter().zip(values) {
            self.check_type_id(t)?;
            self.check_value_id(v)?;
        }
        let t_ids: Vec<usize> = types.iter().map(|&t| t as usize).collect();
        let v_ids: Vec<usize> = values.iter().map(|&v| v as usize).collect();
        let t = g.gather(self.layout.type_emb, &t_ids);
        let v = g.gather(self.layout.value_emb, &v_ids);
        Ok(g.concat_cols(&[t, v]))
    }

    /// Full forward pass over one segment.
    ///
    /// `memory` holds one optional `(≤ M) × H` node per layer; pass detached
    /// values (see [`MemoryState::to_graph`]) in normal operation.
    pub fn forward_segment(
        &self,
        g: &mut Graph,
        input: SegmentInput<'_>,
        memory: &[Option<Var>],
        heads: Heads,
    ) -> Result<SegmentOutput> {
        let expected_paths = input.types.len();
        if input.paths.len() != expected_paths {
            return Err(Error::Shape(format!("{} paths for {} inputs", input.paths.len(), expected_paths)));
        }
        if input.types.len() > self.config.segment_len {
            return Err(Error::Shape(format!(
                "segment of {} exceeds L = {}",
                input.types.len(),
                self.config.segment_len
            )));
        }
        let (top, layer_inputs) = if input.types.is_empty() {
            (None, Vec::new())
        } else {
            let x = self.embed_sequence(g, input.types, input.values)?;
            let (top, inputs) = self.encode(g, x, memory)?;
            (Some(top), inputs)
        };

        let mut hidden_parts = Vec::new();
        if input.initial_path.is_some() {
            hidden_parts.push(g.param(self.layout.initial_hidden));
        }
        hidden_parts.extend(top);
        if hidden_parts.is_empty() {
            return Ok(SegmentOutput { type_logits: None, value_logits: None, layer_inputs, top });
        }
        let hidden = if hidden_parts.len() == 1 { hidden_parts[0] } else { g.concat_rows(&hidden_parts) };

        let path_vec = if self.ablation.use_path {
            let mut all: Vec<&PathIds> = Vec::with_capacity(input.paths.len() + 1);
            all.extend(input.initial_path);
            all.extend(input.paths.iter());
            Some(self.encode_paths(g, &all)?)
        } else {
            None
        };

        let type_logits = heads.type_head.then(|| self.head_logits(g, Task::Type, hidden, path_vec));
        let value_logits = heads.value_head.then(|| self.head_logits(g, Task::Value, hidden, path_vec));
        Ok(SegmentOutput { type_logits, value_logits, layer_inputs, top })
    }

    /// Distributions for the node following `types`/`values`, whose ancestors
    /// are `path`. The context is consumed segment by segment as in training.
    pub fn next_distribution(&self, types: &[u32], values: &[u32], path: &PathIds) -> Result<PredictionDistribution> {
        if types.len() != values.len() {
            return Err(Error::Shape(format!("{} types vs {} values", types.len(), values.len())));
        }
        if path.ids.len() != self.config.path_len {
            return Err(Error::Shape(format!("path of length {} (m = {})", path.ids.len(), self.config.path_len)));
        }
        let l = self.config.segment_len;
        let empty = PathIds::empty(self.config.path_len);
        let mut memory = MemoryState::empty(self.config.n_layers);
        let mut start = 0;
        loop {
            let end = (start + l).min(types.len());
            let last = end == types.len();
            let mut paths = alloc::vec![empty.clone(); end - start];
            if let (true, Some(p)) = (last, paths.last_mut()) {
                *p = path.clone();
            }
            let mut g = Graph::new(&self.params);
            let mem = memory.to_graph(&mut g);
            let input = SegmentInput {
                types: &types[start..end],
                values: &values[start..end],
                initial_path: types.is_empty().then_some(path),
                paths: &paths,
            };
            let heads = if last { Heads::BOTH } else { Heads { type_head: false, value_head: false } };
            let out = self.forward_segment(&mut g, input, &mem, heads)?;
            if last {
                let (t, v) =
                    (g.value(out.type_logits.expect("type head")), g.value(out.value_logits.expect("value head")));
                let row = t.rows() - 1;
                return Ok(PredictionDistribution {
                    type_probs: crate::tensor::softmax(t.row(row)),
                    value_probs: crate::tensor::softmax(v.row(row)),
                });
            }
            memory = if self.ablation.use_recurrence {
                let inputs: Vec<_> = out.layer_inputs.iter().map(|&v| g.value(v).clone()).collect();
                memory.advance(&inputs, self.config.mem_len)?
            } else {
                MemoryState::empty(self.config.n_layers)
            };
            start = end;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests;
