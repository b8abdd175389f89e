//! Segment-recurrent self-attention with relative position scores.
//!
//! Queries come from the current segment only; keys and values are computed
//! from the layer input of the cached memory followed by the current segment.
//! The score between query `i` and key `j` is
//! `(q_i + u)·k_j + (q_i + v)·W_r R[dist]` with `dist` the absolute offset
//! between them, so cached states keep coherent positions across segments.

use alloc::vec::Vec;

use super::{LayerParams, Model, LN_EPS};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Detached per-layer cache of the most recent layer inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    layers: Vec<Matrix>,
    segments: usize,
}

impl MemoryState {
    pub fn empty(n_layers: usize) -> Self {
        Self { layers: alloc::vec![Matrix::default(); n_layers], segments: 0 }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// Number of cached positions (equal across layers).
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, Matrix::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Segments consumed since the last reset.
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Appends this segment's layer inputs and keeps the newest `mem_len` rows.
    pub fn advance(&self, layer_inputs: &[Matrix], mem_len: usize) -> Result<Self> {
        if layer_inputs.len() != self.layers.len() {
            return Err(Error::Shape(alloc::format!(
                "{} layer inputs for {} memory layers",
                layer_inputs.len(),
                self.layers.len()
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(layer_inputs)
            .map(|(old, new)| {
                if old.rows() == 0 {
                    return Ok(new.tail_rows(mem_len));
                }
                Ok(Matrix::vstack(&[old, new])?.tail_rows(mem_len))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, segments: self.segments + 1 })
    }

    /// Inserts the cache into `g` as constant leaves; no gradient reaches it.
    pub fn to_graph(&self, g: &mut Graph) -> Vec<Option<Var>> {
        self.layers.iter().map(|m| (m.rows() > 0).then(|| g.constant(m.clone()))).collect()
    }
}

/// Sinusoidal embeddings of distances `0..len`, `len × dim`.
pub fn relative_position_table(len: usize, dim: usize) -> Matrix {
    let mut r = Matrix::zeros(len, dim);
    for d in 0..len {
        for c in 0..dim {
            let k = (c / 2) as f64;
            let freq = 1.0 / libm::pow(10_000.0, 2.0 * k / dim as f64);
            let angle = d as f64 * freq;
            r.set(d, c, if c % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
        }
    }
    r
}

impl Model {
    /// Runs every layer over `x` (`q × H`), returning the top layer output
    /// and the input of each layer.
    pub fn encode(&self, g: &mut Graph, x: Var, memory: &[Option<Var>]) -> Result<(Var, Vec<Var>)> {
        let h = self.config.hidden();
        if g.value(x).cols() != h {
            return Err(Error::Shape(alloc::format!("inputs have width {}, expected {h}", g.value(x).cols())));
        }
        if memory.len() != self.config.n_layers {
            return Err(Error::Shape(alloc::format!(
                "memory has {} layers, model has {}",
                memory.len(),
                self.config.n_layers
            )));
        }
        let mut inputs = Vec::with_capacity(self.layout.layers.len());
        let mut cur = x;
        for (layer, mem) in self.layout.layers.iter().zip(memory) {
            if let Some(m) = mem {
                if g.value(*m).cols() != h {
                    return Err(Error::Shape("memory width differs from hidden size".into()));
                }
            }
            inputs.push(cur);
            cur = self.layer(g, layer, cur, *mem);
        }
        Ok((cur, inputs))
    }

    fn layer(&self, g: &mut Graph, p: &LayerParams, h: Var, mem: Option<Var>) -> Var {
        let cfg = &self.config;
        let q_len = g.value(h).rows();
        let mem_len = mem.map_or(0, |m| g.value(m).rows());
        let k_len = mem_len + q_len;
        let context = match mem {
            Some(m) => g.concat_rows(&[m, h]),
            None => h,
        };

        let w_q = g.param(p.w_q);
        let w_k = g.param(p.w_k);
        let w_v = g.param(p.w_v);
        let w_r = g.param(p.w_r);
        let q = g.matmul(h, w_q);
        let k = g.matmul(context, w_k);
        let v = g.matmul(context, w_v);
        let rel = g.constant(relative_position_table(k_len, cfg.hidden()));
        let r = g.matmul(rel, w_r);
        let u = g.param(p.content_bias);
        let pb = g.param(p.position_bias);
        let q_content = g.add_row(q, u);
        let q_position = g.add_row(q, pb);

        let scale = 1.0 / libm::sqrt(cfg.d_head as f64);
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let off = head * cfg.d_head;
            let qc = g.slice_cols(q_content, off, cfg.d_head);
            let qp = g.slice_cols(q_position, off, cfg.d_head);
            let kh = g.slice_cols(k, off, cfg.d_head);
            let vh = g.slice_cols(v, off, cfg.d_head);
            let rh = g.slice_cols(r, off, cfg.d_head);
            let content = g.matmul_nt(qc, kh);
            let by_distance = g.matmul_nt(qp, rh);
            let position = g.rel_shift(by_distance, mem_len);
            let scores = g.add(content, position);
            let scores = g.scale(scores, scale);
            let probs = g.causal_softmax(scores, mem_len);
            heads.push(g.matmul(probs, vh));
        }
        let attn = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let w_o = g.param(p.w_o);
        let attn = g.matmul(attn, w_o);
        let res = g.add(h, attn);
        let h1 = self.norm(g, res, p.ln1_gain, p.ln1_bias);

        let ff1_w = g.param(p.ff1_w);
        let ff1_b = g.param(p.ff1_b);
        let ff2_w = g.param(p.ff2_w);
        let ff2_b = g.param(p.ff2_b);
        let f = g.matmul(h1, ff1_w);
        let f = g.add_row(f, ff1_b);
        let f = g.relu(f);
        let f = g.matmul(f, ff2_w);
        let f = g.add_row(f, ff2_b);
        let res = g.add(h1, f);
        self.norm(g, res, p.ln2_gain, p.ln2_bias)
    }

    fn norm(&self, g: &mut Graph, x: Var, gain: crate::params::ParamId, bias: crate::params::ParamId) -> Var {
        let n = g.layer_norm(x, LN_EPS);
        let gain = g.param(gain);
        let bias = g.param(bias);
        let n = g.mul_row(n, gain);
        g.add_row(n, bias)
    }

    /// Forward pass of the encoder alone, outside any training graph.
    ///
    /// Returns the top-layer states (`q × H`) and the memory after this segment.
    pub fn encoder_forward(&self, segment: &Matrix, memory: &MemoryState) -> Result<(Matrix, MemoryState)> {
        let h = self.config.hidden();
        if segment.cols() != h {
            return Err(Error::Shape(alloc::format!("segment width {} differs from H = {h}", segment.cols())));
        }
        if segment.rows() > self.config.segment_len {
            return Err(Error::Shape(alloc::format!(
                "segment of {} exceeds L = {}",
                segment.rows(),
                self.config.segment_len
            )));
        }
        if memory.layers().len() != self.config.n_layers {
            return Err(Error::Shape("memory layer count differs from the model".into()));
        }
        if memory.layers().iter().any(|m| m.rows() > 0 && m.cols() != h) {
            return Err(Error::Shape("memory width differs from hidden size".into()));
        }
        let mut g = Graph::new(&self.params);
        let x = g.constant(segment.clone());
        let mem = memory.to_graph(&mut g);
        let (top, inputs) = self.encode(&mut g, x, &mem)?;
        let values: Vec<Matrix> = inputs.iter().map(|&v| g.value(v).clone()).collect();
        let next = memory.advance(&values, self.config.mem_len)?;
        Ok((g.value(top).clone(), next))
    }

    /// Builds the next memory inside the graph.
    ///
    /// With `detach` the cache passes through a stop-gradient node, which is
    /// what [`MemoryState::to_graph`] does implicitly. Turning it off lets a
    /// test observe the gradient that would otherwise leak into the previous
    /// segment.
    pub fn carry_memory(
        &self,
        g: &mut Graph,
        previous: &[Option<Var>],
        layer_inputs: &[Var],
        detach: bool,
    ) -> Vec<Option<Var>> {
        previous
            .iter()
            .zip(layer_inputs)
            .map(|(prev, &cur)| {
                let cat = match prev {
                    Some(p) => g.concat_rows(&[*p, cur]),
                    None => cur,
                };
                let rows = g.value(cat).rows();
                let keep = rows.min(self.config.mem_len);
                if keep == 0 {
                    return None;
                }
                let tail = if keep == rows { cat } else { g.slice_rows(cat, rows - keep, keep) };
                Some(if detach { g.stop_gradient(tail) } else { tail })
            })
            .collect()
    }
}
