//! Bidirectional LSTM over the ancestor types of the predicted node.

use alloc::vec::Vec;

use super::{LstmParams, Model};
use crate::autograd::{Graph, Var};
use crate::corpus::PathIds;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

impl Model {
    /// Encodes a batch of paths into `n × H_p` vectors.
    ///
    /// Each direction reads only the first `true_length` slots (the forward
    /// pass nearest ancestor first, the backward pass root end first); the
    /// two final states are concatenated. An all-`PAD` path maps to zeros.
    pub fn encode_paths(&self, g: &mut Graph, paths: &[&PathIds]) -> Result<Var> {
        let (fwd, bwd) =
            self.layout.path.as_ref().ok_or_else(|| Error::Config("model was built without a path encoder".into()))?;
        let m = self.config.path_len;
        for p in paths {
            if p.ids.len() != m {
                return Err(Error::Shape(alloc::format!("path of length {} (m = {m})", p.ids.len())));
            }
            if p.true_length > m {
                return Err(Error::Shape(alloc::format!("true length {} exceeds m = {m}", p.true_length)));
            }
            for &id in &p.ids {
                self.check_type_id(id)?;
            }
        }
        let forward_order: Vec<usize> = (0..m).collect();
        let backward_order: Vec<usize> = (0..m).rev().collect();
        let hf = self.run_lstm(g, fwd, paths, &forward_order);
        let hb = self.run_lstm(g, bwd, paths, &backward_order);
        Ok(g.concat_cols(&[hf, hb]))
    }

    fn run_lstm(&self, g: &mut Graph, p: &LstmParams, paths: &[&PathIds], order: &[usize]) -> Var {
        let hd = self.config.path_dim / 2;
        let n = paths.len();
        let mut h = g.constant(Matrix::zeros(n, hd));
        let mut c = g.constant(Matrix::zeros(n, hd));
        let w_x = g.param(p.w_x);
        let w_h = g.param(p.w_h);
        let bias = g.param(p.bias);
        for &slot in order {
            let mask: Vec<bool> = paths.iter().map(|p| slot < p.true_length).collect();
            if !mask.iter().any(|&b| b) {
                continue;
            }
            let ids: Vec<usize> = paths.iter().map(|p| p.ids[slot] as usize).collect();
            let x = g.gather(self.layout.type_emb, &ids);
            let xw = g.matmul(x, w_x);
            let hw = g.matmul(h, w_h);
            let gates = g.add(xw, hw);
            let gates = g.add_row(gates, bias);
            let i = g.slice_cols(gates, 0, hd);
            let f = g.slice_cols(gates, hd, hd);
            let cand = g.slice_cols(gates, 2 * hd, hd);
            let o = g.slice_cols(gates, 3 * hd, hd);
            let i = g.sigmoid(i);
            let f = g.sigmoid(f);
            let cand = g.tanh(cand);
            let o = g.sigmoid(o);
            let keep = g.mul(f, c);
            let write = g.mul(i, cand);
            let c_next = g.add(keep, write);
            let squashed = g.tanh(c_next);
            let h_next = g.mul(o, squashed);
            h = g.select_rows(&mask, h_next, h);
            c = g.select_rows(&mask, c_next, c);
        }
        h
    }

    /// Path vectors outside a training graph, one row per path.
    pub fn path_encode(&self, paths: &[PathIds]) -> Result<Matrix> {
        let mut g = Graph::new(&self.params);
        let refs: Vec<&PathIds> = paths.iter().collect();
        let v = self.encode_paths(&mut g, &refs)?;
        Ok(g.value(v).clone())
    }
}
