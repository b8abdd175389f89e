//! A reverse-mode autodiff tape over [`Matrix`] values.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward pass.
//! Every operation appends a node; [`Graph::backward`] walks the tape in
//! reverse and returns parameter gradients plus the gradient reaching every
//! node. Shapes are checked with assertions: the model layer validates user
//! input before it reaches the tape.

use alloc::vec;
use alloc::vec::Vec;

use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather { table: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { input: Var, start: usize },
    SliceRows { input: Var, start: usize },
    LayerNorm { input: Var, eps: f64 },
    RelShift { input: Var, mem_len: usize },
    CausalSoftmax { input: Var, mem_len: usize },
    Select { mask: Vec<bool>, on: Var, off: Var },
    StopGradient,
    SoftmaxXent { logits: Var, targets: Vec<Option<usize>> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub params: Gradients,
    nodes: Vec<Option<Matrix>>,
}

impl Backward {
    /// Gradient that reached `var`, or `None` if no path from the loss touched it.
    pub fn node(&self, var: Var) -> Option<&Matrix> {
        self.nodes[var.0].as_ref()
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new(), param_vars: vec![None; params.len()] }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Rows of a parameter table, one per id.
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> Var {
        let t = self.params.get(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        assert_eq!(self.value(a).cols(), self.value(b).rows(), "matmul shapes");
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).cols(), self.value(b).cols(), "matmul_nt shapes");
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(v, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((1, self.value(a).cols()), r.shape(), "add_row shapes");
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(r.data()) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!((1, self.value(a).cols()), r.shape(), "mul_row shapes");
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(r.data()) {
                *x *= y;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let (r, c) = self.value(a).shape();
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        self.push(Matrix::from_vec(r, c, data).expect("sized"), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols rows");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let refs: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::vstack(&refs).expect("concat_rows columns");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols(), "slice_cols range");
        let mut out = Matrix::zeros(m.rows(), len);
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { input: a, start })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.rows(), "slice_rows range");
        let out = m.slice_rows(start, len);
        self.push(out, Op::SliceRows { input: a, start })
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let m = self.value(a);
        let mut out = m.clone();
        for r in 0..m.rows() {
            let (mean, inv) = row_stats(m.row(r), eps);
            for x in out.row_mut(r) {
                *x = (*x - mean) * inv;
            }
        }
        self.push(out, Op::LayerNorm { input: a, eps })
    }

    /// Maps per-distance scores onto key columns.
    ///
    /// `a` is `q × k` where column `d` holds the score for query–key distance
    /// `d`. Query `i` sits at absolute position `mem_len + i`, so key `j`
    /// receives column `mem_len + i - j`; keys in the future get 0.
    pub fn rel_shift(&mut self, a: Var, mem_len: usize) -> Var {
        let m = self.value(a);
        let (q, k) = m.shape();
        assert!(mem_len + q <= k, "rel_shift needs k >= mem_len + q");
        let mut out = Matrix::zeros(q, k);
        for i in 0..q {
            for j in 0..=(mem_len + i) {
                out.set(i, j, m.get(i, mem_len + i - j));
            }
        }
        self.push(out, Op::RelShift { input: a, mem_len })
    }

    /// Row softmax where query `i` only sees keys `0..=mem_len + i`.
    pub fn causal_softmax(&mut self, a: Var, mem_len: usize) -> Var {
        let m = self.value(a);
        let (q, k) = m.shape();
        assert!(mem_len + q <= k, "causal_softmax needs k >= mem_len + q");
        let mut out = Matrix::zeros(q, k);
        for i in 0..q {
            let visible = mem_len + i + 1;
            let row = &m.row(i)[..visible];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = libm::exp(x - max);
                out.set(i, j, e);
                z += e;
            }
            for j in 0..visible {
                out.set(i, j, out.get(i, j) / z);
            }
        }
        self.push(out, Op::CausalSoftmax { input: a, mem_len })
    }

    /// Row-wise choice: rows where `mask` is set come from `on`, others from `off`.
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Var {
        let a = self.value(on);
        let b = self.value(off);
        assert_eq!(a.shape(), b.shape(), "select shapes");
        assert_eq!(mask.len(), a.rows(), "select mask length");
        let mut out = b.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(r).copy_from_slice(a.row(r));
            }
        }
        self.push(out, Op::Select { mask: mask.to_vec(), on, off })
    }

    /// Copies the value of `a` into a node that blocks gradient flow.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::StopGradient)
    }

    /// Summed softmax cross-entropy over rows with a target (`None` rows are masked).
    pub fn softmax_xent(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let m = self.value(logits);
        assert_eq!(m.rows(), targets.len(), "xent targets length");
        let mut total = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                total -= log_softmax_at(m.row(r), t);
            }
        }
        self.push(Matrix::filled(1, 1, total), Op::SoftmaxXent { logits, targets: targets.to_vec() })
    }

    /// Back-propagates from the `1 × 1` node `loss`.
    pub fn backward(&self, loss: Var) -> Backward {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        let mut pgrads = Gradients::zeros_like(self.params);
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::StopGradient => {}
                Op::Param(id) => pgrads.get_mut(*id).add_assign(&g),
                Op::Gather { table, ids } => {
                    let t = pgrads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, y) in t.row_mut(id).iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = g.matmul(self.value(*b));
                    let db = g.matmul_tn(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads, *row, column_sums(&g));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::MulRow(a, row) => {
                    let r = self.value(*row);
                    let x = self.value(*a);
                    let mut dr = Matrix::zeros(1, r.cols());
                    let mut da = g.clone();
                    for i in 0..g.rows() {
                        for c in 0..g.cols() {
                            dr.data_mut()[c] += g.get(i, c) * x.get(i, c);
                            da.set(i, c, g.get(i, c) * r.data()[c]);
                        }
                    }
                    accumulate(&mut grads, *row, dr);
                    accumulate(&mut grads, *a, da);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&g, self.value(*b), |d, y| d * y);
                    let db = zip_map(&g, self.value(*a), |d, x| d * x);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.map(|d| d * s)),
                Op::Tanh(a) => accumulate(&mut grads, *a, zip_map(&g, &node.value, |d, y| d * (1.0 - y * y))),
                Op::Sigmoid(a) => accumulate(&mut grads, *a, zip_map(&g, &node.value, |d, y| d * y * (1.0 - y))),
                Op::Relu(a) => {
                    accumulate(&mut grads, *a, zip_map(&g, &node.value, |d, y| if y > 0.0 { d } else { 0.0 }))
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        accumulate(&mut grads, p, g.slice_rows(offset, rows));
                        offset += rows;
                    }
                }
                Op::SliceCols { input, start } => {
                    let (rows, cols) = self.value(*input).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::SliceRows { input, start } => {
                    let (rows, cols) = self.value(*input).shape();
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..g.rows() {
                        d.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::LayerNorm { input, eps } => {
                    let x = self.value(*input);
                    let n = x.cols() as f64;
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let (_, inv) = row_stats(x.row(r), *eps);
                        let xhat = node.value.row(r);
                        let dy = g.row(r);
                        let sum_dy: f64 = dy.iter().sum();
                        let sum_dy_xhat = dot(dy, xhat);
                        for (c, out) in d.row_mut(r).iter_mut().enumerate() {
                            *out = inv / n * (n * dy[c] - sum_dy - xhat[c] * sum_dy_xhat);
                        }
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::RelShift { input, mem_len } => {
                    let (q, k) = g.shape();
                    let mut d = Matrix::zeros(q, k);
                    for i in 0..q {
                        for j in 0..=(mem_len + i) {
                            let c = mem_len + i - j;
                            d.set(i, c, d.get(i, c) + g.get(i, j));
                        }
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::CausalSoftmax { input, mem_len } => {
                    let y = &node.value;
                    let (q, k) = y.shape();
                    let mut d = Matrix::zeros(q, k);
                    for i in 0..q {
                        let visible = mem_len + i + 1;
                        let s: f64 = (0..visible).map(|j| y.get(i, j) * g.get(i, j)).sum();
                        for j in 0..visible {
                            d.set(i, j, y.get(i, j) * (g.get(i, j) - s));
                        }
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::Select { mask, on, off } => {
                    let mut d_on = Matrix::zeros(g.rows(), g.cols());
                    let mut d_off = Matrix::zeros(g.rows(), g.cols());
                    for (r, &m) in mask.iter().enumerate() {
                        let target = if m { &mut d_on } else { &mut d_off };
                        target.row_mut(r).copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *on, d_on);
                    accumulate(&mut grads, *off, d_off);
                }
                Op::SoftmaxXent { logits, targets } => {
                    let scale = g.get(0, 0);
                    let x = self.value(*logits);
                    let mut d = Matrix::zeros(x.rows(), x.cols());
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let p = crate::tensor::softmax(x.row(r));
                        for (c, (out, pc)) in d.row_mut(r).iter_mut().zip(p).enumerate() {
                            let onehot = if c == t { 1.0 } else { 0.0 };
                            *out = scale * (pc - onehot);
                        }
                    }
                    accumulate(&mut grads, *logits, d);
                }
            }
            grads[idx] = Some(g);
        }
        Backward { params: pgrads, nodes: grads }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn log_softmax_at(row: &[f64], t: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(row.iter().map(|&x| libm::exp(x - max)).sum::<f64>());
    row[t] - lse
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / libm::sqrt(var + eps))
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, x) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    out
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("sized")
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of every op against the tape.
    fn check(build: impl Fn(&mut Graph) -> Var, store: &mut ParamStore) {
        let analytic = {
            let mut g = Graph::new(store);
            let loss = build(&mut g);
            g.backward(loss).params
        };
        let h = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.get(id).data().len() {
                let orig = store.get(id).data()[k];
                store.get_mut(id).data_mut()[k] = orig + h;
                let plus = {
                    let mut g = Graph::new(store);
                    let l = build(&mut g);
                    g.value(l).get(0, 0)
                };
                store.get_mut(id).data_mut()[k] = orig - h;
                let minus = {
                    let mut g = Graph::new(store);
                    let l = build(&mut g);
                    g.value(l).get(0, 0)
                };
                store.get_mut(id).data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.get(id).data()[k];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + a.abs().max(numeric.abs())),
                    "{} [{}]: analytic {} numeric {}",
                    store.name(id),
                    k,
                    a,
                    numeric
                );
            }
        }
    }

    #[test]
    fn ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let a = store.add("a", 3, 4, Init::FanIn(1), &mut rng);
        let b = store.add("b", 4, 5, Init::FanIn(1), &mut rng);
        let row = store.add("row", 1, 5, Init::FanIn(1), &mut rng);
        let emb = store.add("emb", 6, 4, Init::FanIn(1), &mut rng);
        let c = store.add("c", 3, 5, Init::FanIn(1), &mut rng);
        check(
            |g| {
                let a = g.param(a);
                let b = g.param(b);
                let row = g.param(row);
                let e = g.gather(emb, &[1, 4, 1]);
                let ae = g.add(a, e);
                let x = g.matmul(ae, b);
                let x = g.add_row(x, row);
                let x = g.layer_norm(x, 1e-5);
                let x = g.mul_row(x, row);
                let t = g.tanh(x);
                let s = g.sigmoid(x);
                let ts = g.mul(t, s);
                let cv = g.param(c);
                let r = g.relu(cv);
                let sel = g.select_rows(&[true, false, true], ts, r);
                let cc = g.concat_cols(&[sel, cv]);
                let sc = g.slice_cols(cc, 2, 6);
                let cr = g.concat_rows(&[sc, sc]);
                let sr = g.slice_rows(cr, 1, 4);
                let q = g.slice_rows(sr, 0, 3);
                let nt = g.matmul_nt(q, sr);
                let sh = g.rel_shift(nt, 1);
                let sm = g.causal_softmax(sh, 1);
                let sm = g.scale(sm, 3.0);
                g.softmax_xent(sm, &[Some(0), None, Some(2)])
            },
            &mut store,
        );
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let a = store.add("a", 2, 3, Init::FanIn(3), &mut rng);
        let mut g = Graph::new(&store);
        let av = g.param(a);
        let t = g.tanh(av);
        let sg = g.stop_gradient(t);
        let loss = g.softmax_xent(sg, &[Some(0), Some(1)]);
        let back = g.backward(loss);
        assert!(back.node(sg).is_some());
        assert!(back.node(t).is_none());
        assert!(back.params.get(a).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn causal_softmax_rows_sum_to_one_over_visible_keys() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Matrix::from_vec(2, 4, alloc::vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap());
        let y = g.causal_softmax(x, 2);
        let v = g.value(y);
        assert_eq!(v.get(0, 3), 0.0);
        assert!((v.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((v.row(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
