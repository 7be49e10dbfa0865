//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A `Tape` records every operation eagerly: forward values are computed at
//! op-recording time and the backward pass replays the node list in reverse.
//! Tensors are flat row-major `Vec<f64>` buffers plus a shape. The op set is
//! exactly what the sequence models and the convolutional critic need; there
//! is no broadcasting beyond the few patterns encoded as dedicated ops.

use std::collections::BTreeMap;

use super::kernels;
use super::tensor::Tensor;
use super::EngineError;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    /// Trainable leaf; the name lives in `Tape::params`.
    Param,
    /// Constant leaf (no gradient is reported for it).
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// a * x + b, elementwise with scalar a and b; only `a` matters backward.
    Affine(Var, f64),
    /// (r x c) + (c,) broadcast over rows.
    AddBias(Var, Var),
    MatMul(Var, Var),
    /// Row lookup into a (v x d) table.
    GatherRows(Var, Vec<usize>),
    /// Column slice [lo, hi) of a rank-2 tensor.
    SliceCols(Var, usize, usize),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    /// Vertical repetition of the whole block, `times` copies.
    VTile(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    /// Multiply by a fixed 0 / (1/keep) mask (inverted dropout).
    DropoutMask(Var, Vec<f64>),
    RowSoftmax(Var),
    /// ctx[b,:] = sum_s w[b,s] * h[s*batch + b, :]; w is (batch x steps),
    /// h is step-major (steps*batch x c).
    AttnContext(Var, Var),
    SumAll(Var),
    MeanAll(Var),
    /// Sum over rows of label-smoothed cross-entropy from raw logits.
    CeLossSum(Var, Vec<usize>, f64),
    /// Binary cross-entropy from logits: the first `n_pos` rows have target 1,
    /// the rest target 0. Input is (r x 1); output is the summed loss.
    BceLogitsSplit(Var, usize),
    /// grid[i,j,:] = [u[i,:] ; v[j,:]] for u (s x d), v (t x d).
    PairGrid(Var, Var),
    /// 3x3 zero-padded conv + logistic over (s x t x c); inputs (x, w, b).
    Conv3x3Sigmoid(Var, Var, Var),
    /// Ceil-mode 2x2 max pool; saved argmax indices for the backward pass.
    MaxPool2x2(Var, Vec<usize>),
    /// Mean over the spatial positions of (s x t x f), yielding (1 x f).
    ChannelMean(Var),
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Gradients keyed by parameter name, as produced by [`Tape::backward`].
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node { op, shape, values });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        assert_eq!(self.nodes[v.0].values.len(), 1, "not a scalar node");
        self.nodes[v.0].values[0]
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let s = self.shape(v);
        assert_eq!(s.len(), 2, "expected a rank-2 tensor, got shape {s:?}");
        (s[0], s[1])
    }

    // ---- leaves ---------------------------------------------------------

    /// Register a named trainable leaf. Gradients are reported under `name`.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        let v = self.push(Op::Param, t.shape().to_vec(), t.values().to_vec());
        self.params.push((name.to_string(), v));
        v
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.values().to_vec())
    }

    pub fn constant_from(&mut self, shape: &[usize], values: Vec<f64>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(Op::Leaf, shape.to_vec(), values)
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Add(a, b), shape, vals)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Sub(a, b), shape, vals)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let vals: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(Op::Mul(a, b), shape, vals)
    }

    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        let vals: Vec<f64> = self.nodes[x.0].values.iter().map(|v| a * v + b).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Affine(x, a), shape, vals)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let vals: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .map(|&v| kernels::sigmoid(v))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Sigmoid(x), shape, vals)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let vals: Vec<f64> = self.nodes[x.0].values.iter().map(|v| v.tanh()).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::Tanh(x), shape, vals)
    }

    /// Apply a precomputed inverted-dropout mask (entries are 0 or 1/keep).
    pub fn dropout_mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        assert_eq!(mask.len(), self.nodes[x.0].values.len());
        let vals: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(Op::DropoutMask(x, mask), shape, vals)
    }

    // ---- linear algebra ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.rows_cols(a);
        let (k2, n) = self.rows_cols(b);
        assert_eq!(k, k2, "matmul inner dimension mismatch: {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(
            &mut out,
            &self.nodes[a.0].values,
            &self.nodes[b.0].values,
            m,
            k,
            n,
        );
        self.push(Op::MatMul(a, b), vec![m, n], out)
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (r, c) = self.rows_cols(x);
        assert_eq!(self.shape(bias), [c], "bias length mismatch");
        let mut vals = self.nodes[x.0].values.clone();
        for row in 0..r {
            for col in 0..c {
                vals[row * c + col] += self.nodes[bias.0].values[col];
            }
        }
        self.push(Op::AddBias(x, bias), vec![r, c], vals)
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let (v, d) = self.rows_cols(table);
        let mut vals = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < v, "row index {id} out of range {v}");
            vals.extend_from_slice(&self.nodes[table.0].values[id * d..(id + 1) * d]);
        }
        self.push(Op::GatherRows(table, ids.to_vec()), vec![ids.len(), d], vals)
    }

    pub fn slice_cols(&mut self, x: Var, lo: usize, hi: usize) -> Var {
        let (r, c) = self.rows_cols(x);
        assert!(lo < hi && hi <= c, "bad column slice {lo}..{hi} of {c}");
        let w = hi - lo;
        let mut vals = Vec::with_capacity(r * w);
        for row in 0..r {
            vals.extend_from_slice(&self.nodes[x.0].values[row * c + lo..row * c + hi]);
        }
        self.push(Op::SliceCols(x, lo, hi), vec![r, w], vals)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (r, ca) = self.rows_cols(a);
        let (r2, cb) = self.rows_cols(b);
        assert_eq!(r, r2, "concat_cols row mismatch");
        let mut vals = Vec::with_capacity(r * (ca + cb));
        for row in 0..r {
            vals.extend_from_slice(&self.nodes[a.0].values[row * ca..(row + 1) * ca]);
            vals.extend_from_slice(&self.nodes[b.0].values[row * cb..(row + 1) * cb]);
        }
        self.push(Op::ConcatCols(a, b), vec![r, ca + cb], vals)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ra, c) = self.rows_cols(a);
        let (rb, c2) = self.rows_cols(b);
        assert_eq!(c, c2, "concat_rows column mismatch");
        let mut vals = self.nodes[a.0].values.clone();
        vals.extend_from_slice(&self.nodes[b.0].values);
        self.push(Op::ConcatRows(a, b), vec![ra + rb, c], vals)
    }

    /// Stack `times` vertical copies of `x`.
    pub fn vtile(&mut self, x: Var, times: usize) -> Var {
        let (r, c) = self.rows_cols(x);
        let mut vals = Vec::with_capacity(times * r * c);
        for _ in 0..times {
            vals.extend_from_slice(&self.nodes[x.0].values);
        }
        self.push(Op::VTile(x, times), vec![times * r, c], vals)
    }

    pub fn row_softmax(&mut self, x: Var) -> Var {
        let (r, c) = self.rows_cols(x);
        let mut vals = self.nodes[x.0].values.clone();
        for row in 0..r {
            kernels::softmax_row(&mut vals[row * c..(row + 1) * c]);
        }
        self.push(Op::RowSoftmax(x), vec![r, c], vals)
    }

    /// Attention-weighted sum of step-major encoder states.
    /// `w` is (batch x steps), `h` is (steps*batch x c).
    pub fn attn_context(&mut self, w: Var, h: Var) -> Var {
        let (batch, steps) = self.rows_cols(w);
        let (rows, c) = self.rows_cols(h);
        assert_eq!(rows, steps * batch, "attn_context layout mismatch");
        let mut vals = vec![0.0; batch * c];
        let wv = &self.nodes[w.0].values;
        let hv = &self.nodes[h.0].values;
        for b in 0..batch {
            let ctx = &mut vals[b * c..(b + 1) * c];
            for s in 0..steps {
                let wbs = wv[b * steps + s];
                let hrow = &hv[(s * batch + b) * c..(s * batch + b + 1) * c];
                for k in 0..c {
                    ctx[k] += wbs * hrow[k];
                }
            }
        }
        self.push(Op::AttnContext(w, h), vec![batch, c], vals)
    }

    // ---- reductions and losses -------------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].values.iter().sum();
        self.push(Op::SumAll(x), vec![1], vec![s])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].values.len() as f64;
        let s: f64 = self.nodes[x.0].values.iter().sum();
        self.push(Op::MeanAll(x), vec![1], vec![s / n])
    }

    /// Summed label-smoothed cross-entropy over rows of raw logits (r x v).
    /// With `smoothing` = 0 this is the ordinary negative log-likelihood.
    pub fn ce_loss_sum(&mut self, logits: Var, targets: &[usize], smoothing: f64) -> Var {
        let (r, v) = self.rows_cols(logits);
        assert_eq!(targets.len(), r, "one target per logits row");
        assert!((0.0..1.0).contains(&smoothing));
        let mut loss = 0.0;
        for row in 0..r {
            let x = &self.nodes[logits.0].values[row * v..(row + 1) * v];
            let gold = targets[row];
            assert!(gold < v, "target {gold} out of vocabulary {v}");
            let lse = kernels::logsumexp(x);
            let xsum: f64 = x.iter().sum();
            loss += lse - (1.0 - smoothing) * x[gold] - smoothing / v as f64 * xsum;
        }
        self.push(
            Op::CeLossSum(logits, targets.to_vec(), smoothing),
            vec![1],
            vec![loss],
        )
    }

    /// Summed binary cross-entropy from logits (r x 1): rows `< n_pos` are
    /// scored against target 1, the remainder against target 0.
    pub fn bce_logits_split(&mut self, logits: Var, n_pos: usize) -> Var {
        let (r, c) = self.rows_cols(logits);
        assert_eq!(c, 1, "bce_logits_split expects a column vector");
        assert!(n_pos <= r);
        let mut loss = 0.0;
        for (row, &s) in self.nodes[logits.0].values.iter().enumerate() {
            loss += if row < n_pos {
                kernels::softplus(-s)
            } else {
                kernels::softplus(s)
            };
        }
        self.push(Op::BceLogitsSplit(logits, n_pos), vec![1], vec![loss])
    }

    // ---- critic geometry ---------------------------------------------------

    /// grid[i,j,:] = [u[i,:] ; v[j,:]] giving shape (s, t, 2d).
    pub fn pair_grid(&mut self, u: Var, v: Var) -> Var {
        let (s, d) = self.rows_cols(u);
        let (t, d2) = self.rows_cols(v);
        assert_eq!(d, d2, "pair_grid feature width mismatch");
        let mut vals = Vec::with_capacity(s * t * 2 * d);
        for i in 0..s {
            let urow = &self.nodes[u.0].values[i * d..(i + 1) * d];
            for j in 0..t {
                vals.extend_from_slice(urow);
                vals.extend_from_slice(&self.nodes[v.0].values[j * d..(j + 1) * d]);
            }
        }
        self.push(Op::PairGrid(u, v), vec![s, t, 2 * d], vals)
    }

    /// 3x3 zero-padded convolution plus logistic activation.
    /// `x` is (s, t, c); `w` is (f, 9c); `b` is (f,). Output (s, t, f).
    pub fn conv3x3_sigmoid(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "conv input must be rank 3");
        let (s, t, c) = (xs[0], xs[1], xs[2]);
        let (f, wc) = self.rows_cols(w);
        assert_eq!(wc, 9 * c, "conv weight width must be 9*channels");
        assert_eq!(self.shape(b), [f]);
        let mut out = vec![0.0; s * t * f];
        kernels::conv3x3_sigmoid(
            &mut out,
            &self.nodes[x.0].values,
            &self.nodes[w.0].values,
            &self.nodes[b.0].values,
            s,
            t,
            c,
            f,
        );
        self.push(Op::Conv3x3Sigmoid(x, w, b), vec![s, t, f], out)
    }

    /// Ceil-mode 2x2 max pooling over (s, t, f).
    pub fn maxpool2x2(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "pool input must be rank 3");
        let (s, t, f) = (xs[0], xs[1], xs[2]);
        let (so, to) = (s.div_ceil(2), t.div_ceil(2));
        let mut out = vec![0.0; so * to * f];
        let mut arg = vec![0usize; so * to * f];
        kernels::maxpool2x2(&mut out, &mut arg, &self.nodes[x.0].values, s, t, f);
        self.push(Op::MaxPool2x2(x, arg), vec![so, to, f], out)
    }

    /// Mean over spatial positions of (s, t, f), producing (1 x f).
    pub fn channel_mean(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 3, "channel_mean input must be rank 3");
        let (s, t, f) = (xs[0], xs[1], xs[2]);
        let mut out = vec![0.0; f];
        for pos in 0..s * t {
            for fi in 0..f {
                out[fi] += self.nodes[x.0].values[pos * f + fi];
            }
        }
        let inv = 1.0 / (s * t) as f64;
        for v in out.iter_mut() {
            *v *= inv;
        }
        self.push(Op::ChannelMean(x), vec![1, f], out)
    }

    // ---- backward ----------------------------------------------------------

    /// Run the backward pass from a scalar `loss` and consume the tape.
    /// Every registered parameter gets an entry; parameters the loss does not
    /// reach get zero gradients.
    pub fn backward(self, loss: Var) -> Result<Gradients, EngineError> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(EngineError::NotScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if matches!(self.nodes[idx].op, Op::Param | Op::Leaf) {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // Split borrows: node `idx` is read-only while upstream grads mutate.
            let (node, vals) = (&self.nodes[idx].op, &self.nodes[idx].values);
            let mut acc = |target: Var, f: &mut dyn FnMut(&mut [f64])| {
                let len = self.nodes[target.0].values.len();
                let slot = grads[target.0].get_or_insert_with(|| vec![0.0; len]);
                f(slot);
            };
            match node {
                Op::Param | Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(*a, &mut |da| {
                        for (d, gi) in da.iter_mut().zip(&g) {
                            *d += gi;
                        }
                    });
                    acc(*b, &mut |db| {
                        for (d, gi) in db.iter_mut().zip(&g) {
                            *d += gi;
                        }
                    });
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |da| {
                        for (d, gi) in da.iter_mut().zip(&g) {
                            *d += gi;
                        }
                    });
                    acc(*b, &mut |db| {
                        for (d, gi) in db.iter_mut().zip(&g) {
                            *d -= gi;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].values;
                    let bv = &self.nodes[b.0].values;
                    acc(*a, &mut |da| {
                        for i in 0..g.len() {
                            da[i] += g[i] * bv[i];
                        }
                    });
                    acc(*b, &mut |db| {
                        for i in 0..g.len() {
                            db[i] += g[i] * av[i];
                        }
                    });
                }
                Op::Affine(x, a) => {
                    let a = *a;
                    acc(*x, &mut |dx| {
                        for i in 0..g.len() {
                            dx[i] += a * g[i];
                        }
                    });
                }
                Op::AddBias(x, bias) => {
                    let c = self.nodes[bias.0].values.len();
                    acc(*x, &mut |dx| {
                        for (d, gi) in dx.iter_mut().zip(&g) {
                            *d += gi;
                        }
                    });
                    acc(*bias, &mut |db| {
                        for (i, gi) in g.iter().enumerate() {
                            db[i % c] += gi;
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n = self.nodes[b.0].shape[1];
                    let av = &self.nodes[a.0].values;
                    let bv = &self.nodes[b.0].values;
                    acc(*a, &mut |da| {
                        kernels::matmul_grad_a(da, &g, bv, m, k, n);
                    });
                    acc(*b, &mut |db| {
                        kernels::matmul_grad_b(db, av, &g, m, k, n);
                    });
                }
                Op::GatherRows(table, ids) => {
                    let d = self.nodes[table.0].shape[1];
                    acc(*table, &mut |dt| {
                        for (row, &id) in ids.iter().enumerate() {
                            for col in 0..d {
                                dt[id * d + col] += g[row * d + col];
                            }
                        }
                    });
                }
                Op::SliceCols(x, lo, hi) => {
                    let c = self.nodes[x.0].shape[1];
                    let w = hi - lo;
                    let lo = *lo;
                    acc(*x, &mut |dx| {
                        for row in 0..g.len() / w {
                            for col in 0..w {
                                dx[row * c + lo + col] += g[row * w + col];
                            }
                        }
                    });
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].shape[1];
                    let cb = self.nodes[b.0].shape[1];
                    let c = ca + cb;
                    acc(*a, &mut |da| {
                        for row in 0..g.len() / c {
                            for col in 0..ca {
                                da[row * ca + col] += g[row * c + col];
                            }
                        }
                    });
                    acc(*b, &mut |db| {
                        for row in 0..g.len() / c {
                            for col in 0..cb {
                                db[row * cb + col] += g[row * c + ca + col];
                            }
                        }
                    });
                }
                Op::ConcatRows(a, b) => {
                    let na = self.nodes[a.0].values.len();
                    acc(*a, &mut |da| {
                        for i in 0..na {
                            da[i] += g[i];
                        }
                    });
                    acc(*b, &mut |db| {
                        for (i, d) in db.iter_mut().enumerate() {
                            *d += g[na + i];
                        }
                    });
                }
                Op::VTile(x, times) => {
                    let n = self.nodes[x.0].values.len();
                    let times = *times;
                    acc(*x, &mut |dx| {
                        for rep in 0..times {
                            for i in 0..n {
                                dx[i] += g[rep * n + i];
                            }
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    acc(*x, &mut |dx| {
                        for i in 0..g.len() {
                            dx[i] += g[i] * vals[i] * (1.0 - vals[i]);
                        }
                    });
                }
                Op::Tanh(x) => {
                    acc(*x, &mut |dx| {
                        for i in 0..g.len() {
                            dx[i] += g[i] * (1.0 - vals[i] * vals[i]);
                        }
                    });
                }
                Op::DropoutMask(x, mask) => {
                    acc(*x, &mut |dx| {
                        for i in 0..g.len() {
                            dx[i] += g[i] * mask[i];
                        }
                    });
                }
                Op::RowSoftmax(x) => {
                    let c = self.nodes[x.0].shape[1];
                    acc(*x, &mut |dx| {
                        for row in 0..g.len() / c {
                            let y = &vals[row * c..(row + 1) * c];
                            let gr = &g[row * c..(row + 1) * c];
                            let dot: f64 = y.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                            for col in 0..c {
                                dx[row * c + col] += y[col] * (gr[col] - dot);
                            }
                        }
                    });
                }
                Op::AttnContext(w, h) => {
                    let (batch, steps) =
                        (self.nodes[w.0].shape[0], self.nodes[w.0].shape[1]);
                    let c = self.nodes[h.0].shape[1];
                    let wv = &self.nodes[w.0].values;
                    let hv = &self.nodes[h.0].values;
                    acc(*w, &mut |dw| {
                        for b in 0..batch {
                            let gb = &g[b * c..(b + 1) * c];
                            for s in 0..steps {
                                let hrow = &hv[(s * batch + b) * c..(s * batch + b + 1) * c];
                                let mut dot = 0.0;
                                for k in 0..c {
                                    dot += gb[k] * hrow[k];
                                }
                                dw[b * steps + s] += dot;
                            }
                        }
                    });
                    acc(*h, &mut |dh| {
                        for b in 0..batch {
                            let gb = &g[b * c..(b + 1) * c];
                            for s in 0..steps {
                                let wbs = wv[b * steps + s];
                                let drow =
                                    &mut dh[(s * batch + b) * c..(s * batch + b + 1) * c];
                                for k in 0..c {
                                    drow[k] += wbs * gb[k];
                                }
                            }
                        }
                    });
                }
                Op::SumAll(x) => {
                    acc(*x, &mut |dx| {
                        for d in dx.iter_mut() {
                            *d += g[0];
                        }
                    });
                }
                Op::MeanAll(x) => {
                    let n = self.nodes[x.0].values.len() as f64;
                    acc(*x, &mut |dx| {
                        for d in dx.iter_mut() {
                            *d += g[0] / n;
                        }
                    });
                }
                Op::CeLossSum(logits, targets, smoothing) => {
                    let v = self.nodes[logits.0].shape[1];
                    let xv = &self.nodes[logits.0].values;
                    let smoothing = *smoothing;
                    acc(*logits, &mut |dx| {
                        for (row, &gold) in targets.iter().enumerate() {
                            let x = &xv[row * v..(row + 1) * v];
                            let lse = kernels::logsumexp(x);
                            for col in 0..v {
                                let p = (x[col] - lse).exp();
                                let q = if col == gold { 1.0 - smoothing } else { 0.0 }
                                    + smoothing / v as f64;
                                dx[row * v + col] += g[0] * (p - q);
                            }
                        }
                    });
                }
                Op::BceLogitsSplit(logits, n_pos) => {
                    let xv = &self.nodes[logits.0].values;
                    let n_pos = *n_pos;
                    acc(*logits, &mut |dx| {
                        for (row, &s) in xv.iter().enumerate() {
                            let target = if row < n_pos { 1.0 } else { 0.0 };
                            dx[row] += g[0] * (kernels::sigmoid(s) - target);
                        }
                    });
                }
                Op::PairGrid(u, v) => {
                    let (s, d) = (self.nodes[u.0].shape[0], self.nodes[u.0].shape[1]);
                    let t = self.nodes[v.0].shape[0];
                    acc(*u, &mut |du| {
                        for i in 0..s {
                            for j in 0..t {
                                let base = (i * t + j) * 2 * d;
                                for k in 0..d {
                                    du[i * d + k] += g[base + k];
                                }
                            }
                        }
                    });
                    acc(*v, &mut |dv| {
                        for i in 0..s {
                            for j in 0..t {
                                let base = (i * t + j) * 2 * d;
                                for k in 0..d {
                                    dv[j * d + k] += g[base + d + k];
                                }
                            }
                        }
                    });
                }
                Op::Conv3x3Sigmoid(x, w, b) => {
                    let xs = &self.nodes[x.0].shape;
                    let (s, t, c) = (xs[0], xs[1], xs[2]);
                    let f = self.nodes[b.0].values.len();
                    // d(pre-activation) = g * y * (1 - y)
                    let mut dpre = vec![0.0; s * t * f];
                    for i in 0..dpre.len() {
                        dpre[i] = g[i] * vals[i] * (1.0 - vals[i]);
                    }
                    let xv = &self.nodes[x.0].values;
                    let wv = &self.nodes[w.0].values;
                    acc(*x, &mut |dx| {
                        for i in 0..s {
                            for j in 0..t {
                                for fi in 0..f {
                                    let dp = dpre[(i * t + j) * f + fi];
                                    if dp == 0.0 {
                                        continue;
                                    }
                                    let wf = &wv[fi * 9 * c..(fi + 1) * 9 * c];
                                    for di in 0..3usize {
                                        let ii = i as isize + di as isize - 1;
                                        if ii < 0 || ii >= s as isize {
                                            continue;
                                        }
                                        for dj in 0..3usize {
                                            let jj = j as isize + dj as isize - 1;
                                            if jj < 0 || jj >= t as isize {
                                                continue;
                                            }
                                            let base =
                                                ((ii as usize) * t + jj as usize) * c;
                                            let wbase = (di * 3 + dj) * c;
                                            for ch in 0..c {
                                                dx[base + ch] += dp * wf[wbase + ch];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                    acc(*w, &mut |dw| {
                        for i in 0..s {
                            for j in 0..t {
                                for fi in 0..f {
                                    let dp = dpre[(i * t + j) * f + fi];
                                    if dp == 0.0 {
                                        continue;
                                    }
                                    for di in 0..3usize {
                                        let ii = i as isize + di as isize - 1;
                                        if ii < 0 || ii >= s as isize {
                                            continue;
                                        }
                                        for dj in 0..3usize {
                                            let jj = j as isize + dj as isize - 1;
                                            if jj < 0 || jj >= t as isize {
                                                continue;
                                            }
                                            let base =
                                                ((ii as usize) * t + jj as usize) * c;
                                            let wbase =
                                                fi * 9 * c + (di * 3 + dj) * c;
                                            for ch in 0..c {
                                                dw[wbase + ch] += dp * xv[base + ch];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
                    acc(*b, &mut |db| {
                        for pos in 0..s * t {
                            for fi in 0..f {
                                db[fi] += dpre[pos * f + fi];
                            }
                        }
                    });
                }
                Op::MaxPool2x2(x, arg) => {
                    acc(*x, &mut |dx| {
                        for (o, &src) in arg.iter().enumerate() {
                            dx[src] += g[o];
                        }
                    });
                }
                Op::ChannelMean(x) => {
                    let xs = &self.nodes[x.0].shape;
                    let (s, t, f) = (xs[0], xs[1], xs[2]);
                    let inv = 1.0 / (s * t) as f64;
                    acc(*x, &mut |dx| {
                        for pos in 0..s * t {
                            for fi in 0..f {
                                dx[pos * f + fi] += g[fi] * inv;
                            }
                        }
                    });
                }
            }
        }

        let mut out = Gradients::new();
        for (name, var) in &self.params {
            let shape = self.nodes[var.0].shape.clone();
            let values = match grads[var.0].take() {
                Some(g) => g,
                None => vec![0.0; self.nodes[var.0].values.len()],
            };
            let t = Tensor::new(shape, values)?;
            if out.insert(name.clone(), t).is_some() {
                return Err(EngineError::DuplicateParam { name: name.clone() });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(shape: [usize; 2], vals: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), vals.to_vec()).unwrap()
    }

    #[test]
    fn matmul_forward_and_grad() {
        let mut tape = Tape::new();
        let a = tape.param("a", &t2([2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.param("b", &t2([2, 2], &[5.0, 6.0, 7.0, 8.0]));
        let c = tape.matmul(a, b);
        assert_eq!(tape.values(c), &[19.0, 22.0, 43.0, 50.0]);
        let loss = tape.sum_all(c);
        let grads = tape.backward(loss).unwrap();
        // d(sum)/dA = ones * B^T  => rows [11, 15]
        assert_eq!(grads["a"].values(), &[11.0, 15.0, 11.0, 15.0]);
        // d(sum)/dB = A^T * ones => rows [4, 4; 6, 6]
        assert_eq!(grads["b"].values(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let a = tape.param("a", &t2([1, 2], &[1.0, 2.0]));
        assert!(matches!(
            tape.backward(a),
            Err(EngineError::NotScalarLoss { .. })
        ));
    }

    #[test]
    fn disconnected_param_gets_zero_grad() {
        let mut tape = Tape::new();
        let a = tape.param("used", &t2([1, 1], &[3.0]));
        let _unused = tape.param("unused", &t2([2, 2], &[1.0; 4]));
        let loss = tape.sum_all(a);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads["used"].values(), &[1.0]);
        assert_eq!(grads["unused"].values(), &[0.0; 4]);
    }

    #[test]
    fn ce_loss_matches_manual_value() {
        // Two logits rows; no smoothing. loss = sum lse - x[gold].
        let mut tape = Tape::new();
        let x = tape.param("x", &t2([2, 3], &[1.0, 2.0, 3.0, 0.5, 0.0, -0.5]));
        let loss = tape.ce_loss_sum(x, &[2, 0], 0.0);
        let l0 = kernels::logsumexp(&[1.0, 2.0, 3.0]) - 3.0;
        let l1 = kernels::logsumexp(&[0.5, 0.0, -0.5]) - 0.5;
        assert!((tape.scalar_value(loss) - (l0 + l1)).abs() < 1e-12);
        let grads = tape.backward(loss).unwrap();
        // Gradient rows sum to zero (p - onehot).
        let gv = grads["x"].values();
        assert!((gv[..3].iter().sum::<f64>()).abs() < 1e-12);
        assert!((gv[3..].iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_grad_is_orthogonal_to_ones() {
        let mut tape = Tape::new();
        let x = tape.param("x", &t2([2, 4], &[0.1, -0.3, 2.0, 0.7, -1.0, 0.0, 1.0, 2.0]));
        let y = tape.row_softmax(x);
        for row in 0..2 {
            let s: f64 = tape.values(y)[row * 4..(row + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // loss = sum of first column of y
        let col = tape.slice_cols(y, 0, 1);
        let loss = tape.sum_all(col);
        let grads = tape.backward(loss).unwrap();
        let gv = grads["x"].values();
        for row in 0..2 {
            let s: f64 = gv[row * 4..(row + 1) * 4].iter().sum();
            assert!(s.abs() < 1e-12, "softmax grad rows must sum to zero");
        }
    }

    #[test]
    fn maxpool_ceil_mode_shape_and_argmax() {
        // 3x3 grid, one channel: pooling gives 2x2 with in-bounds maxima.
        let mut tape = Tape::new();
        let vals: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let x = tape.constant_from(&[3, 3, 1], vals);
        let y = tape.maxpool2x2(x);
        assert_eq!(tape.shape(y), &[2, 2, 1]);
        assert_eq!(tape.values(y), &[4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn bce_split_is_stable_at_extreme_logits() {
        let mut tape = Tape::new();
        let x = tape.param("x", &t2([2, 1], &[40.0, -40.0]));
        let loss = tape.bce_logits_split(x, 1);
        assert!(tape.scalar_value(loss).is_finite());
        assert!(tape.scalar_value(loss) < 1e-12);
    }

    #[test]
    fn attn_context_matches_manual_sum() {
        let mut tape = Tape::new();
        // batch=2, steps=2, c=2; h is step-major.
        let w = tape.constant_from(&[2, 2], vec![0.25, 0.75, 0.5, 0.5]);
        let h = tape.constant_from(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let ctx = tape.attn_context(w, h);
        // b=0: 0.25*[1,0] + 0.75*[2,2] = [1.75, 1.5]
        // b=1: 0.5*[0,1] + 0.5*[3,3] = [1.5, 2.0]
        let got = tape.values(ctx);
        assert!((got[0] - 1.75).abs() < 1e-12);
        assert!((got[1] - 1.5).abs() < 1e-12);
        assert!((got[2] - 1.5).abs() < 1e-12);
        assert!((got[3] - 2.0).abs() < 1e-12);
    }
}
