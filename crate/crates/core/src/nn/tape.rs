//! Reverse-mode differentiation over a recorded tape of matrix operations.
//!
//! A [`Tape`] is built by one forward pass and consumed by [`Tape::backward`].
//! Parameters enter as borrowed leaves so a forward pass never copies weights.
//! Shape errors inside the tape are programming errors and panic; the public
//! layer functions in [`crate::nn::layers`] validate user-facing dimensions first.

use std::borrow::Cow;

use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, S),
    Relu(Var),
    InstanceNorm { x: Var, inv_std: Vec<S> },
    MeanRows(Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    Softmax { x: Var, mask: Option<Vec<bool>>, tau: S },
    LogSoftmax { x: Var, mask: Option<Vec<bool>>, tau: S },
    PickCols(Var, Vec<usize>),
    Sum(Var),
    WeightedSum(Var, Vec<S>),
}

struct Node<'p, S: Scalar> {
    value: Cow<'p, Tensor<S>>,
    op: Op<S>,
    needs_grad: bool,
}

/// Recorded computation graph. `'p` is the lifetime of borrowed parameter tensors.
pub struct Tape<'p, S: Scalar> {
    nodes: Vec<Node<'p, S>>,
}

impl<S: Scalar> Default for Tape<'_, S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf borrowed from a parameter store.
    pub fn param(&mut self, t: &'p Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned trainable leaf.
    pub fn variable(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.rows(), "matmul: {:?} x {:?}", x.shape(), y.shape());
        let out = x.matmul(y);
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.cols(), "matmul_nt: {:?} x {:?}^T", x.shape(), y.shape());
        let (m, k, n) = (x.rows(), x.cols(), y.rows());
        let mut data = vec![S::zero(); m * n];
        matmul_nt_acc(x.data(), y.data(), m, k, n, &mut data);
        let out = Tensor::new(m, n, data).expect("shape");
        self.push(out, Op::MatMulNT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let mut out = x.clone();
        out.add_assign(y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), [1, x.cols()], "add_row shape mismatch");
        let c = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += r.data()[i % c];
        }
        self.push(out, Op::AddRow(a, row), &[a, row])
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), [1, x.cols()], "mul_row shape mismatch");
        let c = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= r.data()[i % c];
        }
        self.push(out, Op::MulRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, k: S) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(k);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            if *v < S::zero() {
                *v = S::zero();
            }
        }
        self.push(out, Op::Relu(a), &[a])
    }

    /// Normalises each column to zero mean and unit variance over the rows.
    pub fn instance_norm(&mut self, a: Var, eps: S) -> Var {
        let x = self.value(a);
        let (n, c) = (x.rows(), x.cols());
        let nf = S::from_count(n);
        let mut mean = vec![S::zero(); c];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= nf;
        }
        let mut var = vec![S::zero(); c];
        for r in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<S> = var.iter().map(|&s| S::one() / (s / nf + eps).sqrt()).collect();
        let out = Tensor::from_fn(n, c, |r, j| (x.get(r, j) - mean[j]) * inv_std[j]);
        self.push(out, Op::InstanceNorm { x: a, inv_std }, &[a])
    }

    /// `1 x c` mean over rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let nf = S::from_count(x.rows());
        let mut out = vec![S::zero(); x.cols()];
        for r in 0..x.rows() {
            for (o, &v) in out.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= nf;
        }
        self.push(Tensor::row_vector(out), Op::MeanRows(a), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(idx.len(), c, data).expect("shape");
        self.push(out, Op::GatherRows(a, idx.to_vec()), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let x = self.value(a);
        assert!(start + width <= x.cols(), "slice_cols out of range");
        let out = Tensor::from_fn(x.rows(), width, |r, c| x.get(r, start + c));
        self.push(out, Op::SliceCols(a, start), &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, height: usize) -> Var {
        let x = self.value(a);
        assert!(start + height <= x.rows(), "slice_rows out of range");
        let c = x.cols();
        let data = x.data()[start * c..(start + height) * c].to_vec();
        let out = Tensor::new(height, c, data).expect("shape");
        self.push(out, Op::SliceRows(a, start), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        assert!(parts.iter().all(|&p| self.value(p).rows() == rows), "concat_cols rows");
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data).expect("shape");
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Row-wise softmax of `a / tau`; entries where `mask` is true get probability 0.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>, tau: S) -> Var {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            let m = mask.map(|m| &m[i * c..(i + 1) * c]);
            softmax_row(x.row(i), m, tau, &mut out[i * c..(i + 1) * c]);
        }
        let out = Tensor::new(r, c, out).expect("shape");
        let mask = mask.map(<[bool]>::to_vec);
        self.push(out, Op::Softmax { x: a, mask, tau }, &[a])
    }

    /// Row-wise log-softmax of `a / tau`; masked entries are `-inf`.
    pub fn log_softmax(&mut self, a: Var, mask: Option<&[bool]>, tau: S) -> Var {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        let mut out = vec![S::neg_infinity(); r * c];
        for i in 0..r {
            let row = x.row(i);
            let m = mask.map(|m| &m[i * c..(i + 1) * c]);
            let allowed = |j: usize| m.map_or(true, |m| !m[j]);
            if (0..c).any(|j| allowed(j) && poisoned(row[j])) {
                for j in (0..c).filter(|&j| allowed(j)) {
                    out[i * c + j] = S::nan();
                }
                continue;
            }
            let mx = (0..c)
                .filter(|&j| allowed(j))
                .map(|j| row[j] / tau)
                .fold(S::neg_infinity(), S::max);
            assert!(mx > S::neg_infinity(), "log_softmax: row {i} fully masked");
            let z: S = (0..c)
                .filter(|&j| allowed(j))
                .map(|j| (row[j] / tau - mx).exp())
                .sum();
            let lz = z.ln() + mx;
            for j in (0..c).filter(|&j| allowed(j)) {
                out[i * c + j] = row[j] / tau - lz;
            }
        }
        let out = Tensor::new(r, c, out).expect("shape");
        let mask = mask.map(<[bool]>::to_vec);
        self.push(out, Op::LogSoftmax { x: a, mask, tau }, &[a])
    }

    /// `r x 1` column with entry `a[r, idx[r]]`.
    pub fn pick_cols(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = self.value(a);
        assert_eq!(idx.len(), x.rows(), "pick_cols needs one index per row");
        let data = idx.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect();
        let out = Tensor::new(idx.len(), 1, data).expect("shape");
        self.push(out, Op::PickCols(a, idx.to_vec()), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// `sum_i w_i a_i` over all entries, with constant weights.
    pub fn weighted_sum(&mut self, a: Var, w: &[S]) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), w.len(), "weighted_sum weight count");
        let s = x.data().iter().zip(w).map(|(&v, &k)| v * k).sum();
        self.push(Tensor::scalar(s), Op::WeightedSum(a, w.to_vec()), &[a])
    }

    /// Back-propagates from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: Var) -> Gradients<S> {
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![S::one(); self.nodes[root.0].value.len()]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                if self.wants(*a) {
                    matmul_nt_acc(g, y.data(), m, n, k, slot(grads, *a, m * k));
                }
                if self.wants(*b) {
                    matmul_tn_acc(x.data(), g, m, k, n, slot(grads, *b, k * n));
                }
            }
            Op::MatMulNT(a, b) => {
                // out = x y^T, x: m x k, y: n x k
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.rows());
                if self.wants(*a) {
                    matmul_acc(g, y.data(), m, n, k, slot(grads, *a, m * k));
                }
                if self.wants(*b) {
                    matmul_tn_acc(g, x.data(), m, n, k, slot(grads, *b, n * k));
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        axpy(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    axpy(slot(grads, *a, g.len()), g);
                }
                if self.wants(*row) {
                    let c = out.cols();
                    let dst = slot(grads, *row, c);
                    for (k, &gv) in g.iter().enumerate() {
                        dst[k % c] += gv;
                    }
                }
            }
            Op::MulRow(a, row) => {
                let (x, r) = (self.value(*a), self.value(*row));
                let c = x.cols();
                if self.wants(*a) {
                    let dst = slot(grads, *a, g.len());
                    for (k, &gv) in g.iter().enumerate() {
                        dst[k] += gv * r.data()[k % c];
                    }
                }
                if self.wants(*row) {
                    let dst = slot(grads, *row, c);
                    for (k, &gv) in g.iter().enumerate() {
                        dst[k % c] += gv * x.data()[k];
                    }
                }
            }
            Op::Scale(a, k) => {
                if self.wants(*a) {
                    let dst = slot(grads, *a, g.len());
                    for (d, &gv) in dst.iter_mut().zip(g) {
                        *d += gv * *k;
                    }
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let dst = slot(grads, *a, g.len());
                    for ((d, &gv), &o) in dst.iter_mut().zip(g).zip(out.data()) {
                        if o > S::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                if self.wants(*x) {
                    let (n, c) = (out.rows(), out.cols());
                    let nf = S::from_count(n);
                    let mut sum_g = vec![S::zero(); c];
                    let mut sum_gy = vec![S::zero(); c];
                    for r in 0..n {
                        for j in 0..c {
                            let gv = g[r * c + j];
                            sum_g[j] += gv;
                            sum_gy[j] += gv * out.get(r, j);
                        }
                    }
                    let dst = slot(grads, *x, n * c);
                    for r in 0..n {
                        for j in 0..c {
                            let y = out.get(r, j);
                            dst[r * c + j] += inv_std[j]
                                * (g[r * c + j] - sum_g[j] / nf - y * sum_gy[j] / nf);
                        }
                    }
                }
            }
            Op::MeanRows(a) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let (n, c) = (x.rows(), x.cols());
                    let nf = S::from_count(n);
                    let dst = slot(grads, *a, n * c);
                    for r in 0..n {
                        for j in 0..c {
                            dst[r * c + j] += g[j] / nf;
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let c = x.cols();
                    let dst = slot(grads, *a, x.len());
                    for (k, &src) in idx.iter().enumerate() {
                        axpy(&mut dst[src * c..(src + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                }
            }
            Op::SliceCols(a, start) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let (w, c) = (out.cols(), x.cols());
                    let dst = slot(grads, *a, x.len());
                    for r in 0..out.rows() {
                        axpy(
                            &mut dst[r * c + start..r * c + start + w],
                            &g[r * w..(r + 1) * w],
                        );
                    }
                }
            }
            Op::SliceRows(a, start) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let c = x.cols();
                    let dst = slot(grads, *a, x.len());
                    axpy(&mut dst[start * c..start * c + g.len()], g);
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, cols) = (out.rows(), out.cols());
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.wants(p) {
                        let dst = slot(grads, p, rows * w);
                        for r in 0..rows {
                            axpy(
                                &mut dst[r * w..(r + 1) * w],
                                &g[r * cols + offset..r * cols + offset + w],
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::Softmax { x, mask, tau } => {
                if self.wants(*x) {
                    let (r, c) = (out.rows(), out.cols());
                    let dst = slot(grads, *x, r * c);
                    for i in 0..r {
                        let p = out.row(i);
                        let gi = &g[i * c..(i + 1) * c];
                        let dot: S = p.iter().zip(gi).map(|(&a, &b)| a * b).sum();
                        for j in 0..c {
                            if mask.as_ref().is_some_and(|m| m[i * c + j]) {
                                continue;
                            }
                            dst[i * c + j] += p[j] * (gi[j] - dot) / *tau;
                        }
                    }
                }
            }
            Op::LogSoftmax { x, mask, tau } => {
                if self.wants(*x) {
                    let (r, c) = (out.rows(), out.cols());
                    let dst = slot(grads, *x, r * c);
                    for i in 0..r {
                        let allowed =
                            |j: usize| mask.as_ref().map_or(true, |m| !m[i * c + j]);
                        let gsum: S = (0..c).filter(|&j| allowed(j)).map(|j| g[i * c + j]).sum();
                        for j in (0..c).filter(|&j| allowed(j)) {
                            let p = out.get(i, j).exp();
                            dst[i * c + j] += (g[i * c + j] - p * gsum) / *tau;
                        }
                    }
                }
            }
            Op::PickCols(a, idx) => {
                if self.wants(*a) {
                    let x = self.value(*a);
                    let c = x.cols();
                    let dst = slot(grads, *a, x.len());
                    for (r, &j) in idx.iter().enumerate() {
                        dst[r * c + j] += g[r];
                    }
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let n = self.value(*a).len();
                    for d in slot(grads, *a, n).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::WeightedSum(a, w) => {
                if self.wants(*a) {
                    let dst = slot(grads, *a, w.len());
                    for (d, &k) in dst.iter_mut().zip(w) {
                        *d += g[0] * k;
                    }
                }
            }
        }
    }
}

fn slot<S: Scalar>(grads: &mut [Option<Vec<S>>], v: Var, len: usize) -> &mut [S] {
    grads[v.0].get_or_insert_with(|| vec![S::zero(); len])
}

fn axpy<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// NaN or `+inf`: the row has diverged and its outputs become NaN, which the
/// rollout reports as a numeric error.
fn poisoned<S: Scalar>(v: S) -> bool {
    v.is_nan() || v == S::infinity()
}

/// Numerically stable softmax of `row / tau`, writing zeros for masked entries.
pub(crate) fn softmax_row<S: Scalar>(row: &[S], mask: Option<&[bool]>, tau: S, out: &mut [S]) {
    if (0..row.len()).any(|j| mask.map_or(true, |m| !m[j]) && poisoned(row[j])) {
        out.fill(S::nan());
        return;
    }
    let allowed = |j: usize| mask.map_or(true, |m| !m[j]) && row[j] > S::neg_infinity();
    let mx = (0..row.len())
        .filter(|&j| allowed(j))
        .map(|j| row[j] / tau)
        .fold(S::neg_infinity(), S::max);
    assert!(mx > S::neg_infinity(), "softmax over a row with no admissible entry");
    let mut z = S::zero();
    for j in 0..row.len() {
        out[j] = if allowed(j) {
            let e = (row[j] / tau - mx).exp();
            z += e;
            e
        } else {
            S::zero()
        };
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Gradients produced by [`Tape::backward`]; only leaves are retained.
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a leaf, or `None` when it did not influence the root.
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of `v` shaped like its value; zeros when unreachable.
    pub fn tensor(&self, tape: &Tape<'_, S>, v: Var) -> Tensor<S> {
        let [r, c] = tape.shape(v);
        match self.get(v) {
            Some(g) => Tensor::new(r, c, g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(r, c),
        }
    }
}
