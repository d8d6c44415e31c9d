//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation pushes a new
//! node whose parents were created earlier, so insertion order is already a
//! topological order and [`Graph::backward`] is a single reverse sweep.
//!
//! Gradients accumulate: calling `backward` twice without [`Graph::zero_grad`]
//! adds the second pass on top of the first.
//!
//! ```
//! use iada_core::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(Tensor::scalar(2.0));
//! let y = g.leaf(Tensor::scalar(3.0));
//! let z = g.mul(x, y).unwrap();
//! g.backward(z).unwrap();
//! assert_eq!(g.grad(x).item(), Some(3.0));
//! assert_eq!(g.grad(y).item(), Some(2.0));
//! ```

pub mod check;
mod tensor;

pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("grad_reverse scale must be non-negative, got {0}")]
    NegativeScale(f64),
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Affine { scale: f64 },
    Exp,
    Log,
    Pow(f64),
    Relu,
    Sigmoid,
    Softmax,
    Clamp { lo: f64, hi: f64 },
    Sum,
    Mean,
    SumAxis { axis: usize, keep: bool },
    Concat { axis: usize },
    Reshape,
    Transpose,
    SliceLast { start: usize },
    TakeAlongRows(Vec<usize>),
    GradReverse(f64),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Affine { .. } => "affine",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Pow(_) => "pow",
            Op::Relu => "relu",
            Op::Sigmoid => "sigmoid",
            Op::Softmax => "softmax",
            Op::Clamp { .. } => "clamp",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis { .. } => "sum_axis",
            Op::Concat { .. } => "concat",
            Op::Reshape => "reshape",
            Op::Transpose => "transpose",
            Op::SliceLast { .. } => "slice_last",
            Op::TakeAlongRows(_) => "take_along_rows",
            Op::GradReverse(_) => "grad_reverse",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
    parents: Vec<Var>,
}

/// Computation graph. Confined to one thread while in use; the whole graph is
/// `Send` so independent graphs can live on different threads.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input node without parents. Constants are leaves whose gradient is ignored.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node {
            value,
            grad,
            op: Op::Leaf,
            parents: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    pub fn op_tag(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.tag()
    }

    pub fn parents(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].parents
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    fn push(&mut self, value: Tensor, op: Op, parents: Vec<Var>) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op.tag() });
        }
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node {
            value,
            grad,
            op,
            parents,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    // ----- forward operations -----

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let out = matmul_raw(av, bv);
        self.push(out, Op::MatMul, vec![a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div, |x, y| x / y)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| {
            AutodiffError::ShapeMismatch {
                op: op.tag(),
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            }
        })?;
        let out = broadcast_apply(av, bv, &shape, f);
        self.push(out, op, vec![a, b])
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| -v);
        self.push(out, Op::Neg, vec![x])
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine { scale }, vec![x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp, vec![x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::ln);
        self.push(out, Op::Log, vec![x])
    }

    /// Elementwise `x^p` for a constant exponent.
    pub fn pow(&mut self, x: Var, p: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v.powf(p));
        self.push(out, Op::Pow(p), vec![x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu, vec![x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid, vec![x])
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(AutodiffError::Invalid {
                op: "softmax",
                msg: "needs at least one axis".into(),
            });
        }
        let mut out = xv.clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(out, Op::Softmax, vec![x])
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp { lo, hi }, vec![x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum, vec![x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(AutodiffError::Invalid {
                op: "mean",
                msg: "empty input".into(),
            });
        }
        let out = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(out, Op::Mean, vec![x])
    }

    /// Sum over one axis, optionally keeping it with size 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize, keep: bool) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(AutodiffError::Invalid {
                op: "sum_axis",
                msg: format!("axis {axis} out of range for shape {:?}", xv.shape()),
            });
        }
        let (outer, n, inner) = split_axis(xv.shape(), axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &xv.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        if keep {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::SumAxis { axis, keep }, vec![x])
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize, keep: bool) -> Result<Var> {
        let n = self.value(x).shape().get(axis).copied().unwrap_or(1);
        let s = self.sum_axis(x, axis, keep)?;
        if n == 0 {
            return Err(AutodiffError::Invalid {
                op: "mean_axis",
                msg: "empty axis".into(),
            });
        }
        self.affine(s, 1.0 / n as f64, 0.0)
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| AutodiffError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(AutodiffError::Invalid {
                op: "concat",
                msg: format!("axis {axis} out of range for shape {base:?}"),
            });
        }
        let mut total = 0;
        for &v in xs {
            let s = self.value(v).shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(k, (a, b))| k == axis || a == b);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let t = self.value(v);
                let n = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Concat { axis }, xs.to_vec())
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                lhs: xv.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = xv.clone().reshaped(shape.to_vec());
        self.push(out, Op::Reshape, vec![x])
    }

    /// Transpose of a matrix.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(AutodiffError::Invalid {
                op: "transpose",
                msg: format!("needs a matrix, got shape {:?}", xv.shape()),
            });
        }
        let out = transpose_raw(xv);
        self.push(out, Op::Transpose, vec![x])
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        if xv.rank() == 0 || start >= end || end > c {
            return Err(AutodiffError::Invalid {
                op: "slice_last",
                msg: format!("range {start}..{end} invalid for shape {:?}", xv.shape()),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(xv.len() / c * w);
        for row in xv.data().chunks(c) {
            data.extend_from_slice(&row[start..end]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("rank checked") = w;
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::SliceLast { start }, vec![x])
    }

    /// For a `[n, c]` matrix, picks entry `idx[i]` of row `i`, giving `[n]`.
    pub fn take_along_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || xv.rows() != idx.len() {
            return Err(AutodiffError::Invalid {
                op: "take_along_rows",
                msg: format!("{} indices for shape {:?}", idx.len(), xv.shape()),
            });
        }
        let c = xv.cols();
        if let Some(&bad) = idx.iter().find(|&&j| j >= c) {
            return Err(AutodiffError::Invalid {
                op: "take_along_rows",
                msg: format!("index {bad} out of range for {c} columns"),
            });
        }
        let out = Tensor::vector(
            idx.iter()
                .enumerate()
                .map(|(i, &j)| xv.get2(i, j))
                .collect(),
        );
        self.push(out, Op::TakeAlongRows(idx.to_vec()), vec![x])
    }

    /// Identity on the forward pass; the backward pass multiplies the incoming
    /// gradient by `-scale`.
    pub fn grad_reverse(&mut self, x: Var, scale: f64) -> Result<Var> {
        if !(scale >= 0.0) {
            return Err(AutodiffError::NegativeScale(scale));
        }
        let out = self.value(x).clone();
        self.push(out, Op::GradReverse(scale), vec![x])
    }

    // ----- backward -----

    /// Accumulates `d root / d node` into every node reachable from `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(AutodiffError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut pending: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        pending[root.0] = Some(Tensor::ones(rv.shape()));
        for i in (0..=root.0).rev() {
            let Some(g) = pending[i].take() else {
                continue;
            };
            let contribs = self.local_grads(i, &g);
            for (p, pg) in contribs {
                match &mut pending[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
            self.nodes[i].grad.add_assign(&g);
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let ps = &node.parents;
        let pv = |k: usize| &self.nodes[ps[k].0].value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul => {
                let (a, b) = (pv(0), pv(1));
                let ga = matmul_raw(g, &transpose_raw(b));
                let gb = matmul_raw(&transpose_raw(a), g);
                vec![(ps[0], ga), (ps[1], gb)]
            }
            Op::Add => vec![
                (ps[0], reduce_to(g, pv(0).shape())),
                (ps[1], reduce_to(g, pv(1).shape())),
            ],
            Op::Sub => vec![
                (ps[0], reduce_to(g, pv(0).shape())),
                (ps[1], reduce_to(&g.map(|v| -v), pv(1).shape())),
            ],
            Op::Mul => {
                let (a, b) = (pv(0), pv(1));
                let ga = broadcast_apply(g, b, g.shape(), |gi, bi| gi * bi);
                let gb = broadcast_apply(g, a, g.shape(), |gi, ai| gi * ai);
                vec![
                    (ps[0], reduce_to(&ga, a.shape())),
                    (ps[1], reduce_to(&gb, b.shape())),
                ]
            }
            Op::Div => {
                let (a, b) = (pv(0), pv(1));
                let ga = broadcast_apply(g, b, g.shape(), |gi, bi| gi / bi);
                // d(a/b)/db = -y / b
                let gy = zip_same(g, y, |gi, yi| -gi * yi);
                let gb = broadcast_apply(&gy, b, g.shape(), |v, bi| v / bi);
                vec![
                    (ps[0], reduce_to(&ga, a.shape())),
                    (ps[1], reduce_to(&gb, b.shape())),
                ]
            }
            Op::Neg => vec![(ps[0], g.map(|v| -v))],
            Op::Affine { scale } => vec![(ps[0], g.map(|v| v * scale))],
            Op::Exp => vec![(ps[0], zip_same(g, y, |gi, yi| gi * yi))],
            Op::Log => vec![(ps[0], zip_same(g, pv(0), |gi, xi| gi / xi))],
            Op::Pow(p) => {
                let p = *p;
                vec![(
                    ps[0],
                    zip_same(g, pv(0), |gi, xi| gi * p * xi.powf(p - 1.0)),
                )]
            }
            Op::Relu => vec![(
                ps[0],
                zip_same(g, pv(0), |gi, xi| if xi > 0.0 { gi } else { 0.0 }),
            )],
            Op::Sigmoid => vec![(ps[0], zip_same(g, y, |gi, yi| gi * yi * (1.0 - yi)))],
            Op::Softmax => {
                let c = y.cols();
                let mut out = g.clone();
                for (orow, yrow) in out.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let dot: f64 = orow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for (o, yi) in orow.iter_mut().zip(yrow) {
                        *o = yi * (*o - dot);
                    }
                }
                vec![(ps[0], out)]
            }
            Op::Clamp { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                vec![(
                    ps[0],
                    zip_same(
                        g,
                        pv(0),
                        |gi, xi| {
                            if xi >= lo && xi <= hi {
                                gi
                            } else {
                                0.0
                            }
                        },
                    ),
                )]
            }
            Op::Sum => {
                let s = g.data()[0];
                vec![(ps[0], Tensor::filled(pv(0).shape(), s))]
            }
            Op::Mean => {
                let x = pv(0);
                let s = g.data()[0] / x.len() as f64;
                vec![(ps[0], Tensor::filled(x.shape(), s))]
            }
            Op::SumAxis { axis, .. } => {
                let x = pv(0);
                let (outer, n, inner) = split_axis(x.shape(), *axis);
                let mut data = Vec::with_capacity(x.len());
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for _ in 0..n {
                        data.extend_from_slice(src);
                    }
                }
                vec![(
                    ps[0],
                    Tensor::new(x.shape().to_vec(), data).expect("same size"),
                )]
            }
            Op::Concat { axis } => {
                let base = y.shape();
                let (outer, total, inner) = split_axis(base, *axis);
                let mut offset = 0;
                let mut out = Vec::with_capacity(ps.len());
                for (k, &p) in ps.iter().enumerate() {
                    let s = pv(k).shape();
                    let n = s[*axis];
                    let mut data = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        data.extend_from_slice(&g.data()[start..start + n * inner]);
                    }
                    offset += n;
                    out.push((p, Tensor::new(s.to_vec(), data).expect("same size")));
                }
                out
            }
            Op::Reshape => vec![(ps[0], g.clone().reshaped(pv(0).shape().to_vec()))],
            Op::Transpose => vec![(ps[0], transpose_raw(g))],
            Op::SliceLast { start } => {
                let x = pv(0);
                let c = x.cols();
                let w = y.cols();
                let mut out = Tensor::zeros(x.shape());
                for (orow, grow) in out.data_mut().chunks_mut(c).zip(g.data().chunks(w)) {
                    orow[*start..*start + w].copy_from_slice(grow);
                }
                vec![(ps[0], out)]
            }
            Op::TakeAlongRows(idx) => {
                let x = pv(0);
                let c = x.cols();
                let mut out = Tensor::zeros(x.shape());
                for (i, &j) in idx.iter().enumerate() {
                    out.data_mut()[i * c + j] = g.data()[i];
                }
                vec![(ps[0], out)]
            }
            Op::GradReverse(scale) => {
                let s = *scale;
                vec![(ps[0], g.map(|v| -s * v))]
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out).expect("matmul shape")
}

fn transpose_raw(a: &Tensor) -> Tensor {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).expect("transpose shape")
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Numpy-style broadcast of two shapes, aligned on trailing axes.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for k in 0..rank {
        let da = dim_from_end(a, rank - 1 - k);
        let db = dim_from_end(b, rank - 1 - k);
        out[k] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn dim_from_end(shape: &[usize], k: usize) -> usize {
    if k < shape.len() {
        shape[shape.len() - 1 - k]
    } else {
        1
    }
}

/// Strides of `shape` expressed in coordinates of the broadcast `out` shape;
/// broadcast axes get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for k in (0..shape.len()).rev() {
        if shape[k] != 1 {
            strides[k + offset] = acc;
        }
        acc *= shape[k];
    }
    strides
}

fn broadcast_apply(a: &Tensor, b: &Tensor, out: &[usize], f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == out && b.shape() == out {
        return zip_same(a, b, f);
    }
    let sa = broadcast_strides(a.shape(), out);
    let sb = broadcast_strides(b.shape(), out);
    let n: usize = out.iter().product();
    let mut idx = vec![0usize; out.len()];
    let mut data = Vec::with_capacity(n);
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..n {
        data.push(f(a.data()[oa], b.data()[ob]));
        for k in (0..out.len()).rev() {
            idx[k] += 1;
            oa += sa[k];
            ob += sb[k];
            if idx[k] < out[k] {
                break;
            }
            oa -= sa[k] * idx[k];
            ob -= sb[k] * idx[k];
            idx[k] = 0;
        }
    }
    Tensor::new(out.to_vec(), data).expect("broadcast shape")
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let out = g.shape();
    let strides = broadcast_strides(shape, out);
    let mut acc = Tensor::zeros(shape);
    let mut idx = vec![0usize; out.len()];
    let mut off = 0usize;
    for &v in g.data() {
        acc.data_mut()[off] += v;
        for k in (0..out.len()).rev() {
            idx[k] += 1;
            off += strides[k];
            if idx[k] < out[k] {
                break;
            }
            off -= strides[k] * idx[k];
            idx[k] = 0;
        }
    }
    acc
}

#[cfg(test)]
mod tests;
