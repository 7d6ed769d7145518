//! The tape: a topologically ordered list of nodes, each holding its forward
//! value and the operation that produced it.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine(NodeId, f64),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Sigmoid(NodeId),
    Concat(Vec<NodeId>, usize),
    Gather(NodeId, Vec<usize>, usize),
    ReduceSum(NodeId, usize),
    ReduceMean(NodeId, usize),
    /// Winning index along the axis for every (outer, inner) slot.
    ReduceMax(NodeId, usize, Vec<usize>),
    SumAll(NodeId),
    MeanAll(NodeId),
    Reshape(NodeId),
    Softmax(NodeId, usize),
    Square(NodeId),
    Sqrt(NodeId),
    Log(NodeId),
    Exp(NodeId),
    NormLast(NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => vec![*a, *b],
            Concat(xs, _) => xs.clone(),
            Transpose(x)
            | Affine(x, _)
            | Relu(x)
            | LeakyRelu(x, _)
            | Sigmoid(x)
            | Gather(x, _, _)
            | ReduceSum(x, _)
            | ReduceMean(x, _)
            | ReduceMax(x, _, _)
            | SumAll(x)
            | MeanAll(x)
            | Reshape(x)
            | Softmax(x, _)
            | Square(x)
            | Sqrt(x)
            | Log(x)
            | Exp(x)
            | NormLast(x) => vec![*x],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass. [`Graph::backward`] consumes the
/// graph, so a tape is never reused.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    named: HashMap<String, NodeId>,
    trainable: Vec<(String, NodeId)>,
}

/// Splits `shape` around `axis` into `(outer, dim, inner)` extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Number of times `small` repeats inside `big` when `small` is a trailing
/// suffix of `big`'s shape.
fn broadcast_repeats(big: &[usize], small: &[usize]) -> Option<usize> {
    if small.len() > big.len() || big[big.len() - small.len()..] != *small {
        return None;
    }
    Some(big[..big.len() - small.len()].iter().product())
}

/// `a [m, k] * b [k, n]`.
fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `g [m, n] * b^T` where `b` is `[k, n]`.
fn gemm_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * g` where `a` is `[m, k]` and `g` is `[m, n]`.
fn gemm_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Sums `g` over its leading blocks down to `len` trailing elements.
fn reduce_leading(g: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for chunk in g.chunks_exact(len) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Value of a one-element node.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.value(id).item()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that gradients never flow into.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    /// An anonymous leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    /// Binds a named parameter. Binding the same name again returns the
    /// existing node, so a network evaluated twice on one tape shares its
    /// weights. Frozen parameters behave as constants.
    pub fn bind(&mut self, name: &str, value: &Tensor, trainable: bool) -> NodeId {
        if let Some(&id) = self.named.get(name) {
            return id;
        }
        let id = self.leaf(value.clone(), trainable);
        self.named.insert(name.to_string(), id);
        if trainable {
            self.trainable.push((name.to_string(), id));
        }
        id
    }

    /// Trainable parameters bound so far, in binding order.
    pub fn trainable(&self) -> &[(String, NodeId)] {
        &self.trainable
    }

    /// Hash of every discrete choice on the tape: shapes, gather indices,
    /// relu signs, max winners and zero norms. Two tapes built by the same
    /// code agree on it exactly when they lie on the same smooth piece.
    pub fn structure_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            node.value.shape().hash(&mut h);
            match &node.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => {
                    for v in self.value(*x).data() {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::Gather(_, idx, _) => idx.hash(&mut h),
                Op::ReduceMax(_, _, arg) => arg.hash(&mut h),
                Op::NormLast(_) => {
                    for v in node.value.data() {
                        (*v == 0.0).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue { op: name });
        }
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, a: NodeId, b: NodeId) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    fn check_axis(&self, op: &'static str, x: NodeId, axis: usize) -> Result<()> {
        if axis >= self.shape(x).len() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(x).to_vec(),
                right: vec![axis],
            });
        }
        Ok(())
    }

    /// `a [..., k] x b [k, n] -> [..., n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.is_empty() || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (k, n) = (sb[0], sb[1]);
        let m = self.value(a).numel() / k.max(1);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        let data = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(Tensor::new(shape, data)?, Op::MatMul(a, b), "matmul")
    }

    /// Transpose of a 2-D tensor.
    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(self.mismatch("transpose", x, x));
        }
        let (m, n) = (s[0], s[1]);
        let v = self.value(x).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = v[i * n + j];
            }
        }
        self.push(Tensor::new(vec![n, m], data)?, Op::Transpose(x), "transpose")
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let reps = broadcast_repeats(self.shape(a), self.shape(b))
            .ok_or_else(|| self.mismatch(name, a, b))?;
        let bv = self.value(b).data();
        let len = bv.len();
        let av = self.value(a).data();
        let mut data = Vec::with_capacity(av.len());
        for r in 0..reps {
            for j in 0..len {
                data.push(f(av[r * len + j], bv[j]));
            }
        }
        Tensor::new(self.shape(a).to_vec(), data)
    }

    /// Elementwise `a + b`; `b` may broadcast over `a`'s leading axes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add(a, b), "add")
    }

    /// Elementwise `a - b`, broadcasting like [`Graph::add`].
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(t, Op::Sub(a, b), "sub")
    }

    /// Elementwise `a * b`, broadcasting like [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul(a, b), "mul")
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        let t = self.map(x, |v| scale * v + shift);
        self.push(t, Op::Affine(x, scale), "affine")
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> Result<NodeId> {
        self.affine(x, s, 0.0)
    }

    fn map(&self, x: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect())
            .expect("same shape")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.map(x, |v| v.max(0.0));
        self.push(t, Op::Relu(x), "relu")
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        let t = self.map(x, |v| if v > 0.0 { v } else { slope * v });
        self.push(t, Op::LeakyRelu(x, slope), "leaky_relu")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.map(x, |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        self.push(t, Op::Sigmoid(x), "sigmoid")
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.map(x, |v| v * v);
        self.push(t, Op::Square(x), "square")
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.map(x, f64::sqrt);
        self.push(t, Op::Sqrt(x), "sqrt")
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.map(x, f64::ln);
        self.push(t, Op::Log(x), "log")
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.map(x, f64::exp);
        self.push(t, Op::Exp(x), "exp")
    }

    /// Concatenates tensors that agree on every axis except `axis`.
    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(self.mismatch("concat", first, x));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let d = self.shape(x)[axis];
                let v = self.value(x).data();
                data.extend_from_slice(&v[o * d * inner..(o + 1) * d * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        self.push(Tensor::new(shape, data)?, Op::Concat(xs.to_vec(), axis), "concat")
    }

    /// Selects `indices` along `axis` (repeats allowed).
    pub fn gather(&mut self, x: NodeId, indices: &[usize], axis: usize) -> Result<NodeId> {
        self.check_axis("gather", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: dim,
            });
        }
        let v = self.value(x).data();
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let start = (o * dim + i) * inner;
                data.extend_from_slice(&v[start..start + inner]);
            }
        }
        let mut out_shape = shape;
        out_shape[axis] = indices.len();
        self.push(
            Tensor::new(out_shape, data)?,
            Op::Gather(x, indices.to_vec(), axis),
            "gather",
        )
    }

    fn reduce(&self, x: NodeId, axis: usize, init: f64, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let shape = self.shape(x);
        let (outer, dim, inner) = split_axis(shape, axis);
        let v = self.value(x).data();
        let mut data = vec![init; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                for i in 0..inner {
                    let slot = &mut data[o * inner + i];
                    *slot = f(*slot, v[(o * dim + d) * inner + i]);
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        Tensor::new(out_shape, data).expect("reduced shape")
    }

    /// Sums over `axis`, removing it.
    pub fn reduce_sum(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("reduce_sum", x, axis)?;
        let t = self.reduce(x, axis, 0.0, |a, b| a + b);
        self.push(t, Op::ReduceSum(x, axis), "reduce_sum")
    }

    /// Averages over `axis`, removing it.
    pub fn reduce_mean(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("reduce_mean", x, axis)?;
        let dim = self.shape(x)[axis];
        if dim == 0 {
            return Err(Error::InvalidArgument("mean over an empty axis".into()));
        }
        let mut t = self.reduce(x, axis, 0.0, |a, b| a + b);
        t.scale_in_place(1.0 / dim as f64);
        self.push(t, Op::ReduceMean(x, axis), "reduce_mean")
    }

    /// Maximum over `axis`, removing it. The gradient goes to the lowest
    /// index attaining the maximum.
    pub fn reduce_max(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("reduce_max", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis);
        if dim == 0 {
            return Err(Error::InvalidArgument("max over an empty axis".into()));
        }
        let v = self.value(x).data();
        let mut data = vec![f64::NEG_INFINITY; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                for i in 0..inner {
                    let val = v[(o * dim + d) * inner + i];
                    let slot = o * inner + i;
                    if d == 0 || val > data[slot] {
                        data[slot] = val;
                        arg[slot] = d;
                    }
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        self.push(
            Tensor::new(out_shape, data)?,
            Op::ReduceMax(x, axis, arg),
            "reduce_max",
        )
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), "sum")
    }

    /// Mean of every element, as a scalar.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.numel() == 0 {
            return Err(Error::InvalidArgument("mean of an empty tensor".into()));
        }
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x), "mean")
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.value(x).clone().reshaped(shape)?;
        self.push(t, Op::Reshape(x), "reshape")
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        self.check_axis("softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, dim, inner) = split_axis(&shape, axis);
        let v = self.value(x).data();
        let mut data = vec![0.0; v.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |d: usize| (o * dim + d) * inner + i;
                let m = (0..dim).map(|d| v[at(d)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for d in 0..dim {
                    let e = (v[at(d)] - m).exp();
                    data[at(d)] = e;
                    z += e;
                }
                for d in 0..dim {
                    data[at(d)] /= z;
                }
            }
        }
        self.push(Tensor::new(shape, data)?, Op::Softmax(x, axis), "softmax")
    }

    /// Euclidean norm over the last axis, removing it. The gradient at a zero
    /// vector is taken as zero.
    pub fn norm_last(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() {
            return Err(self.mismatch("norm_last", x, x));
        }
        let d = shape[shape.len() - 1];
        let data = self
            .value(x)
            .data()
            .chunks_exact(d.max(1))
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::new(shape[..shape.len() - 1].to_vec(), data)?;
        self.push(out, Op::NormLast(x), "norm_last")
    }

    /// Reverse-mode sweep from a scalar `loss`. Every trainable or variable
    /// leaf gets a gradient, zero when the loss does not depend on it.
    pub fn backward(self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: self.shape(loss).to_vec(),
                right: Vec::new(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop(id, &g, &mut grads);
        }

        let mut by_node = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                if !g.is_finite() {
                    return Err(Error::NonFiniteValue { op: "backward" });
                }
                by_node.insert(NodeId(i), g);
            }
        }
        let by_name = self
            .trainable
            .iter()
            .map(|(name, id)| (name.clone(), by_node[id].clone()))
            .collect();
        Ok(Gradients { by_node, by_name })
    }

    fn backprop(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let out = &nodes[id].value;
        let val = |x: NodeId| &nodes[x.0].value;
        let wants = |x: NodeId| nodes[x.0].requires_grad;
        let mut acc = |x: NodeId, t: Tensor| match &mut grads[x.0] {
            Some(e) => e.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let like = |x: NodeId, data: Vec<f64>| {
            Tensor::new(nodes[x.0].value.shape().to_vec(), data).expect("gradient shape")
        };
        let gd = g.data();

        match &nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (val(*a).shape(), val(*b).shape());
                let (k, n) = (sb[0], sb[1]);
                let m = val(*a).numel() / k.max(1);
                if wants(*a) {
                    acc(*a, like(*a, gemm_bt(gd, val(*b).data(), m, k, n)));
                }
                if wants(*b) {
                    acc(*b, like(*b, gemm_at(val(*a).data(), gd, m, k, n)));
                }
                let _ = sa;
            }
            Op::Transpose(x) => {
                let s = val(*x).shape();
                let (m, n) = (s[0], s[1]);
                let mut data = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        data[i * n + j] = gd[j * m + i];
                    }
                }
                acc(*x, like(*x, data));
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(nodes[id].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    let mut r = reduce_leading(gd, val(*b).numel());
                    if sign < 0.0 {
                        r.iter_mut().for_each(|v| *v = -*v);
                    }
                    acc(*b, like(*b, r));
                }
            }
            Op::Mul(a, b) => {
                let av = val(*a).data();
                let bv = val(*b).data();
                let len = bv.len();
                if wants(*a) {
                    let data = gd.iter().enumerate().map(|(i, v)| v * bv[i % len]).collect();
                    acc(*a, like(*a, data));
                }
                if wants(*b) {
                    let prod: Vec<f64> = gd.iter().zip(av).map(|(x, y)| x * y).collect();
                    acc(*b, like(*b, reduce_leading(&prod, len)));
                }
            }
            Op::Affine(x, s) => {
                acc(*x, like(*x, gd.iter().map(|v| v * s).collect()));
            }
            Op::Relu(x) => {
                let xv = val(*x).data();
                let data = gd
                    .iter()
                    .zip(xv)
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(*x, like(*x, data));
            }
            Op::LeakyRelu(x, slope) => {
                let xv = val(*x).data();
                let data = gd
                    .iter()
                    .zip(xv)
                    .map(|(g, x)| if *x > 0.0 { *g } else { slope * g })
                    .collect();
                acc(*x, like(*x, data));
            }
            Op::Sigmoid(x) => {
                let data = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                acc(*x, like(*x, data));
            }
            Op::Square(x) => {
                let data = gd
                    .iter()
                    .zip(val(*x).data())
                    .map(|(g, x)| 2.0 * x * g)
                    .collect();
                acc(*x, like(*x, data));
            }
            Op::Sqrt(x) => {
                let data = gd
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| g * 0.5 / y)
                    .collect();
                acc(*x, like(*x, data));
            }
            Op::Log(x) => {
                let data = gd.iter().zip(val(*x).data()).map(|(g, x)| g / x).collect();
                acc(*x, like(*x, data));
            }
            Op::Exp(x) => {
                let data = gd.iter().zip(out.data()).map(|(g, y)| g * y).collect();
                acc(*x, like(*x, data));
            }
            Op::Concat(xs, axis) => {
                let shape = out.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &x in xs {
                    let d = val(x).shape()[*axis];
                    if wants(x) {
                        let mut data = Vec::with_capacity(outer * d * inner);
                        for o in 0..outer {
                            let start = (o * total + offset) * inner;
                            data.extend_from_slice(&gd[start..start + d * inner]);
                        }
                        acc(x, like(x, data));
                    }
                    offset += d;
                }
            }
            Op::Gather(x, indices, axis) => {
                let (outer, dim, inner) = split_axis(val(*x).shape(), *axis);
                let mut data = vec![0.0; outer * dim * inner];
                let len = indices.len();
                for o in 0..outer {
                    for (j, &i) in indices.iter().enumerate() {
                        let src = (o * len + j) * inner;
                        let dst = (o * dim + i) * inner;
                        for t in 0..inner {
                            data[dst + t] += gd[src + t];
                        }
                    }
                }
                acc(*x, like(*x, data));
            }
            Op::ReduceSum(x, axis) | Op::ReduceMean(x, axis) => {
                let (outer, dim, inner) = split_axis(val(*x).shape(), *axis);
                let f = if matches!(nodes[id].op, Op::ReduceMean(..)) {
                    1.0 / dim as f64
                } else {
                    1.0
                };
                let mut data = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    for d in 0..dim {
                        for i in 0..inner {
                            data[(o * dim + d) * inner + i] = gd[o * inner + i] * f;
                        }
                    }
                }
                acc(*x, like(*x, data));
            }
            Op::ReduceMax(x, axis, arg) => {
                let (outer, dim, inner) = split_axis(val(*x).shape(), *axis);
                let mut data = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let slot = o * inner + i;
                        data[(o * dim + arg[slot]) * inner + i] = gd[slot];
                    }
                }
                acc(*x, like(*x, data));
            }
            Op::SumAll(x) => {
                acc(*x, Tensor::full(val(*x).shape(), gd[0]));
            }
            Op::MeanAll(x) => {
                let n = val(*x).numel() as f64;
                acc(*x, Tensor::full(val(*x).shape(), gd[0] / n));
            }
            Op::Reshape(x) => {
                acc(*x, like(*x, gd.to_vec()));
            }
            Op::Softmax(x, axis) => {
                let (outer, dim, inner) = split_axis(out.shape(), *axis);
                let y = out.data();
                let mut data = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |d: usize| (o * dim + d) * inner + i;
                        let dotp: f64 = (0..dim).map(|d| gd[at(d)] * y[at(d)]).sum();
                        for d in 0..dim {
                            data[at(d)] = y[at(d)] * (gd[at(d)] - dotp);
                        }
                    }
                }
                acc(*x, like(*x, data));
            }
            Op::NormLast(x) => {
                let xv = val(*x).data();
                let d = *val(*x).shape().last().expect("rank >= 1");
                let y = out.data();
                let mut data = vec![0.0; xv.len()];
                for (r, (&norm, &gr)) in y.iter().zip(gd).enumerate() {
                    if norm > 0.0 {
                        for c in 0..d {
                            data[r * d + c] = gr * xv[r * d + c] / norm;
                        }
                    }
                }
                acc(*x, like(*x, data));
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_node: HashMap<NodeId, Tensor>,
    by_name: HashMap<String, Tensor>,
}

impl Gradients {
    /// Gradient with respect to a variable or trainable leaf.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(&id)
    }

    /// Gradient of a named trainable parameter.
    pub fn named(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    /// Accumulates another set of named gradients into this one.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.by_name {
            match self.by_name.get_mut(name) {
                Some(e) => e.add_assign(g),
                None => {
                    self.by_name.insert(name.clone(), g.clone());
                }
            }
        }
    }

    /// Multiplies every named gradient by `s`.
    pub fn scale(&mut self, s: f64) {
        for g in self.by_name.values_mut() {
            g.scale_in_place(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_backward_masks_negatives() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![-1.0, 2.0]));
        let y = g.relu(x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = g.square(x).unwrap();
        let s = g.sum(y).unwrap();
        assert_eq!(g.scalar(s).unwrap(), 14.0);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut g = Graph::new();
        let w = g.bind("w", &Tensor::vector(vec![1.0, 2.0]), true);
        let c = g.constant(Tensor::scalar(3.0));
        let l = g.scale(c, 2.0).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(w).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.named("w").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn bind_is_idempotent_and_frozen_is_constant() {
        let mut g = Graph::new();
        let a = g.bind("a", &Tensor::scalar(1.0), true);
        let b = g.bind("a", &Tensor::scalar(5.0), true);
        assert_eq!(a, b);
        assert_eq!(g.scalar(a).unwrap(), 1.0);
        let f = g.bind("f", &Tensor::scalar(1.0), false);
        assert!(!g.requires_grad(f));
        assert_eq!(g.trainable().len(), 1);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, -5.0, 0.0, 700.0]));
        let y = g.softmax(x, 1).unwrap();
        for row in g.value(y).data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 4]));
        match g.matmul(a, b) {
            Err(Error::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 4]);
            }
            other => panic!("{other:?}"),
        }
        assert!(g.add(a, b).is_err());
    }

    #[test]
    fn non_finite_results_are_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0]));
        assert!(matches!(g.log(x), Err(Error::NonFiniteValue { op: "log" })));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn broadcast_add_reduces_gradient() {
        let mut g = Graph::new();
        let a = g.variable(Tensor::zeros(&[4, 2]));
        let b = g.variable(Tensor::vector(vec![1.0, 2.0]));
        let c = g.add(a, b).unwrap();
        let s = g.sum(c).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(b).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn reduce_max_ties_go_to_lowest_index() {
        let mut g = Graph::new();
        let x = g.variable(t(&[3, 1], &[2.0, 2.0, 1.0]));
        let m = g.reduce_max(x, 0).unwrap();
        let s = g.sum(m).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn gather_and_concat_layouts() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]));
        let y = g.gather(x, &[2, 0, 2], 0).unwrap();
        assert_eq!(g.value(y).data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
        let z = g.concat(&[x, x], 1).unwrap();
        assert_eq!(g.shape(z), &[3, 4]);
        assert_eq!(&g.value(z).data()[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            g.gather(x, &[3], 0),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn norm_gradient_is_zero_at_origin() {
        let mut g = Graph::new();
        let x = g.variable(t(&[2, 3], &[0.0, 0.0, 0.0, 3.0, 4.0, 0.0]));
        let n = g.norm_last(x).unwrap();
        assert_eq!(g.value(n).data(), &[0.0, 5.0]);
        let s = g.sum(n).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 0.0, 0.0, 0.6, 0.8, 0.0]);
    }
}
