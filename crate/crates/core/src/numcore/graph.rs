//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, so the node list is
//! already a topological order and [`Graph::backward`] is a single reverse sweep.
//! Node values are reference counted: binding a parameter tensor into a graph
//! does not copy it.

use std::fmt;
use std::sync::Arc;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds, used for diagnostics and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    MatVec,
    Add,
    Sub,
    Mul,
    AddRowwise,
    Scale,
    OneMinus,
    Sigmoid,
    Tanh,
    Relu,
    MaxPoolTime,
    Softmax,
    SoftmaxNll,
    SumAll,
    Mean,
    Concat,
    StackRows,
    Gather,
    PadRows,
    SelectRow,
    Conv1d,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::MatVec => "matvec",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::AddRowwise => "add_rowwise",
            OpKind::Scale => "scale",
            OpKind::OneMinus => "one_minus",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::MaxPoolTime => "max_pool_time",
            OpKind::Softmax => "softmax",
            OpKind::SoftmaxNll => "softmax_nll",
            OpKind::SumAll => "sum",
            OpKind::Mean => "mean",
            OpKind::Concat => "concat",
            OpKind::StackRows => "stack_rows",
            OpKind::Gather => "gather",
            OpKind::PadRows => "pad_rows",
            OpKind::SelectRow => "select_row",
            OpKind::Conv1d => "conv1d",
        }
    }

    pub const ALL: [OpKind; 22] = [
        OpKind::MatMul,
        OpKind::MatVec,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::AddRowwise,
        OpKind::Scale,
        OpKind::OneMinus,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::Relu,
        OpKind::MaxPoolTime,
        OpKind::Softmax,
        OpKind::SoftmaxNll,
        OpKind::SumAll,
        OpKind::Mean,
        OpKind::Concat,
        OpKind::StackRows,
        OpKind::Gather,
        OpKind::PadRows,
        OpKind::SelectRow,
        OpKind::Conv1d,
    ];
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRowwise(NodeId, NodeId),
    Scale(NodeId, T),
    OneMinus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    MaxPoolTime { input: NodeId, argmax: Vec<usize> },
    Softmax(NodeId),
    SoftmaxNll { logits: NodeId, target: usize, probs: Vec<T> },
    SumAll(NodeId),
    Mean(Vec<NodeId>),
    Concat(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    Gather { table: NodeId, ids: Vec<usize> },
    PadRows(NodeId),
    SelectRow { input: NodeId, row: usize },
    Conv1d { input: NodeId, filters: NodeId },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::MatVec(..) => OpKind::MatVec,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::AddRowwise(..) => OpKind::AddRowwise,
            Op::Scale(..) => OpKind::Scale,
            Op::OneMinus(..) => OpKind::OneMinus,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Relu(..) => OpKind::Relu,
            Op::MaxPoolTime { .. } => OpKind::MaxPoolTime,
            Op::Softmax(..) => OpKind::Softmax,
            Op::SoftmaxNll { .. } => OpKind::SoftmaxNll,
            Op::SumAll(..) => OpKind::SumAll,
            Op::Mean(..) => OpKind::Mean,
            Op::Concat(..) => OpKind::Concat,
            Op::StackRows(..) => OpKind::StackRows,
            Op::Gather { .. } => OpKind::Gather,
            Op::PadRows(..) => OpKind::PadRows,
            Op::SelectRow { .. } => OpKind::SelectRow,
            Op::Conv1d { .. } => OpKind::Conv1d,
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Arc<Tensor<T>>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients<T = f64> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

pub struct Graph<T = f64> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numerically_stable_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_values<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<T: Real> Graph<T> {
    /// Finite-value checking follows `debug_assertions`.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
            fault: None,
        }
    }

    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    /// Test hook: scales the backward contribution of every `kind` node by 1.5.
    pub fn inject_gradient_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Result<NodeId> {
        let kind = op.kind();
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite(kind.name()));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            _ => self.inputs(&op).iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value: Arc::new(value),
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op<T>) -> Vec<NodeId> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatVec(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRowwise(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::OneMinus(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Softmax(a)
            | Op::SumAll(a)
            | Op::PadRows(a) => vec![*a],
            Op::MaxPoolTime { input, .. } => vec![*input],
            Op::SoftmaxNll { logits, .. } => vec![*logits],
            Op::Mean(v) | Op::Concat(v) | Op::StackRows(v) => v.clone(),
            Op::Gather { table, .. } => vec![*table],
            Op::SelectRow { input, .. } => vec![*input],
            Op::Conv1d { input, filters } => vec![*input, *filters],
        }
    }

    fn leaf_node(&mut self, value: Arc<Tensor<T>>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A trainable input.
    pub fn variable(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf_node(Arc::new(value), true)
    }

    /// A trainable input sharing storage with the caller.
    pub fn param(&mut self, value: Arc<Tensor<T>>) -> NodeId {
        self.leaf_node(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf_node(Arc::new(value), false)
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op<T>, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> Result<NodeId> {
        self.same_shape(op.kind().name(), a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push(op, out)
    }

    fn unary(&mut self, op: Op<T>, a: NodeId, f: impl Fn(T) -> T) -> Result<NodeId> {
        let out = self.value(a).map(f);
        self.push(op, out)
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = va[i * k + p];
                for (o, &bv) in row.iter_mut().zip(&vb[p * n..(p + 1) * n]) {
                    *o = *o + aip * bv;
                }
            }
        }
        let out = Tensor::new(vec![m, n], out)?;
        self.push(Op::MatMul(a, b), out)
    }

    /// `[m×k] · [k] → [m]`.
    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        let (sa, sx) = (self.shape(a), self.shape(x));
        if sa.len() != 2 || sx.len() != 1 || sa[1] != sx[0] {
            return Err(Error::dim("matvec", sa, sx));
        }
        let (m, k) = (sa[0], sa[1]);
        let (va, vx) = (self.value(a).data(), self.value(x).data());
        let out: Vec<T> = (0..m)
            .map(|i| {
                va[i * k..(i + 1) * k]
                    .iter()
                    .zip(vx)
                    .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
            })
            .collect();
        let out = Tensor::new(vec![m], out)?;
        self.push(Op::MatVec(a, x), out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    /// Adds `bias[n]` to every row of `a[m×n]`, or to a vector `a[n]`.
    pub fn add_rowwise(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.len() != 1 || sa.is_empty() || sa.len() > 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::dim("add_rowwise", sa, sb));
        }
        let vb = self.value(bias).data().to_vec();
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_mut(vb.len()) {
            for (o, &b) in chunk.iter_mut().zip(&vb) {
                *o = *o + b;
            }
        }
        self.push(Op::AddRowwise(a, bias), out)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        self.unary(Op::Scale(a, c), a, |x| x * c)
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::OneMinus(a), a, |x| T::one() - x)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Sigmoid(a), a, numerically_stable_sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Tanh(a), a, T::tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu(a), a, |x| if x > T::zero() { x } else { T::zero() })
    }

    /// Column-wise maximum over the rows of `h[T×d]`.
    pub fn max_pool_time(&mut self, h: NodeId) -> Result<NodeId> {
        let v = self.value(h);
        if v.rank() != 2 {
            return Err(Error::dim("max_pool_time", v.shape(), &[]));
        }
        let (rows, cols) = (v.shape()[0], v.shape()[1]);
        let mut argmax = vec![0usize; cols];
        let mut out = v.row(0).to_vec();
        for t in 1..rows {
            for (j, &x) in v.row(t).iter().enumerate() {
                if x > out[j] {
                    out[j] = x;
                    argmax[j] = t;
                }
            }
        }
        let out = Tensor::vector(out)?;
        self.push(Op::MaxPoolTime { input: h, argmax }, out)
    }

    pub fn softmax(&mut self, logits: NodeId) -> Result<NodeId> {
        let v = self.value(logits);
        if v.rank() != 1 {
            return Err(Error::dim("softmax", v.shape(), &[]));
        }
        let out = Tensor::vector(softmax_values(v.data()))?;
        self.push(Op::Softmax(logits), out)
    }

    /// `−log softmax(logits)[target]` in log-sum-exp form.
    pub fn softmax_nll(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let v = self.value(logits);
        if v.rank() != 1 {
            return Err(Error::dim("softmax_nll", v.shape(), &[]));
        }
        let k = v.numel();
        if target >= k {
            return Err(Error::Index {
                what: "softmax_nll target",
                index: target,
                len: k,
            });
        }
        let data = v.data();
        // loss = (max − x_target) + ln(1 + Σ_{i≠argmax} e^(x_i − max))
        let arg = Tensor::argmax(v);
        let max = data[arg];
        let rest: T = data
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != arg)
            .map(|(_, &x)| (x - max).exp())
            .sum();
        let loss = (max - data[target]) + rest.ln_1p();
        let probs = softmax_values(data);
        self.push(
            Op::SoftmaxNll {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
        )
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    /// Mean of one-element nodes.
    pub fn mean(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::EmptySequence("mean"));
        }
        let mut total = T::zero();
        for &i in items {
            total = total + self.value(i).item()?;
        }
        let n = T::from_usize(items.len()).expect("count fits");
        self.push(Op::Mean(items.to_vec()), Tensor::scalar(total / n))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::EmptySequence("concat"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 1 {
                return Err(Error::dim("concat", v.shape(), &[]));
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::vector(data)?;
        self.push(Op::Concat(parts.to_vec()), out)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId> {
        if rows.is_empty() {
            return Err(Error::EmptySequence("stack_rows"));
        }
        let width = self.shape(rows[0]).to_vec();
        if width.len() != 1 {
            return Err(Error::dim("stack_rows", &width, &[]));
        }
        let mut data = Vec::with_capacity(rows.len() * width[0]);
        for &r in rows {
            if self.shape(r) != width.as_slice() {
                return Err(Error::dim("stack_rows", &width, self.shape(r)));
            }
            data.extend_from_slice(self.value(r).data());
        }
        let out = Tensor::matrix(rows.len(), width[0], data)?;
        self.push(Op::StackRows(rows.to_vec()), out)
    }

    /// Selects rows of `table[V×D]` by id, giving `[L×D]`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::dim("gather", t.shape(), &[]));
        }
        if ids.is_empty() {
            return Err(Error::EmptySequence("gather"));
        }
        let (v, d) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    what: "embedding id",
                    index: id,
                    len: v,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            out,
        )
    }

    /// Right-pads `a[L×D]` with zero rows up to `rows` rows; a no-op copy when
    /// `L >= rows`.
    pub fn pad_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(Error::dim("pad_rows", v.shape(), &[]));
        }
        let (l, d) = (v.shape()[0], v.shape()[1]);
        let target = l.max(rows);
        let mut data = v.data().to_vec();
        data.resize(target * d, T::zero());
        let out = Tensor::matrix(target, d, data)?;
        self.push(Op::PadRows(a), out)
    }

    /// Row `row` of a matrix as a vector.
    pub fn select_row(&mut self, a: NodeId, row: usize) -> Result<NodeId> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(Error::dim("select_row", v.shape(), &[]));
        }
        if row >= v.shape()[0] {
            return Err(Error::Index {
                what: "select_row",
                index: row,
                len: v.shape()[0],
            });
        }
        let out = Tensor::vector(v.row(row).to_vec())?;
        self.push(Op::SelectRow { input: a, row }, out)
    }

    /// Valid 1-D convolution over time: `x[L×D]` with `filters[F×w×D]` gives
    /// `[(L−w+1)×F]`, where `out[t][f] = Σ_i Σ_d x[t+i][d]·W[f][i][d]`.
    pub fn conv1d(&mut self, x: NodeId, filters: NodeId) -> Result<NodeId> {
        let (sx, sf) = (self.shape(x), self.shape(filters));
        if sx.len() != 2 || sf.len() != 3 || sx[1] != sf[2] || sx[0] < sf[1] {
            return Err(Error::dim("conv1d", sx, sf));
        }
        let (l, d) = (sx[0], sx[1]);
        let (f, w) = (sf[0], sf[1]);
        let steps = l - w + 1;
        let (vx, vf) = (self.value(x).data(), self.value(filters).data());
        let span = w * d;
        let mut out = vec![T::zero(); steps * f];
        for t in 0..steps {
            let window = &vx[t * d..t * d + span];
            for k in 0..f {
                let kernel = &vf[k * span..(k + 1) * span];
                out[t * f + k] = window
                    .iter()
                    .zip(kernel)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            }
        }
        let out = Tensor::matrix(steps, f, out)?;
        self.push(Op::Conv1d { input: x, filters }, out)
    }

    /// Reverse sweep from a one-element `loss` node.
    ///
    /// Every node that requires a gradient gets one; leaves unreachable from
    /// the loss get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::filled(lv.shape(), T::one()));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(mut upstream) = grads[idx].take() else {
                continue;
            };
            if self.fault == Some(node.op.kind()) {
                upstream.scale_in_place(T::lit(1.5));
            }
            self.propagate(idx, &upstream, &mut grads)?;
            grads[idx] = Some(upstream);
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
        if !self.nodes[id.0].requires_grad {
            return Ok(());
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], id: NodeId) -> &'g mut Tensor<T> {
        grads[id.0].get_or_insert_with(|| Tensor::zeros(self.nodes[id.0].value.shape()))
    }

    fn propagate(&self, idx: usize, up: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        let shaped = |data: Vec<T>, like: NodeId| Tensor::new(self.shape(like).to_vec(), data);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                let (da, db, g) = (va.data(), vb.data(), up.data());
                if self.requires_grad(*a) {
                    // dA = G · Bᵀ
                    let mut ga = vec![T::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] = (0..n).fold(T::zero(), |acc, j| acc + g[i * n + j] * db[p * n + j]);
                        }
                    }
                    self.accumulate(grads, *a, shaped(ga, *a)?)?;
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · G
                    let mut gb = vec![T::zero(); k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let aip = da[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] = gb[p * n + j] + aip * g[i * n + j];
                            }
                        }
                    }
                    self.accumulate(grads, *b, shaped(gb, *b)?)?;
                }
            }
            Op::MatVec(a, x) => {
                let (va, vx) = (self.value(*a), self.value(*x));
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let g = up.data();
                if self.requires_grad(*a) {
                    let slot = self.grad_slot(grads, *a).data_mut();
                    for i in 0..m {
                        for (s, &xv) in slot[i * k..(i + 1) * k].iter_mut().zip(vx.data()) {
                            *s = *s + g[i] * xv;
                        }
                    }
                }
                if self.requires_grad(*x) {
                    let mut gx = vec![T::zero(); k];
                    for i in 0..m {
                        for (o, &w) in gx.iter_mut().zip(&va.data()[i * k..(i + 1) * k]) {
                            *o = *o + g[i] * w;
                        }
                    }
                    self.accumulate(grads, *x, shaped(gx, *x)?)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone())?;
                self.accumulate(grads, *b, up.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, up.clone())?;
                self.accumulate(grads, *b, up.map(|v| -v))?;
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let d = up.data().iter().zip(vb.data()).map(|(&g, &y)| g * y).collect();
                    self.accumulate(grads, *a, shaped(d, *a)?)?;
                }
                if self.requires_grad(*b) {
                    let d = up.data().iter().zip(va.data()).map(|(&g, &x)| g * x).collect();
                    self.accumulate(grads, *b, shaped(d, *b)?)?;
                }
            }
            Op::AddRowwise(a, bias) => {
                self.accumulate(grads, *a, up.clone())?;
                if self.requires_grad(*bias) {
                    let n = self.shape(*bias)[0];
                    let mut gb = vec![T::zero(); n];
                    for chunk in up.data().chunks(n) {
                        for (o, &g) in gb.iter_mut().zip(chunk) {
                            *o = *o + g;
                        }
                    }
                    self.accumulate(grads, *bias, shaped(gb, *bias)?)?;
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, up.map(|g| g * c))?;
            }
            Op::OneMinus(a) => self.accumulate(grads, *a, up.map(|g| -g))?,
            Op::Sigmoid(a) => {
                let d = up
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * y * (T::one() - y))
                    .collect();
                self.accumulate(grads, *a, shaped(d, *a)?)?;
            }
            Op::Tanh(a) => {
                let d = up
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * (T::one() - y * y))
                    .collect();
                self.accumulate(grads, *a, shaped(d, *a)?)?;
            }
            Op::Relu(a) => {
                let d = up
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(grads, *a, shaped(d, *a)?)?;
            }
            Op::MaxPoolTime { input, argmax } => {
                if self.requires_grad(*input) {
                    let cols = argmax.len();
                    let slot = self.grad_slot(grads, *input).data_mut();
                    for (j, &t) in argmax.iter().enumerate() {
                        slot[t * cols + j] = slot[t * cols + j] + up.data()[j];
                    }
                }
            }
            Op::Softmax(a) => {
                // dx_i = y_i (g_i − Σ_j g_j y_j)
                let y = out.data();
                let dot: T = up.data().iter().zip(y).map(|(&g, &p)| g * p).sum();
                let d = up.data().iter().zip(y).map(|(&g, &p)| p * (g - dot)).collect();
                self.accumulate(grads, *a, shaped(d, *a)?)?;
            }
            Op::SoftmaxNll {
                logits,
                target,
                probs,
            } => {
                let g = up.data()[0];
                let d = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if i == *target { (p - T::one()) * g } else { p * g })
                    .collect();
                self.accumulate(grads, *logits, shaped(d, *logits)?)?;
            }
            Op::SumAll(a) => {
                let g = up.data()[0];
                self.accumulate(grads, *a, Tensor::filled(self.shape(*a), g))?;
            }
            Op::Mean(items) => {
                let g = up.data()[0] / T::from_usize(items.len()).expect("count fits");
                for &i in items {
                    self.accumulate(grads, i, Tensor::filled(self.shape(i), g))?;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    let slice = up.data()[offset..offset + n].to_vec();
                    self.accumulate(grads, p, shaped(slice, p)?)?;
                    offset += n;
                }
            }
            Op::StackRows(rows) => {
                for (t, &r) in rows.iter().enumerate() {
                    self.accumulate(grads, r, shaped(up.row(t).to_vec(), r)?)?;
                }
            }
            Op::Gather { table, ids } => {
                if self.requires_grad(*table) {
                    let slot = self.grad_slot(grads, *table);
                    for (t, &id) in ids.iter().enumerate() {
                        for (s, &g) in slot.row_mut(id).iter_mut().zip(up.row(t)) {
                            *s = *s + g;
                        }
                    }
                }
            }
            Op::PadRows(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, shaped(up.data()[..n].to_vec(), *a)?)?;
            }
            Op::SelectRow { input, row } => {
                if self.requires_grad(*input) {
                    let slot = self.grad_slot(grads, *input);
                    for (s, &g) in slot.row_mut(*row).iter_mut().zip(up.data()) {
                        *s = *s + g;
                    }
                }
            }
            Op::Conv1d { input, filters } => {
                let (vx, vf) = (self.value(*input), self.value(*filters));
                let d = vx.shape()[1];
                let (f, w) = (vf.shape()[0], vf.shape()[1]);
                let span = w * d;
                let steps = up.shape()[0];
                let g = up.data();
                if self.requires_grad(*input) {
                    let slot = self.grad_slot(grads, *input).data_mut();
                    for t in 0..steps {
                        for k in 0..f {
                            let gk = g[t * f + k];
                            let kernel = &vf.data()[k * span..(k + 1) * span];
                            for (s, &wv) in slot[t * d..t * d + span].iter_mut().zip(kernel) {
                                *s = *s + gk * wv;
                            }
                        }
                    }
                }
                if self.requires_grad(*filters) {
                    let slot = self.grad_slot(grads, *filters).data_mut();
                    for t in 0..steps {
                        let window = &vx.data()[t * d..t * d + span];
                        for k in 0..f {
                            let gk = g[t * f + k];
                            for (s, &xv) in slot[k * span..(k + 1) * span].iter_mut().zip(window) {
                                *s = *s + gk * xv;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    fn v(data: &[f64]) -> Tensor {
        Tensor::vector(data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let mut g = Graph::<f64>::new();
        let eye = g.constant(t2(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let a = g.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let p = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
        let b = g.constant(t2(&[&[5.0], &[6.0]]));
        let q = g.matmul(a, b).unwrap();
        assert_eq!(g.value(q).shape(), &[2, 1]);
        assert_eq!(g.value(q).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn matmul_grad_is_ones_times_b_transpose() {
        let mut g = Graph::<f64>::new();
        let a = g.variable(t2(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.constant(t2(&[&[5.0, 7.0], &[6.0, 8.0]]));
        let p = g.matmul(a, b).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        // ones(2×2)·Bᵀ: row sums of B.
        assert_eq!(grads.get(a).unwrap().data(), &[12.0, 14.0, 12.0, 14.0]);
    }

    #[test]
    fn activations_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(v(&[0.0]));
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(s).data(), &[0.5]);
        let t = g.tanh(x).unwrap();
        assert_eq!(g.value(t).data(), &[0.0]);
        let neg = g.constant(v(&[-3.0]));
        let r = g.relu(neg).unwrap();
        assert_eq!(g.value(r).data(), &[0.0]);
        let l = g.sum(s).unwrap();
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(v(&[-800.0, 800.0]));
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(s).data(), &[0.0, 1.0]);
    }

    #[test]
    fn binary_ops_reject_mismatched_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(v(&[1.0, 2.0]));
        let b = g.constant(v(&[1.0, 2.0, 3.0]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension { .. })));
        assert!(matches!(g.mul(a, b), Err(Error::Dimension { .. })));
        assert!(matches!(g.add_rowwise(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn max_pool_examples() {
        let mut g = Graph::<f64>::new();
        let h = g.constant(t2(&[&[1.0, -2.0], &[0.0, 5.0]]));
        let p = g.max_pool_time(h).unwrap();
        assert_eq!(g.value(p).data(), &[1.0, 5.0]);
        let single = g.constant(t2(&[&[3.0, 4.0]]));
        let p = g.max_pool_time(single).unwrap();
        assert_eq!(g.value(p).data(), &[3.0, 4.0]);
    }

    #[test]
    fn max_pool_gradient_goes_to_first_argmax() {
        let mut g = Graph::<f64>::new();
        let h = g.variable(t2(&[&[2.0, 1.0], &[2.0, 3.0]]));
        let p = g.max_pool_time(h).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(h).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_nll_examples() {
        let mut g = Graph::<f64>::new();
        let uniform = g.constant(Tensor::zeros(&[43]));
        let l = g.softmax_nll(uniform, 7).unwrap();
        assert!((g.value(l).item().unwrap() - 43f64.ln()).abs() < 1e-12);
        assert!((43f64.ln() - 3.7612).abs() < 1e-4);

        let confident = g.constant(v(&[10.0, -10.0]));
        let l = g.softmax_nll(confident, 0).unwrap();
        // ln(1 + e^-20), evaluated via log1p.
        let oracle = (-20f64).exp().ln_1p();
        let got = g.value(l).item().unwrap();
        assert!((got - oracle).abs() < 1e-20, "{got} vs {oracle}");
        assert!((got - 2.06e-9).abs() < 1e-11);

        assert!(matches!(g.softmax_nll(confident, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn softmax_nll_gradient_is_probs_minus_onehot() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(v(&[0.3, -1.2, 2.0]));
        let l = g.softmax_nll(x, 1).unwrap();
        let grads = g.backward(l).unwrap();
        let sm = g.softmax(x).unwrap();
        let p = g.value(sm).data().to_vec();
        let got = grads.get(x).unwrap().data();
        for i in 0..3 {
            let expect = p[i] - if i == 1 { 1.0 } else { 0.0 };
            assert!((got[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(v(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_graph_gives_zero_gradients() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(v(&[1.0, 2.0]));
        let c = g.constant(v(&[3.0, 4.0]));
        let s = g.sum(c).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.variable(v(&[1.0, 2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn gather_rejects_bad_ids_and_accumulates_repeats() {
        let mut g = Graph::<f64>::new();
        let table = g.variable(Tensor::matrix(4, 2, (0..8).map(f64::from).collect()).unwrap());
        assert!(matches!(g.gather(table, &[4]), Err(Error::Index { .. })));
        assert!(matches!(g.gather(table, &[]), Err(Error::EmptySequence(_))));
        let rows = g.gather(table, &[3, 3]).unwrap();
        assert_eq!(g.value(rows).data(), &[6.0, 7.0, 6.0, 7.0]);
        let s = g.sum(rows).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(table).unwrap().data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn non_finite_values_are_reported() {
        let mut g = Graph::<f64>::new().with_finite_checks(true);
        let x = g.constant(v(&[f64::MAX]));
        assert!(matches!(g.scale(x, 10.0), Err(Error::NonFinite("scale"))));
        let mut g = Graph::<f64>::new().with_finite_checks(false);
        let x = g.constant(v(&[f64::MAX]));
        assert!(g.scale(x, 10.0).is_ok());
    }

    #[test]
    fn conv1d_hand_example() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t2(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let w = g.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let c = g.conv1d(x, w).unwrap();
        assert_eq!(g.value(c).data(), &[5.0, 9.0]);
    }

    #[test]
    fn f32_graphs_work() {
        let mut g = Graph::<f32>::new();
        let x = g.variable(Tensor::vector(vec![1.0f32, 2.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0f32, 4.0]);
    }
}
