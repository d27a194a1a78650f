//! Tape of recorded operations with reverse-mode accumulation.
//!
//! Nodes are appended in evaluation order, so the arena order is already a
//! topological order. Binary elementwise ops broadcast any operand whose row
//! or column count is 1. Shape errors inside the op builders are programming
//! errors and panic; public entry points that take user data validate first.

use crate::error::{AdError, Result};
use crate::tensor::{gemm_into, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Sin,
    Cos,
    Square,
    Sqrt,
    Abs,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Tanh => "tanh",
            UnaryFn::Sigmoid => "sigmoid",
            UnaryFn::Softplus => "softplus",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Square => "square",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Abs => "abs",
        }
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Sigmoid => sigmoid(x),
            UnaryFn::Softplus => softplus(x),
            UnaryFn::Exp => x.exp(),
            UnaryFn::Log => x.ln(),
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::Square => x * x,
            UnaryFn::Sqrt => x.sqrt(),
            UnaryFn::Abs => x.abs(),
        }
    }

    /// d out / d x given input `x` and output `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryFn::Tanh => 1.0 - y * y,
            UnaryFn::Sigmoid => y * (1.0 - y),
            UnaryFn::Softplus => sigmoid(x),
            UnaryFn::Exp => y,
            UnaryFn::Log => 1.0 / x,
            UnaryFn::Sin => x.cos(),
            UnaryFn::Cos => -x.sin(),
            UnaryFn::Square => 2.0 * x,
            UnaryFn::Sqrt => 0.5 / y,
            // subgradient 0 at the kink
            UnaryFn::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// Wraps an angle into (−π, π].
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut y = x - two_pi * ((x + std::f64::consts::PI) / two_pi).floor();
    // floor maps +π to −π; keep the half-open interval (−π, π]
    if y <= -std::f64::consts::PI {
        y += two_pi;
    }
    y
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Unary(NodeId, UnaryFn),
    Clamp(NodeId, f64, f64),
    WrapAngles(NodeId),
    Sum(NodeId),
    SumRows(NodeId),
    SumCols(NodeId),
    SliceCols(NodeId, usize, usize),
    SliceRows(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    BroadcastTo(NodeId),
    StopGradient,
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul(..) => "matmul",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Unary(_, f) => f.name(),
            Op::Clamp(..) => "clamp",
            Op::WrapAngles(..) => "wrap_angles",
            Op::Sum(..) => "sum",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::BroadcastTo(..) => "broadcast_to",
            Op::StopGradient => "stop_gradient",
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

/// Arena of recorded nodes.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2], op: &'static str) -> [usize; 2] {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("{}", AdError::Shape { op, lhs: a, rhs: b })
        }
    };
    [dim(a[0], b[0]), dim(a[1], b[1])]
}

fn broadcast_zip(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let [r, c] = broadcast_shape(a.shape(), b.shape(), op);
    let mut out = Vec::with_capacity(r * c);
    let (ar, ac) = (a.rows() > 1, a.cols() > 1);
    let (br, bc) = (b.rows() > 1, b.cols() > 1);
    let (ad, bd) = (a.data(), b.data());
    for i in 0..r {
        for j in 0..c {
            let av = ad[if ar { i } else { 0 } * a.cols() + if ac { j } else { 0 }];
            let bv = bd[if br { i } else { 0 } * b.cols() + if bc { j } else { 0 }];
            out.push(f(av, bv));
        }
    }
    Tensor::new(r, c, out).expect("broadcast shape")
}

/// Sums `g` down to `shape` over broadcast dimensions.
fn reduce_to(g: Tensor, shape: [usize; 2]) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let mut out = Tensor::zeros(shape[0], shape[1]);
    let (rr, rc) = (shape[0] > 1, shape[1] > 1);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let idx = if rr { i } else { 0 } * shape[1] + if rc { j } else { 0 };
            out.data_mut()[idx] += g.get(i, j);
        }
    }
    out
}

fn broadcast_to(t: &Tensor, shape: [usize; 2]) -> Tensor {
    let zero = Tensor::zeros(shape[0], shape[1]);
    broadcast_zip(t, &zero, "broadcast_to", |a, _| a)
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    #[inline]
    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Name of the operation that produced `id`.
    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    /// Differentiable input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value, false)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let v = broadcast_zip(self.value(a), self.value(b), name, f);
        let rg = self.rg(&[a, b]);
        self.push(op, v, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Div(a, b), "div", |x, y| x / y)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self
            .value(a)
            .matmul(self.value(b))
            .unwrap_or_else(|e| panic!("{e}"));
        let rg = self.rg(&[a, b]);
        self.push(Op::MatMul(a, b), v, rg)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        let rg = self.rg(&[a]);
        self.push(Op::Neg(a), v, rg)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(Op::Scale(a, s), v, rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.push(Op::AddScalar(a), v, rg)
    }

    pub fn unary(&mut self, a: NodeId, f: UnaryFn) -> NodeId {
        let v = self.value(a).map(|x| f.eval(x));
        let rg = self.rg(&[a]);
        self.push(Op::Unary(a, f), v, rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Sigmoid)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Softplus)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Exp)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Log)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Sin)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Cos)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Square)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Sqrt)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, UnaryFn::Abs)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(&[a]);
        self.push(Op::Clamp(a, lo, hi), v, rg)
    }

    /// Wraps the columns flagged in `mask` into (−π, π]; gradient is the identity.
    pub fn wrap_angles(&mut self, a: NodeId, mask: &[bool]) -> NodeId {
        assert_eq!(mask.len(), self.shape(a)[1], "wrap mask width");
        if !mask.iter().any(|&m| m) {
            return a;
        }
        let mut v = self.value(a).clone();
        let cols = v.cols();
        for (k, x) in v.data_mut().iter_mut().enumerate() {
            if mask[k % cols] {
                *x = wrap_angle(*x);
            }
        }
        let rg = self.rg(&[a]);
        self.push(Op::WrapAngles(a), v, rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(Op::Sum(a), v, rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums: `r×c → 1×c`.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols());
        for r in 0..t.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        let rg = self.rg(&[a]);
        self.push(Op::SumRows(a), out, rg)
    }

    /// Row sums: `r×c → r×1`.
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let out = Tensor::new(t.rows(), 1, data).expect("shape");
        let rg = self.rg(&[a]);
        self.push(Op::SumCols(a), out, rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let t = self.value(a);
        assert!(start + len <= t.cols(), "slice_cols out of range");
        if start == 0 && len == t.cols() {
            return a;
        }
        let v = t.slice_cols(start, len);
        let rg = self.rg(&[a]);
        self.push(Op::SliceCols(a, start, len), v, rg)
    }

    pub fn col(&mut self, a: NodeId, c: usize) -> NodeId {
        self.slice_cols(a, c, 1)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let t = self.value(a);
        assert!(start + len <= t.rows(), "slice_rows out of range");
        if start == 0 && len == t.rows() {
            return a;
        }
        let v = t.slice_rows(start, len);
        let rg = self.rg(&[a]);
        self.push(Op::SliceRows(a, start, len), v, rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let rows = self.shape(parts[0])[0];
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(t.row_slice(r));
            }
        }
        let v = Tensor::new(rows, cols, data).expect("shape");
        let rg = self.rg(parts);
        self.push(Op::ConcatCols(parts.to_vec()), v, rg)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        let v = Tensor::new(rows, cols, data).expect("shape");
        let rg = self.rg(parts);
        self.push(Op::ConcatRows(parts.to_vec()), v, rg)
    }

    pub fn broadcast_to(&mut self, a: NodeId, shape: [usize; 2]) -> NodeId {
        if self.shape(a) == shape {
            return a;
        }
        let v = broadcast_to(self.value(a), shape);
        let rg = self.rg(&[a]);
        self.push(Op::BroadcastTo(a), v, rg)
    }

    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        if !self.requires_grad(a) {
            return a;
        }
        let v = self.value(a).clone();
        self.push(Op::StopGradient, v, false)
    }

    /// Reverse accumulation from a `1×1` root over the recorded order.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if self.shape(root) != [1, 1] {
            return Err(AdError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        if !self.nodes[root.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut acc = |id: NodeId, t: Tensor| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf | Op::Const | Op::StopGradient => {}
            Op::Add(a, b) => {
                if self.nodes[b.0].requires_grad {
                    acc(*b, reduce_to(g.clone(), val(*b).shape()));
                }
                acc(*a, reduce_to(g, val(*a).shape()));
            }
            Op::Sub(a, b) => {
                if self.nodes[b.0].requires_grad {
                    acc(*b, reduce_to(g.map(|x| -x), val(*b).shape()));
                }
                acc(*a, reduce_to(g, val(*a).shape()));
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let ga = broadcast_zip(&g, val(*b), "mul", |x, y| x * y);
                    acc(*a, reduce_to(ga, val(*a).shape()));
                }
                if self.nodes[b.0].requires_grad {
                    let gb = broadcast_zip(&g, val(*a), "mul", |x, y| x * y);
                    acc(*b, reduce_to(gb, val(*b).shape()));
                }
            }
            Op::Div(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let ga = broadcast_zip(&g, val(*b), "div", |x, y| x / y);
                    acc(*a, reduce_to(ga, val(*a).shape()));
                }
                if self.nodes[b.0].requires_grad {
                    // d(a/b)/db = -out/b
                    let t = broadcast_zip(&node.value, val(*b), "div", |o, y| -o / y);
                    let gb = g.zip_map(&t, |x, y| x * y);
                    acc(*b, reduce_to(gb, val(*b).shape()));
                }
            }
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let mut ga = Tensor::zeros(val(*a).rows(), val(*a).cols());
                    gemm_into(&g, val(*b), false, true, 0.0, &mut ga);
                    acc(*a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = Tensor::zeros(val(*b).rows(), val(*b).cols());
                    gemm_into(val(*a), &g, true, false, 0.0, &mut gb);
                    acc(*b, gb);
                }
            }
            Op::Neg(a) => acc(*a, g.map(|x| -x)),
            Op::Scale(a, s) => {
                let s = *s;
                acc(*a, g.map(|x| x * s))
            }
            Op::AddScalar(a) | Op::WrapAngles(a) => acc(*a, g),
            Op::Unary(a, f) => {
                let x = val(*a).data();
                let y = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(gi, (&xi, &yi))| gi * f.deriv(xi, yi))
                    .collect();
                acc(*a, Tensor::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let x = val(*a);
                acc(*a, g.zip_map(x, |gi, xi| if xi >= lo && xi <= hi { gi } else { 0.0 }));
            }
            Op::Sum(a) => {
                let s = g.item();
                let [r, c] = val(*a).shape();
                acc(*a, Tensor::filled(r, c, s));
            }
            Op::SumRows(a) | Op::BroadcastTo(a) => {
                let shape = val(*a).shape();
                if matches!(node.op, Op::SumRows(_)) {
                    acc(*a, broadcast_to(&g, shape));
                } else {
                    acc(*a, reduce_to(g, shape));
                }
            }
            Op::SumCols(a) => {
                let shape = val(*a).shape();
                acc(*a, broadcast_to(&g, shape));
            }
            Op::SliceCols(a, start, len) => {
                let src = val(*a);
                let mut out = Tensor::zeros(src.rows(), src.cols());
                let cols = src.cols();
                for r in 0..src.rows() {
                    out.data_mut()[r * cols + start..r * cols + start + len]
                        .copy_from_slice(g.row_slice(r));
                }
                acc(*a, out);
            }
            Op::SliceRows(a, start, len) => {
                let src = val(*a);
                let mut out = Tensor::zeros(src.rows(), src.cols());
                let cols = src.cols();
                out.data_mut()[start * cols..(start + len) * cols].copy_from_slice(g.data());
                acc(*a, out);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.nodes[p.0].requires_grad {
                        acc(p, g.slice_cols(offset, w));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = val(p).rows();
                    if self.nodes[p.0].requires_grad {
                        acc(p, g.slice_rows(offset, h));
                    }
                    offset += h;
                }
            }
        }
    }
}

/// Gradients of a scalar root with respect to every leaf that reaches it.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, or zeros shaped like it when it does not reach the root.
    pub fn get_or_zeros(&self, g: &Graph, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(t) => t.clone(),
            None => {
                let [r, c] = g.shape(id);
                Tensor::zeros(r, c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn l1_subgradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(&[0.0, 2.0, -1.0]));
        let a = g.abs(x);
        let l = g.sum(a);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, -1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::row(&[1.0, 2.0]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(AdError::Contract(_))));
    }

    #[test]
    fn broadcasting_reduces_gradients() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = g.leaf(Tensor::row(&[1.0, 1.0, 1.0]));
        let c = g.leaf(Tensor::column(&[2.0, 3.0]));
        let y = g.add(x, b);
        let z = g.mul(y, c);
        let s = g.sum(z);
        assert_eq!(g.value(s).item(), 2.0 * 9.0 + 3.0 * 18.0);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[5.0, 5.0, 5.0]);
        assert_eq!(grads.get(c).unwrap().data(), &[9.0, 18.0]);
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn stop_gradient_blocks() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let s = g.stop_gradient(x);
        let y = g.mul(x, s);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn wrap_angle_half_open() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
    }
}
