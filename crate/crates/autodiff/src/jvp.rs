//! Forward-mode tangent propagation recorded as ordinary graph nodes.
//!
//! `Graph::jvp` walks the nodes between the seeds and the output and emits,
//! for each one, the nodes computing its tangent. Because the tangents are
//! themselves recorded, a later `backward` differentiates through them
//! (forward-over-reverse). Every op used by the tangent rules has a reverse
//! rule, which closes the op set under one level of nesting.

use crate::error::{AdError, Result};
use crate::graph::{Graph, NodeId, Op, UnaryFn};
use crate::tensor::Tensor;

impl Graph {
    /// Tangent of `output` given tangents for the `seeds`, `(node, tangent)`.
    ///
    /// Returns a node shaped like `output`; independent outputs get zeros.
    pub fn jvp(&mut self, output: NodeId, seeds: &[(NodeId, NodeId)]) -> Result<NodeId> {
        let Some(start) = seeds.iter().map(|s| s.0.index()).min() else {
            return Err(AdError::Contract("jvp needs at least one seed".into()));
        };
        for &(x, t) in seeds {
            if self.shape(t)[1] != self.shape(x)[1]
                || (self.shape(t)[0] != self.shape(x)[0] && self.shape(t)[0] != 1)
            {
                return Err(AdError::Shape {
                    op: "jvp seed",
                    lhs: self.shape(x),
                    rhs: self.shape(t),
                });
            }
        }
        let end = output.index();
        if end < start {
            return Ok(self.zeros_like(output));
        }
        let mut tan: Vec<Option<NodeId>> = vec![None; end + 1 - start];
        for &(x, t) in seeds {
            let t = self.broadcast_to(t, self.shape(x));
            tan[x.index() - start] = Some(t);
        }
        let seeded: Vec<usize> = seeds.iter().map(|s| s.0.index()).collect();
        for i in start..=end {
            if seeded.contains(&i) {
                continue;
            }
            let get = |id: NodeId| {
                if id.index() >= start {
                    tan[id.index() - start]
                } else {
                    None
                }
            };
            let op = self.nodes[i].op.clone();
            let this = NodeId(i);
            let t = match op {
                Op::Leaf | Op::Const | Op::StopGradient => None,
                Op::Add(a, b) => match (get(a), get(b)) {
                    (Some(ta), Some(tb)) => Some(self.add(ta, tb)),
                    (Some(t), None) | (None, Some(t)) => Some(t),
                    (None, None) => None,
                },
                Op::Sub(a, b) => match (get(a), get(b)) {
                    (Some(ta), Some(tb)) => Some(self.sub(ta, tb)),
                    (Some(ta), None) => Some(ta),
                    (None, Some(tb)) => Some(self.neg(tb)),
                    (None, None) => None,
                },
                Op::Mul(a, b) => {
                    let l = get(a).map(|ta| self.mul(ta, b));
                    let r = get(b).map(|tb| self.mul(a, tb));
                    self.sum_opt(l, r)
                }
                Op::Div(a, b) => {
                    // (ta - out*tb) / b
                    let num = match (get(a), get(b)) {
                        (ta, Some(tb)) => {
                            let ot = self.mul(this, tb);
                            Some(match ta {
                                Some(ta) => self.sub(ta, ot),
                                None => self.neg(ot),
                            })
                        }
                        (Some(ta), None) => Some(ta),
                        (None, None) => None,
                    };
                    num.map(|n| self.div(n, b))
                }
                Op::MatMul(a, b) => {
                    let l = get(a).map(|ta| self.matmul(ta, b));
                    let r = get(b).map(|tb| self.matmul(a, tb));
                    self.sum_opt(l, r)
                }
                Op::Neg(a) => get(a).map(|t| self.neg(t)),
                Op::Scale(a, s) => get(a).map(|t| self.scale(t, s)),
                Op::AddScalar(a) | Op::WrapAngles(a) => get(a),
                Op::Unary(a, f) => match get(a) {
                    None => None,
                    Some(ta) => Some(self.unary_tangent(f, a, this, ta)?),
                },
                Op::Clamp(a, ..) => match get(a) {
                    None => None,
                    Some(_) => return Err(AdError::UnsupportedOp("clamp")),
                },
                Op::Sum(a) => get(a).map(|t| self.sum(t)),
                Op::SumRows(a) => get(a).map(|t| self.sum_rows(t)),
                Op::SumCols(a) => get(a).map(|t| self.sum_cols(t)),
                Op::SliceCols(a, s, l) => get(a).map(|t| self.slice_cols(t, s, l)),
                Op::SliceRows(a, s, l) => get(a).map(|t| self.slice_rows(t, s, l)),
                Op::BroadcastTo(a) => {
                    let shape = self.shape(this);
                    get(a).map(|t| self.broadcast_to(t, shape))
                }
                Op::ConcatCols(parts) | Op::ConcatRows(parts) => {
                    let ts: Vec<Option<NodeId>> = parts.iter().map(|&p| get(p)).collect();
                    if ts.iter().all(Option::is_none) {
                        None
                    } else {
                        let filled: Vec<NodeId> = parts
                            .iter()
                            .zip(ts)
                            .map(|(&p, t)| t.unwrap_or_else(|| self.zeros_like(p)))
                            .collect();
                        Some(if matches!(self.nodes[i].op, Op::ConcatCols(_)) {
                            self.concat_cols(&filled)
                        } else {
                            self.concat_rows(&filled)
                        })
                    }
                }
            };
            tan[i - start] = t.map(|t| {
                let shape = self.shape(this);
                self.broadcast_to(t, shape)
            });
        }
        Ok(match tan[end - start] {
            Some(t) => t,
            None => self.zeros_like(output),
        })
    }

    fn sum_opt(&mut self, l: Option<NodeId>, r: Option<NodeId>) -> Option<NodeId> {
        match (l, r) {
            (Some(l), Some(r)) => Some(self.add(l, r)),
            (Some(t), None) | (None, Some(t)) => Some(t),
            (None, None) => None,
        }
    }

    fn unary_tangent(&mut self, f: UnaryFn, x: NodeId, y: NodeId, tx: NodeId) -> Result<NodeId> {
        Ok(match f {
            UnaryFn::Tanh => {
                let y2 = self.square(y);
                let d = self.neg(y2);
                let d = self.add_scalar(d, 1.0);
                self.mul(d, tx)
            }
            UnaryFn::Sigmoid => {
                let om = self.neg(y);
                let om = self.add_scalar(om, 1.0);
                let d = self.mul(y, om);
                self.mul(d, tx)
            }
            UnaryFn::Softplus => {
                let d = self.sigmoid(x);
                self.mul(d, tx)
            }
            UnaryFn::Exp => self.mul(y, tx),
            UnaryFn::Log => self.div(tx, x),
            UnaryFn::Sin => {
                let d = self.cos(x);
                self.mul(d, tx)
            }
            UnaryFn::Cos => {
                let d = self.sin(x);
                let p = self.mul(d, tx);
                self.neg(p)
            }
            UnaryFn::Square => {
                let p = self.mul(x, tx);
                self.scale(p, 2.0)
            }
            UnaryFn::Sqrt => {
                let d = self.scale(y, 2.0);
                self.div(tx, d)
            }
            UnaryFn::Abs => return Err(AdError::UnsupportedOp("abs")),
        })
    }

    pub fn zeros_like(&mut self, id: NodeId) -> NodeId {
        let [r, c] = self.shape(id);
        self.constant(Tensor::zeros(r, c))
    }

    /// Columns of d output / d x as graph nodes, one per input coordinate.
    ///
    /// `x` is `rows×n`; entry `i` of the result is `rows×m` and holds the
    /// derivative of every output row along coordinate `i` of its own input
    /// row. The nodes are recorded, so they can be differentiated again.
    pub fn input_jacobian_columns(&mut self, x: NodeId, output: NodeId) -> Result<Vec<NodeId>> {
        let n = self.shape(x)[1];
        let mut cols = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = Tensor::zeros(1, n);
            e.set(0, i, 1.0);
            let seed = self.constant(e);
            cols.push(self.jvp(output, &[(x, seed)])?);
        }
        Ok(cols)
    }
}

/// Full Jacobian `m×n` of a map evaluated at a single point `x` (`1×n`).
///
/// The map is recorded on a fresh graph and differentiated with one tangent
/// pass per input coordinate.
pub fn input_jacobian<F>(x: &Tensor, f: F) -> Result<Tensor>
where
    F: FnOnce(&mut Graph, NodeId) -> Result<NodeId>,
{
    if x.rows() != 1 {
        return Err(AdError::Contract(format!(
            "input_jacobian expects a single point, got shape {:?}",
            x.shape()
        )));
    }
    let mut g = Graph::new();
    let xn = g.leaf(x.clone());
    let out = f(&mut g, xn)?;
    if g.shape(out)[0] != 1 {
        return Err(AdError::Contract("input_jacobian output must be a row".into()));
    }
    let m = g.shape(out)[1];
    let n = x.cols();
    let cols = g.input_jacobian_columns(xn, out)?;
    let mut jac = Tensor::zeros(m, n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..m {
            jac.set(i, j, g.value(*c).get(0, i));
        }
    }
    Ok(jac)
}
