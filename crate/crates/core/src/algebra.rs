//! Scalar arithmetic over either plain `f64` or recorded graph columns.
//!
//! The rigid-body formulas are written once against [`Algebra`]. With
//! [`Reals`] they run as ordinary floating point code; with [`Recorder`] each
//! value is a `rows×1` graph node, so the same formulas can be batched and
//! differentiated.

use lagrl_autodiff::{Graph, NodeId, Tensor};

pub trait Algebra {
    type V: Copy;

    fn constant(&mut self, c: f64) -> Self::V;
    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&mut self, a: Self::V) -> Self::V;
    fn scale(&mut self, a: Self::V, s: f64) -> Self::V;
    fn sin(&mut self, a: Self::V) -> Self::V;
    fn cos(&mut self, a: Self::V) -> Self::V;
    fn sqrt(&mut self, a: Self::V) -> Self::V;
    /// True when every entry is strictly positive and finite.
    fn all_positive(&self, a: Self::V) -> bool;

    fn mul_add(&mut self, acc: Self::V, a: Self::V, b: Self::V) -> Self::V {
        let p = self.mul(a, b);
        self.add(acc, p)
    }

    fn sum(&mut self, xs: &[Self::V]) -> Self::V {
        match xs.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.add(acc, x)),
        }
    }

    /// Solves `M x = b` for symmetric positive-definite `M` by Cholesky
    /// factorisation. Returns `None` when a pivot is not positive.
    fn spd_solve(&mut self, m: &[Vec<Self::V>], b: &[Self::V]) -> Option<Vec<Self::V>> {
        let n = b.len();
        let mut l: Vec<Vec<Self::V>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(i + 1);
            for j in 0..=i {
                let mut s = m[i][j];
                for k in 0..j {
                    let ljk = if j == i { row[k] } else { l[j][k] };
                    let p = self.mul(row[k], ljk);
                    s = self.sub(s, p);
                }
                if i == j {
                    if !self.all_positive(s) {
                        return None;
                    }
                    row.push(self.sqrt(s));
                } else {
                    row.push(self.div(s, l[j][j]));
                }
            }
            l.push(row);
        }
        Some(cholesky_solve(self, &l, b))
    }
}

/// Solves `L Lᵀ x = b` given the lower-triangular factor `L` (row `i` holds
/// entries `0..=i`).
pub fn cholesky_solve<A: Algebra + ?Sized>(alg: &mut A, l: &[Vec<A::V>], b: &[A::V]) -> Vec<A::V> {
    let n = b.len();
    let mut y: Vec<A::V> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            let p = alg.mul(l[i][k], y[k]);
            s = alg.sub(s, p);
        }
        y.push(alg.div(s, l[i][i]));
    }
    let mut x: Vec<A::V> = y.clone();
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            let p = alg.mul(l[k][i], x[k]);
            s = alg.sub(s, p);
        }
        x[i] = alg.div(s, l[i][i]);
    }
    x
}

/// Plain floating point.
#[derive(Clone, Copy, Debug, Default)]
pub struct Reals;

impl Algebra for Reals {
    type V = f64;

    #[inline]
    fn constant(&mut self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    #[inline]
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    #[inline]
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    #[inline]
    fn scale(&mut self, a: f64, s: f64) -> f64 {
        a * s
    }
    #[inline]
    fn sin(&mut self, a: f64) -> f64 {
        a.sin()
    }
    #[inline]
    fn cos(&mut self, a: f64) -> f64 {
        a.cos()
    }
    #[inline]
    fn sqrt(&mut self, a: f64) -> f64 {
        a.sqrt()
    }
    #[inline]
    fn all_positive(&self, a: f64) -> bool {
        a > 0.0 && a.is_finite()
    }
}

/// Batched columns recorded on a graph.
pub struct Recorder<'g> {
    pub g: &'g mut Graph,
}

impl<'g> Recorder<'g> {
    pub fn new(g: &'g mut Graph) -> Self {
        Recorder { g }
    }
}

impl Algebra for Recorder<'_> {
    type V = NodeId;

    fn constant(&mut self, c: f64) -> NodeId {
        self.g.constant(Tensor::scalar(c))
    }
    fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.g.add(a, b)
    }
    fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.g.sub(a, b)
    }
    fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.g.mul(a, b)
    }
    fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.g.div(a, b)
    }
    fn neg(&mut self, a: NodeId) -> NodeId {
        self.g.neg(a)
    }
    fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        self.g.scale(a, s)
    }
    fn sin(&mut self, a: NodeId) -> NodeId {
        self.g.sin(a)
    }
    fn cos(&mut self, a: NodeId) -> NodeId {
        self.g.cos(a)
    }
    fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.g.sqrt(a)
    }
    fn all_positive(&self, a: NodeId) -> bool {
        self.g.value(a).data().iter().all(|&v| v > 0.0 && v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_matches_known_system() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let x = Reals.spd_solve(&m, &[2.0, 1.0]).unwrap();
        // [4 2; 2 3] x = [2; 1]  =>  x = [0.5, 0]
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(Reals.spd_solve(&[vec![-1.0]], &[1.0]).is_none());
    }

    #[test]
    fn recorder_agrees_with_reals() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::column(&[0.3, 1.2]));
        let mut rec = Recorder::new(&mut g);
        let s = rec.sin(a);
        let c = rec.cos(a);
        let p = rec.mul(s, c);
        let v = rec.g.value(p).clone();
        assert!((v.get(0, 0) - 0.3f64.sin() * 0.3f64.cos()).abs() < 1e-15);
        assert!((v.get(1, 0) - 1.2f64.sin() * 1.2f64.cos()).abs() < 1e-15);
    }
}
