use lagrl_autodiff::{mlp_forward, Activation, Graph, MlpNodes, MlpParams, NodeId, Tensor};
use rand::Rng;

use super::normalize::Normalizer;
use crate::algebra::{cholesky_solve, Algebra, Recorder};
use crate::error::{Error, Result};

/// Number of lower-triangular entries of an `n×n` matrix.
pub fn tril_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Row-major position of `L[i][j]`, `j ≤ i`, in the flattened lower triangle.
pub fn tril_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Lagrangian model: `M̂(q) = L(q)L(q)ᵀ` and potential `V̂(q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LnnModel {
    pub l_net: MlpParams,
    pub v_net: MlpParams,
    pub eps: f64,
    pub q_norm: Option<Normalizer>,
    dof: usize,
}

/// Euler-Lagrange quantities of a batch, each a `B×1` column node.
#[derive(Clone, Debug)]
pub struct LnnTerms {
    /// `L[i][j]` for `j ≤ i`.
    pub l: Vec<Vec<NodeId>>,
    /// `w = Lᵀq̇`, so `T̂ = ½‖w‖²`.
    pub w: Vec<NodeId>,
    pub coriolis: Vec<NodeId>,
    pub gravity: Vec<NodeId>,
    pub potential: NodeId,
}

impl LnnModel {
    pub fn new<R: Rng + ?Sized>(dof: usize, hidden: &[usize], eps: f64, rng: &mut R) -> Self {
        let mut lw = hidden.to_vec();
        lw.push(tril_len(dof));
        let mut vw = hidden.to_vec();
        vw.push(1);
        LnnModel {
            l_net: MlpParams::new(dof, &lw, Activation::Softplus, rng),
            v_net: MlpParams::new(dof, &vw, Activation::Softplus, rng),
            eps,
            q_norm: None,
            dof,
        }
    }

    pub fn from_params(l_net: MlpParams, v_net: MlpParams, eps: f64) -> Result<Self> {
        let dof = l_net.input_width();
        if l_net.output_width() != tril_len(dof) || v_net.input_width() != dof || v_net.output_width() != 1 {
            return Err(Error::Config(format!(
                "LNN widths L {}→{}, V {}→{} are inconsistent",
                l_net.input_width(),
                l_net.output_width(),
                v_net.input_width(),
                v_net.output_width()
            )));
        }
        Ok(LnnModel {
            l_net,
            v_net,
            eps,
            q_norm: None,
            dof,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    fn net_input(&self, g: &mut Graph, q: NodeId) -> NodeId {
        match &self.q_norm {
            Some(n) => n.apply(g, q),
            None => q,
        }
    }

    /// Flattened lower triangle, `B×n(n+1)/2`, with positive diagonal.
    fn l_flat(&self, g: &mut Graph, net: &MlpNodes, q: NodeId) -> Result<NodeId> {
        let x = self.net_input(g, q);
        let raw = mlp_forward(g, net, x)?;
        let p = tril_len(self.dof);
        let mut diag = Tensor::zeros(1, p);
        for i in 0..self.dof {
            diag.set(0, tril_index(i, i), 1.0);
        }
        let off = diag.map(|v| 1.0 - v);
        let diag = g.constant(diag);
        let off = g.constant(off);
        let sp = g.softplus(raw);
        let sp = g.add_scalar(sp, self.eps);
        let d = g.mul(sp, diag);
        let o = g.mul(raw, off);
        Ok(g.add(d, o))
    }

    /// `q`, `qd`: `B×n` nodes.
    pub fn terms(&self, g: &mut Graph, nets: &(MlpNodes, MlpNodes), q: NodeId, qd: NodeId) -> Result<LnnTerms> {
        let n = self.dof;
        // Separate seeds keep each tangent sweep confined to its own network.
        let ql = g.scale(q, 1.0);
        let lflat = self.l_flat(g, &nets.0, ql)?;
        let dl = g.input_jacobian_columns(ql, lflat)?;
        let qv = g.scale(q, 1.0);
        let xv = self.net_input(g, qv);
        let potential = mlp_forward(g, &nets.1, xv)?;
        let gravity = g.input_jacobian_columns(qv, potential)?;

        let qdc: Vec<NodeId> = (0..n).map(|i| g.col(qd, i)).collect();
        let l: Vec<Vec<NodeId>> = (0..n)
            .map(|i| (0..=i).map(|j| g.col(lflat, tril_index(i, j))).collect())
            .collect();
        let dlc: Vec<Vec<Vec<NodeId>>> = dl
            .iter()
            .map(|&t| {
                (0..n)
                    .map(|i| (0..=i).map(|j| g.col(t, tril_index(i, j))).collect())
                    .collect()
            })
            .collect();

        let mut alg = Recorder::new(g);
        // (Aᵀ v)_k = Σ_{i≥k} A[i][k] v_i for lower-triangular A
        let lt_mul = |alg: &mut Recorder, a: &[Vec<NodeId>], v: &[NodeId]| -> Vec<NodeId> {
            (0..n)
                .map(|k| {
                    let terms: Vec<NodeId> = (k..n).map(|i| alg.mul(a[i][k], v[i])).collect();
                    alg.sum(&terms)
                })
                .collect()
        };
        let l_mul = |alg: &mut Recorder, a: &[Vec<NodeId>], v: &[NodeId]| -> Vec<NodeId> {
            (0..n)
                .map(|i| {
                    let terms: Vec<NodeId> = (0..=i).map(|j| alg.mul(a[i][j], v[j])).collect();
                    alg.sum(&terms)
                })
                .collect()
        };
        let w = lt_mul(&mut alg, &l, &qdc);
        // ½ ∂(q̇ᵀM̂q̇)/∂q_m = w · (∂L/∂q_m)ᵀq̇
        let half_grad: Vec<NodeId> = dlc
            .iter()
            .map(|dlm| {
                let u = lt_mul(&mut alg, dlm, &qdc);
                let terms: Vec<NodeId> = (0..n).map(|k| alg.mul(w[k], u[k])).collect();
                alg.sum(&terms)
            })
            .collect();
        // L̇ = Σ_m q̇_m ∂L/∂q_m
        let ldot: Vec<Vec<NodeId>> = (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        let terms: Vec<NodeId> = (0..n).map(|m| alg.mul(qdc[m], dlc[m][i][j])).collect();
                        alg.sum(&terms)
                    })
                    .collect()
            })
            .collect();
        // Ṁq̇ = L̇w + L(L̇ᵀq̇)
        let a = l_mul(&mut alg, &ldot, &w);
        let b = lt_mul(&mut alg, &ldot, &qdc);
        let c = l_mul(&mut alg, &l, &b);
        let coriolis: Vec<NodeId> = (0..n)
            .map(|i| {
                let s = alg.add(a[i], c[i]);
                alg.sub(s, half_grad[i])
            })
            .collect();
        Ok(LnnTerms {
            l,
            w,
            coriolis,
            gravity,
            potential,
        })
    }

    /// `q̈ = M̂⁻¹(τ − Ĉq̇ − Ĝ)` as a `B×n` node.
    pub fn accel(&self, g: &mut Graph, nets: &(MlpNodes, MlpNodes), q: NodeId, qd: NodeId, tau: NodeId) -> Result<NodeId> {
        let n = self.dof;
        let t = self.terms(g, nets, q, qd)?;
        let tauc: Vec<NodeId> = (0..n).map(|i| g.col(tau, i)).collect();
        let mut alg = Recorder::new(g);
        let rhs: Vec<NodeId> = (0..n)
            .map(|i| {
                let r = alg.sub(tauc[i], t.coriolis[i]);
                alg.sub(r, t.gravity[i])
            })
            .collect();
        let qdd = cholesky_solve(&mut alg, &t.l, &rhs);
        let out = g.concat_cols(&qdd);
        if !g.value(out).is_finite() {
            return Err(Error::Numeric("LNN acceleration is not finite".into()));
        }
        Ok(out)
    }

    /// Explicit midpoint step of `(q̇, q̈)` with `τ` held constant; angles left unwrapped.
    pub fn predict(&self, g: &mut Graph, nets: &(MlpNodes, MlpNodes), s: NodeId, tau: NodeId, dt: f64) -> Result<NodeId> {
        let n = self.dof;
        let q = g.slice_cols(s, 0, n);
        let qd = g.slice_cols(s, n, n);
        let a1 = self.accel(g, nets, q, qd, tau)?;
        let dq = g.scale(qd, 0.5 * dt);
        let qm = g.add(q, dq);
        let dv = g.scale(a1, 0.5 * dt);
        let qdm = g.add(qd, dv);
        let a2 = self.accel(g, nets, qm, qdm, tau)?;
        let dq = g.scale(qdm, dt);
        let q1 = g.add(q, dq);
        let dv = g.scale(a2, dt);
        let qd1 = g.add(qd, dv);
        Ok(g.concat_cols(&[q1, qd1]))
    }

    /// Learned energy `T̂ + V̂` per batch row.
    pub fn energy(&self, g: &mut Graph, nets: &(MlpNodes, MlpNodes), s: NodeId) -> Result<NodeId> {
        let n = self.dof;
        let q = g.slice_cols(s, 0, n);
        let qd = g.slice_cols(s, n, n);
        let t = self.terms(g, nets, q, qd)?;
        let mut alg = Recorder::new(g);
        let sq: Vec<NodeId> = t.w.iter().map(|&w| alg.mul(w, w)).collect();
        let ke = alg.sum(&sq);
        let ke = alg.scale(ke, 0.5);
        Ok(alg.add(ke, t.potential))
    }

    /// `M̂(q)` at a single configuration.
    pub fn mass_matrix(&self, q: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let nets = (self.l_net.register(&mut g, false), self.v_net.register(&mut g, false));
        let qn = g.constant(Tensor::row(q));
        let lflat = self.l_flat(&mut g, &nets.0, qn)?;
        let v = g.value(lflat).data().to_vec();
        let n = self.dof;
        let l = |i: usize, j: usize| if j <= i { v[tril_index(i, j)] } else { 0.0 };
        Ok((0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| l(i, k) * l(j, k)).sum()).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_widths_follow_triangle_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (n, p) in [(1, 1), (2, 3), (3, 6), (4, 10)] {
            let m = LnnModel::new(n, &[64, 64], 1e-4, &mut rng);
            assert_eq!(m.l_net.output_width(), p);
            // dim(s)(dim(s)+2)/8 with dim(s) = 2n
            assert_eq!(p, 2 * n * (2 * n + 2) / 8);
        }
    }

    #[test]
    fn mass_matrix_is_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = LnnModel::new(3, &[16, 16], 1e-4, &mut rng);
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mm = m.mass_matrix(&q).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((mm[i][j] - mm[j][i]).abs() < 1e-12);
                }
            }
            assert!(crate::algebra::Reals.spd_solve(&mm, &[1.0, 1.0, 1.0]).is_some());
        }
    }
}
