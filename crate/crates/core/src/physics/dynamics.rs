//! Closed-form Lagrangian terms of a planar point-mass chain.
//!
//! Absolute link angle `φ_i = Σ_{k≤i} q_k`; mass `j` sits at
//! `(x + Σ_{i≤j} l_i sin φ_i, −Σ_{i≤j} l_i cos φ_i)`. With `J_j` the Jacobian of
//! that position, `M = Σ_j m_j J_jᵀ J_j` (plus the cart mass) and
//! `C(q,q̇)q̇ = Σ_j m_j J_jᵀ J̇_j q̇`.

use super::spec::EnvSpec;
use crate::algebra::Algebra;

struct Kinematics<V> {
    /// `cx[k][j] = Σ_{i=k..j} l_i cos φ_i` for `k ≤ j` (x-component of Jacobian column `k`).
    cx: Vec<Vec<V>>,
    /// Same with `sin φ_i` (y-component).
    sy: Vec<Vec<V>>,
    sin: Vec<V>,
    cos: Vec<V>,
}

fn kinematics<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V]) -> Kinematics<A::V> {
    let off = spec.link_offset();
    let k = spec.num_links();
    let mut phi = q[off];
    let mut sin = Vec::with_capacity(k);
    let mut cos = Vec::with_capacity(k);
    for i in 0..k {
        if i > 0 {
            phi = alg.add(phi, q[off + i]);
        }
        sin.push(alg.sin(phi));
        cos.push(alg.cos(phi));
    }
    let lc: Vec<A::V> = (0..k).map(|i| alg.scale(cos[i], spec.link_lengths[i])).collect();
    let ls: Vec<A::V> = (0..k).map(|i| alg.scale(sin[i], spec.link_lengths[i])).collect();
    let mut cx = vec![Vec::new(); k];
    let mut sy = vec![Vec::new(); k];
    for a in 0..k {
        // entries for j < a are unused; fill with the first term to keep indexing direct
        let mut accx = lc[a];
        let mut accy = ls[a];
        cx[a] = vec![accx; k];
        sy[a] = vec![accy; k];
        for j in a + 1..k {
            accx = alg.add(accx, lc[j]);
            accy = alg.add(accy, ls[j]);
            cx[a][j] = accx;
            sy[a][j] = accy;
        }
    }
    Kinematics { cx, sy, sin, cos }
}

fn absolute_rates<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, qd: &[A::V]) -> Vec<A::V> {
    let off = spec.link_offset();
    let mut w = Vec::with_capacity(spec.num_links());
    let mut acc = qd[off];
    for i in 0..spec.num_links() {
        if i > 0 {
            acc = alg.add(acc, qd[off + i]);
        }
        w.push(acc);
    }
    w
}

pub fn mass_matrix<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V]) -> Vec<Vec<A::V>> {
    let off = spec.link_offset();
    let k = spec.num_links();
    let n = spec.dof();
    let kin = kinematics(alg, spec, q);
    let zero = alg.constant(0.0);
    let mut m = vec![vec![zero; n]; n];
    for a in 0..k {
        for b in a..k {
            let mut acc: Option<A::V> = None;
            for j in b..k {
                let xx = alg.mul(kin.cx[a][j], kin.cx[b][j]);
                let yy = alg.mul(kin.sy[a][j], kin.sy[b][j]);
                let t = alg.add(xx, yy);
                let t = alg.scale(t, spec.link_masses[j]);
                acc = Some(match acc {
                    None => t,
                    Some(s) => alg.add(s, t),
                });
            }
            let v = acc.expect("b < k");
            m[off + a][off + b] = v;
            m[off + b][off + a] = v;
        }
    }
    if let Some(mc) = spec.cart_mass {
        let total = mc + spec.link_masses.iter().sum::<f64>();
        m[0][0] = alg.constant(total);
        for a in 0..k {
            let terms: Vec<A::V> = (a..k).map(|j| alg.scale(kin.cx[a][j], spec.link_masses[j])).collect();
            let v = alg.sum(&terms);
            m[0][off + a] = v;
            m[off + a][0] = v;
        }
    }
    m
}

pub fn coriolis<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V], qd: &[A::V]) -> Vec<A::V> {
    let off = spec.link_offset();
    let k = spec.num_links();
    let kin = kinematics(alg, spec, q);
    let w = absolute_rates(alg, spec, qd);
    // centripetal acceleration of each mass: Σ_{i≤j} l_i ω_i² (−sin φ_i, cos φ_i)
    let mut ax = Vec::with_capacity(k);
    let mut ay = Vec::with_capacity(k);
    let mut sx: Option<A::V> = None;
    let mut sy: Option<A::V> = None;
    for i in 0..k {
        let w2 = alg.mul(w[i], w[i]);
        let w2 = alg.scale(w2, spec.link_lengths[i]);
        let tx = alg.mul(w2, kin.sin[i]);
        let tx = alg.neg(tx);
        let ty = alg.mul(w2, kin.cos[i]);
        let nx = match sx {
            None => tx,
            Some(s) => alg.add(s, tx),
        };
        let ny = match sy {
            None => ty,
            Some(s) => alg.add(s, ty),
        };
        sx = Some(nx);
        sy = Some(ny);
        ax.push(nx);
        ay.push(ny);
    }
    let mut out = Vec::with_capacity(spec.dof());
    if spec.has_cart() {
        let terms: Vec<A::V> = (0..k).map(|j| alg.scale(ax[j], spec.link_masses[j])).collect();
        out.push(alg.sum(&terms));
    }
    for a in 0..k {
        let mut terms = Vec::with_capacity(k - a);
        for j in a..k {
            let t = alg.mul(kin.cx[a][j], ax[j]);
            let t = alg.mul_add(t, kin.sy[a][j], ay[j]);
            terms.push(alg.scale(t, spec.link_masses[j]));
        }
        out.push(alg.sum(&terms));
    }
    debug_assert_eq!(out.len(), off + k);
    out
}

pub fn gravity<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V]) -> Vec<A::V> {
    let k = spec.num_links();
    if spec.horizontal || spec.gravity == 0.0 {
        let z = alg.constant(0.0);
        return vec![z; spec.dof()];
    }
    let kin = kinematics(alg, spec, q);
    let mut out = Vec::with_capacity(spec.dof());
    if spec.has_cart() {
        out.push(alg.constant(0.0));
    }
    for a in 0..k {
        let terms: Vec<A::V> = (a..k)
            .map(|j| alg.scale(kin.sy[a][j], spec.gravity * spec.link_masses[j]))
            .collect();
        out.push(alg.sum(&terms));
    }
    out
}

pub fn potential<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V]) -> A::V {
    if spec.horizontal || spec.gravity == 0.0 {
        return alg.constant(0.0);
    }
    let kin = kinematics(alg, spec, q);
    let terms: Vec<A::V> = (0..spec.num_links())
        .map(|j| alg.scale(kin.cx[0][j], -spec.gravity * spec.link_masses[j]))
        .collect();
    alg.sum(&terms)
}

pub fn kinetic<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V], qd: &[A::V]) -> A::V {
    let m = mass_matrix(alg, spec, q);
    let n = spec.dof();
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<A::V> = (0..n).map(|j| alg.mul(m[i][j], qd[j])).collect();
        let mv = alg.sum(&row);
        terms.push(alg.mul(qd[i], mv));
    }
    let s = alg.sum(&terms);
    alg.scale(s, 0.5)
}

/// `q̈ = M⁻¹(τ − Cq̇ − G)`; `None` when the Cholesky factorisation fails.
pub fn accel<A: Algebra + ?Sized>(
    alg: &mut A,
    spec: &EnvSpec,
    q: &[A::V],
    qd: &[A::V],
    tau: &[A::V],
) -> Option<Vec<A::V>> {
    let m = mass_matrix(alg, spec, q);
    let c = coriolis(alg, spec, q, qd);
    let g = gravity(alg, spec, q);
    let rhs: Vec<A::V> = (0..spec.dof())
        .map(|i| {
            let t = alg.sub(tau[i], c[i]);
            alg.sub(t, g[i])
        })
        .collect();
    alg.spd_solve(&m, &rhs)
}

/// Tip position of the last mass.
pub fn tip<A: Algebra + ?Sized>(alg: &mut A, spec: &EnvSpec, q: &[A::V]) -> (A::V, A::V) {
    let kin = kinematics(alg, spec, q);
    let k = spec.num_links();
    let x = kin.sy[0][k - 1];
    let x = if spec.has_cart() { alg.add(x, q[0]) } else { x };
    let y = alg.neg(kin.cx[0][k - 1]);
    (x, y)
}
