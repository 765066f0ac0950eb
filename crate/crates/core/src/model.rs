//! Bingham energy with Huber regularization, its derivative and the
//! generalized second-order operators.
//!
//! The energy is `J(u) = c ∫ T:T + ∫ Ψ(T) - <f, u>` where `T` is the symmetric
//! gradient with `c = mu` ([`Form::Sym`]) or the full gradient with
//! `c = mu / 2` ([`Form::Grad`]). The divergence penalty uses the scalar
//! Huber function [`huber_abs`].
//!
//! Branches are decided per quadrature point. A value exactly at a
//! threshold is treated as active (quadratic branch).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{frob_dot, frob_norm, sym_part, FeSpace, Form, Mat2};
use crate::linsolve::SparseSym;
use crate::mesh::Side;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub g: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub nu: f64,
    pub form: Form,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { mu: 1.0, g: 0.0, beta: 1e3, gamma: 1e9, sigma: 0.0, nu: 0.0, form: Form::Sym }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            (self.mu > 0.0, "mu must be > 0"),
            (self.g >= 0.0, "g must be >= 0"),
            (self.beta > 0.0, "beta must be > 0"),
            (self.gamma > 0.0, "gamma must be > 0"),
            (self.sigma >= 0.0, "sigma must be >= 0"),
            (self.nu >= 0.0, "nu must be >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(ModelError::InvalidParameter(msg.to_string()));
            }
        }
        Ok(())
    }

    /// Coefficient `c` of `∫ T:T` in the energy.
    pub fn viscous_coeff(&self) -> f64 {
        match self.form {
            Form::Sym => self.mu,
            Form::Grad => 0.5 * self.mu,
        }
    }

    fn tensor(&self, g: &Mat2) -> Mat2 {
        match self.form {
            Form::Sym => sym_part(g),
            Form::Grad => *g,
        }
    }
}

/// Huber regularization of `g |A|` as a function of the norm `|A|`.
pub fn huber_norm(norm: f64, g: f64, beta: f64) -> f64 {
    if norm * beta > g {
        g * norm - g * g / (2.0 * beta)
    } else {
        0.5 * beta * norm * norm
    }
}

/// `Ψ(A)`, the Huber regularization of `g |A|_F`.
pub fn huber_frobenius(a: &Mat2, g: f64, beta: f64) -> f64 {
    huber_norm(frob_norm(a), g, beta)
}

/// `max(g, beta |A|)`.
pub fn theta_beta(a: &Mat2, g: f64, beta: f64) -> f64 {
    g.max(beta * frob_norm(a))
}

/// Huber regularization of `sigma |z|`.
pub fn huber_abs(z: f64, sigma: f64, gamma: f64) -> f64 {
    if gamma * z.abs() > sigma {
        sigma * z.abs() - sigma * sigma / (2.0 * gamma)
    } else {
        0.5 * gamma * z * z
    }
}

/// True on the quadratic branch of [`huber_norm`].
pub fn strain_active(norm: f64, g: f64, beta: f64) -> bool {
    beta * norm <= g
}

/// True on the quadratic branch of [`huber_abs`].
pub fn div_active(z: f64, sigma: f64, gamma: f64) -> bool {
    gamma * z.abs() <= sigma
}

/// Selection from the generalized derivative of `z -> sigma gamma z / max(sigma, gamma |z|)`.
/// On the affine branch both terms are evaluated and cancel exactly.
pub fn div_hessian_weight(z: f64, sigma: f64, gamma: f64) -> f64 {
    if div_active(z, sigma, gamma) {
        gamma
    } else {
        let a = z.abs();
        (sigma / a) * (1.0 - (z * z) / (a * a))
    }
}

type BodyForce = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Body force plus constant tractions on rectangle sides.
#[derive(Clone, Default)]
pub struct Forcing {
    body: Option<BodyForce>,
    pub tractions: Vec<(Side, [f64; 2])>,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing")
            .field("body", &self.body.as_ref().map(|_| "<fn>"))
            .field("tractions", &self.tractions)
            .finish()
    }
}

impl Forcing {
    pub fn zero() -> Self {
        Forcing::default()
    }

    pub fn body(f: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Forcing { body: Some(Arc::new(f)), tractions: Vec::new() }
    }

    pub fn constant(v: [f64; 2]) -> Self {
        Self::body(move |_| v)
    }

    pub fn with_traction(mut self, side: Side, t: [f64; 2]) -> Self {
        self.tractions.push((side, t));
        self
    }

    pub fn body_at(&self, p: [f64; 2]) -> [f64; 2] {
        self.body.as_ref().map_or([0.0, 0.0], |f| f(p))
    }
}

/// Load vector `l` with `l . v = ∫ f.v + ∫_Γ t.v`.
pub fn load_vector(space: &FeSpace, forcing: &Forcing) -> Vec<f64> {
    let mut l = vec![0.0; space.ndof()];
    if forcing.body.is_some() {
        for e in 0..space.n_elements() {
            let dofs = space.element_dofs(e);
            for q in space.qp(e) {
                let f = forcing.body_at(q.point);
                for a in 0..6 {
                    l[dofs[2 * a]] += q.weight * f[0] * q.values[a];
                    l[dofs[2 * a + 1]] += q.weight * f[1] * q.values[a];
                }
            }
        }
    }
    // Integrals of the 1D quadratic basis over an edge of unit length.
    const EDGE_W: [f64; 3] = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
    for &(side, t) in &forcing.tractions {
        for be in space.boundary_edges.iter().filter(|be| be.side == side) {
            for (k, &n) in be.nodes.iter().enumerate() {
                l[2 * n] += be.length * EDGE_W[k] * t[0];
                l[2 * n + 1] += be.length * EDGE_W[k] * t[1];
            }
        }
    }
    l
}

/// Tensor of the basis field `phi_a e_c` given `grad phi_a`.
#[inline]
fn basis_tensor(form: Form, c: usize, grad: &[f64; 2]) -> Mat2 {
    let mut g = [[0.0; 2]; 2];
    g[c] = *grad;
    match form {
        Form::Sym => sym_part(&g),
        Form::Grad => g,
    }
}

fn huber_on(p: &ModelParams) -> bool {
    p.g > 0.0
}

fn div_huber_on(p: &ModelParams) -> bool {
    p.sigma > 0.0 && p.gamma > 0.0
}

pub fn eval_j(space: &FeSpace, u: &[f64], p: &ModelParams, load: &[f64]) -> f64 {
    let c = p.viscous_coeff();
    let mut e = 0.0;
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        for q in space.qp(el) {
            let t = p.tensor(&FeSpace::gradient(&local, q));
            let n2 = frob_dot(&t, &t);
            let mut val = c * n2;
            if huber_on(p) {
                val += huber_norm(n2.sqrt(), p.g, p.beta);
            }
            e += q.weight * val;
        }
    }
    e - crate::linsolve::dot(load, u)
}

/// `(∫|Div u|, ‖Div u‖_L2)`.
pub fn div_norms(space: &FeSpace, u: &[f64]) -> (f64, f64) {
    let (mut l1, mut l2) = (0.0, 0.0);
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        for q in space.qp(el) {
            let g = FeSpace::gradient(&local, q);
            let d = g[0][0] + g[1][1];
            l1 += q.weight * d.abs();
            l2 += q.weight * d * d;
        }
    }
    (l1, l2.sqrt())
}

pub fn eval_jsigma(space: &FeSpace, u: &[f64], p: &ModelParams, load: &[f64]) -> f64 {
    eval_j(space, u, p, load) + p.sigma * div_norms(space, u).0
}

pub fn eval_jnu(space: &FeSpace, u: &[f64], p: &ModelParams, load: &[f64]) -> f64 {
    let l2 = div_norms(space, u).1;
    eval_j(space, u, p, load) + 0.5 * p.nu * l2 * l2
}

/// `∫ |Div u|_gamma`, the Huber surrogate of `sigma ‖Div u‖_L1`.
pub fn eval_h(space: &FeSpace, u: &[f64], p: &ModelParams) -> f64 {
    if !div_huber_on(p) {
        return 0.0;
    }
    space.integrate(u, |_, _, g| huber_abs(g[0][0] + g[1][1], p.sigma, p.gamma))
}

pub fn assemble_grad_j(space: &FeSpace, u: &[f64], p: &ModelParams, load: &[f64]) -> Vec<f64> {
    let c2 = 2.0 * p.viscous_coeff();
    let mut r: Vec<f64> = load.iter().map(|l| -l).collect();
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        let dofs = space.element_dofs(el);
        for q in space.qp(el) {
            let t = p.tensor(&FeSpace::gradient(&local, q));
            let mut coef = c2;
            if huber_on(p) {
                coef += p.g * p.beta / p.g.max(p.beta * frob_norm(&t));
            }
            // S : T(phi_a e_c) = sum_j S[c][j] d_j phi_a for both forms.
            for (a, gr) in q.grads.iter().enumerate() {
                for cc in 0..2 {
                    r[dofs[2 * a + cc]] += q.weight * coef * (t[cc][0] * gr[0] + t[cc][1] * gr[1]);
                }
            }
        }
    }
    r
}

/// Derivative of `∫|Div u|_gamma`.
pub fn assemble_grad_h(space: &FeSpace, u: &[f64], p: &ModelParams) -> Vec<f64> {
    let mut s = vec![0.0; space.ndof()];
    if !div_huber_on(p) {
        return s;
    }
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        let dofs = space.element_dofs(el);
        for q in space.qp(el) {
            let g = FeSpace::gradient(&local, q);
            let d = g[0][0] + g[1][1];
            let flux = p.sigma * p.gamma * d / p.sigma.max(p.gamma * d.abs());
            for (a, gr) in q.grads.iter().enumerate() {
                s[dofs[2 * a]] += q.weight * flux * gr[0];
                s[dofs[2 * a + 1]] += q.weight * flux * gr[1];
            }
        }
    }
    s
}

/// Derivative of `(scale/2) ‖Div u‖²`, i.e. `scale ∫ Div u Div v`.
pub fn assemble_grad_div_quadratic(space: &FeSpace, u: &[f64], scale: f64) -> Vec<f64> {
    let mut s = vec![0.0; space.ndof()];
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        let dofs = space.element_dofs(el);
        for q in space.qp(el) {
            let g = FeSpace::gradient(&local, q);
            let d = scale * (g[0][0] + g[1][1]);
            for (a, gr) in q.grads.iter().enumerate() {
                s[dofs[2 * a]] += q.weight * d * gr[0];
                s[dofs[2 * a + 1]] += q.weight * d * gr[1];
            }
        }
    }
    s
}

/// Generalized Hessian of `J`. With `rank_one = false` the rank-one
/// subtraction on the plastic branch is dropped.
pub fn assemble_hessian_j(space: &FeSpace, u: &[f64], p: &ModelParams, rank_one: bool) -> SparseSym {
    let c2 = 2.0 * p.viscous_coeff();
    let mut m = space.zero_matrix();
    let mut local_m = [0.0; 144];
    let mut bt = [[[0.0; 2]; 2]; 12];
    for el in 0..space.n_elements() {
        local_m.fill(0.0);
        let local = space.local_values(u, el);
        for q in space.qp(el) {
            let t = p.tensor(&FeSpace::gradient(&local, q));
            let (mut a_coef, mut b_coef) = (c2, 0.0);
            if huber_on(p) {
                let n = frob_norm(&t);
                if strain_active(n, p.g, p.beta) {
                    a_coef += p.beta;
                } else {
                    a_coef += p.g / n;
                    if rank_one {
                        b_coef = p.g / (n * n * n);
                    }
                }
            }
            let mut proj = [0.0; 12];
            for a in 0..6 {
                for cc in 0..2 {
                    let k = 2 * a + cc;
                    bt[k] = basis_tensor(p.form, cc, &q.grads[a]);
                    proj[k] = frob_dot(&t, &bt[k]);
                }
            }
            for i in 0..12 {
                for j in i..12 {
                    let v = q.weight * (a_coef * frob_dot(&bt[i], &bt[j]) - b_coef * proj[i] * proj[j]);
                    local_m[12 * i + j] += v;
                    if i != j {
                        local_m[12 * j + i] += v;
                    }
                }
            }
        }
        space.scatter_element(&mut m, el, &local_m);
    }
    m
}

/// Assembles `∫ w(x) Div v Div w` with `w` computed from `Div u` at each point.
fn assemble_div_weighted(space: &FeSpace, u: Option<&[f64]>, weight: impl Fn(f64) -> f64) -> SparseSym {
    let mut m = space.zero_matrix();
    let mut local_m = [0.0; 144];
    for el in 0..space.n_elements() {
        local_m.fill(0.0);
        let local = u.map(|u| space.local_values(u, el));
        for q in space.qp(el) {
            let d = local.as_ref().map_or(0.0, |l| {
                let g = FeSpace::gradient(l, q);
                g[0][0] + g[1][1]
            });
            let w = q.weight * weight(d);
            if w == 0.0 {
                continue;
            }
            // Divergence of phi_a e_c is d_c phi_a.
            let mut div = [0.0; 12];
            for a in 0..6 {
                div[2 * a] = q.grads[a][0];
                div[2 * a + 1] = q.grads[a][1];
            }
            for i in 0..12 {
                for j in 0..12 {
                    local_m[12 * i + j] += w * div[i] * div[j];
                }
            }
        }
        space.scatter_element(&mut m, el, &local_m);
    }
    m
}

/// Generalized Hessian of `∫|Div u|_gamma`. In two dimensions the divergence
/// is scalar, so the plastic-branch weight is identically zero; `rank_one`
/// is kept for symmetry with [`assemble_hessian_j`].
pub fn assemble_hessian_h(space: &FeSpace, u: &[f64], p: &ModelParams, rank_one: bool) -> SparseSym {
    if !div_huber_on(p) {
        return space.zero_matrix();
    }
    assemble_div_weighted(space, Some(u), |d| {
        if rank_one || div_active(d, p.sigma, p.gamma) {
            div_hessian_weight(d, p.sigma, p.gamma)
        } else {
            p.sigma / d.abs()
        }
    })
}

/// `scale ∫ Div v Div w`.
pub fn assemble_div_div(space: &FeSpace, scale: f64) -> SparseSym {
    assemble_div_weighted(space, None, |_| scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetStats {
    pub fraction_strain_inactive: f64,
    pub fraction_div_inactive: f64,
}

pub fn active_set_stats(space: &FeSpace, u: &[f64], p: &ModelParams) -> ActiveSetStats {
    let (mut total, mut s_in, mut d_in) = (0.0, 0.0, 0.0);
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        for q in space.qp(el) {
            let g = FeSpace::gradient(&local, q);
            let t = p.tensor(&g);
            total += q.weight;
            if !strain_active(frob_norm(&t), p.g, p.beta) {
                s_in += q.weight;
            }
            if !div_active(g[0][0] + g[1][1], p.sigma, p.gamma) {
                d_in += q.weight;
            }
        }
    }
    ActiveSetStats { fraction_strain_inactive: s_in / total, fraction_div_inactive: d_in / total }
}

/// Branch of both regularizations at every quadrature point: bit 0 set when the
/// strain term is on its quadratic branch, bit 1 for the divergence term.
pub fn branch_pattern(space: &FeSpace, u: &[f64], p: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(space.n_qp() * space.n_elements());
    for el in 0..space.n_elements() {
        let local = space.local_values(u, el);
        for q in space.qp(el) {
            let g = FeSpace::gradient(&local, q);
            let s = strain_active(frob_norm(&p.tensor(&g)), p.g, p.beta) as u8;
            let d = div_active(g[0][0] + g[1][1], p.sigma, p.gamma) as u8;
            out.push(s | (d << 1));
        }
    }
    out
}

/// `‖u‖_L2`.
pub fn l2_norm(space: &FeSpace, u: &[f64]) -> f64 {
    space.integrate(u, |_, v, _| v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// `‖∇u‖_L2`, the norm used for all H1 distances.
pub fn h1_seminorm(space: &FeSpace, u: &[f64]) -> f64 {
    space.integrate(u, |_, _, g| frob_dot(g, g)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_examples() {
        let a = [[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(huber_frobenius(&a, 2.0, 4.0), 1.5);
        assert_eq!(huber_abs(1.0, 4.0, 8.0), 3.0);
        assert_eq!(theta_beta(&a, 1.0, 10.0), 10.0);
        assert_eq!(theta_beta(&[[0.0; 2]; 2], 3.0, 10.0), 3.0);
        assert_eq!(div_hessian_weight(0.7, 2.0, 100.0), 0.0);
        assert_eq!(div_hessian_weight(0.01, 2.0, 100.0), 100.0);
    }

    #[test]
    fn traction_load_integrates_to_side_length() {
        let mesh = crate::mesh::build_rect_mesh(3, 4, crate::mesh::Rect::new(0.0, 2.0, 0.0, 1.5)).unwrap();
        let s = FeSpace::new(mesh, 4).unwrap();
        let l = load_vector(&s, &Forcing::zero().with_traction(Side::Right, [2.0, 0.0]));
        let fx: f64 = l.iter().step_by(2).sum();
        assert!((fx - 3.0).abs() < 1e-13);
        let l = load_vector(&s, &Forcing::constant([0.0, 1.0]));
        let fy: f64 = l.iter().skip(1).step_by(2).sum();
        assert!((fy - 3.0).abs() < 1e-13);
    }
}
