//! Benchmark setups, analytical solutions, error norms, multiplier recovery
//! and the penalty-threshold estimate.
//!
//! Multipliers follow the convention `<J'(u), v> = (lambda, Div v)`. For a
//! channel driven by a pressure drop this makes `lambda` the pressure and
//! `-lambda` the multiplier of the L1 penalty.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{lift_boundary, FeSpace, FemError, Form, Mat2};
use crate::linsolve::{solve_spd, LinsolveError, SparseSym};
use crate::mesh::{build_rect_mesh, MeshError, Rect, Side, SideSet};
use crate::model::{Forcing, ModelParams};
use crate::solvers::{Problem, SolverError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("multiplier system could not be solved: {0}")]
    Multiplier(#[from] LinsolveError),
}

/// Exact channel velocity `u1(y)` on `[0, 1]` for yield stress `g`, unit
/// viscosity and unit pressure gradient.
pub fn poiseuille_exact(y: f64, g: f64) -> f64 {
    if g >= 0.5 {
        return 0.0;
    }
    let y = if y > 0.5 { 1.0 - y } else { y };
    let a = 1.0 - 2.0 * g;
    if y < 0.5 - g {
        0.125 * (a * a - (a - 2.0 * y).powi(2))
    } else {
        0.125 * a * a
    }
}

/// `d u1 / dy` of [`poiseuille_exact`].
pub fn poiseuille_exact_dy(y: f64, g: f64) -> f64 {
    if g >= 0.5 {
        return 0.0;
    }
    if y < 0.5 - g {
        0.5 * (1.0 - 2.0 * g - 2.0 * y)
    } else if y > 0.5 + g {
        -0.5 * (1.0 - 2.0 * g - 2.0 * (1.0 - y))
    } else {
        0.0
    }
}

/// How the channel flow is driven. Both give the same velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiseuilleDrive {
    /// Unit body force along x; the pressure is constant.
    BodyForce,
    /// Unit traction on the outlet, equivalent to the pressure `p = -x`.
    #[default]
    PressureDrop,
}

/// Named boundary lift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lift {
    /// Velocity `(1, 0)` on the top side including its corners.
    Lid,
}

/// Everything needed to build a [`Problem`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub nx: usize,
    pub ny: usize,
    pub rect: Rect,
    pub params: ModelParams,
    pub forcing: Forcing,
    pub dirichlet: SideSet,
    pub lift: Option<Lift>,
}

impl Setup {
    pub fn build(&self, quad_degree: usize) -> Result<Problem, AnalysisError> {
        let mesh = build_rect_mesh(self.nx, self.ny, self.rect)?;
        let space = FeSpace::new(mesh, quad_degree)?;
        let lift = self.lift.map(|Lift::Lid| {
            let top = self.rect.y1;
            lift_boundary(&space.dofmap, |p| if (p[1] - top).abs() <= 1e-12 { [1.0, 0.0] } else { [0.0, 0.0] })
        });
        Ok(Problem::new(space, self.params, self.forcing.clone(), self.dirichlet, lift)?)
    }
}

/// Rotationally forced cavity: `f = 300 (y - 1/2, 1/2 - x)`, `g = 10 sqrt 2`.
pub fn rotational_setup(n: usize) -> Setup {
    Setup {
        nx: n,
        ny: n,
        rect: Rect::UNIT,
        params: ModelParams {
            mu: 1.0,
            g: 10.0 * std::f64::consts::SQRT_2,
            beta: 1e3,
            gamma: 1e9,
            sigma: 2000.0,
            nu: 0.0,
            form: Form::Sym,
        },
        forcing: Forcing::body(|p| [300.0 * (p[1] - 0.5), 300.0 * (0.5 - p[0])]),
        dirichlet: SideSet::ALL,
        lift: None,
    }
}

/// Channel flow on the unit square: no-slip walls at `y = 0, 1`, open ends.
pub fn poiseuille_setup(n: usize, drive: PoiseuilleDrive) -> Setup {
    let forcing = match drive {
        PoiseuilleDrive::BodyForce => Forcing::constant([1.0, 0.0]),
        PoiseuilleDrive::PressureDrop => Forcing::zero().with_traction(Side::Right, [1.0, 0.0]),
    };
    Setup {
        nx: n,
        ny: n,
        rect: Rect::UNIT,
        params: ModelParams { mu: 1.0, g: 0.3, beta: 1e3, gamma: 1e9, sigma: 30.0, nu: 0.0, form: Form::Grad },
        forcing,
        dirichlet: SideSet::from_sides(&[Side::Bottom, Side::Top]),
        lift: None,
    }
}

/// Lid-driven cavity: unit tangential velocity on the top side.
pub fn lid_setup(n: usize) -> Setup {
    Setup {
        nx: n,
        ny: n,
        rect: Rect::UNIT,
        // Energy coefficient mu/2 with mu = 1/2 on the symmetric gradient.
        params: ModelParams { mu: 0.25, g: 2.0, beta: 1e3, gamma: 1e9, sigma: 1e4, nu: 0.0, form: Form::Sym },
        forcing: Forcing::zero(),
        dirichlet: SideSet::ALL,
        lift: Some(Lift::Lid),
    }
}

/// `(‖u - exact‖_L2, ‖∇u - ∇exact‖_L2)`.
pub fn error_norms(
    space: &FeSpace,
    u: &[f64],
    exact: impl Fn([f64; 2]) -> [f64; 2],
    exact_grad: impl Fn([f64; 2]) -> Mat2,
) -> (f64, f64) {
    let l2 = space.integrate(u, |p, v, _| {
        let e = exact(p);
        (v[0] - e[0]).powi(2) + (v[1] - e[1]).powi(2)
    });
    let h1 = space.integrate(u, |p, _, g| {
        let e = exact_grad(p);
        (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (g[i][j] - e[i][j]).powi(2)).sum()
    });
    (l2.sqrt(), h1.sqrt())
}

/// Errors against the channel profile for yield stress `g`.
pub fn poiseuille_errors(space: &FeSpace, u: &[f64], g: f64) -> (f64, f64) {
    error_norms(
        space,
        u,
        |p| [poiseuille_exact(p[1], g), 0.0],
        |p| [[0.0, poiseuille_exact_dy(p[1], g)], [0.0, 0.0]],
    )
}

/// Continuous piecewise-linear scalar field given by its vertex values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldP1 {
    pub values: Vec<f64>,
    pub zero_mean: bool,
}

impl ScalarFieldP1 {
    pub fn zeros(n: usize) -> Self {
        ScalarFieldP1 { values: vec![0.0; n], zero_mean: true }
    }

    pub fn scaled(&self, s: f64) -> Self {
        ScalarFieldP1 { values: self.values.iter().map(|v| s * v).collect(), zero_mean: self.zero_mean }
    }

    pub fn eval_at(&self, space: &FeSpace, element: usize, bary: &[f64; 3]) -> f64 {
        let t = &space.mesh.triangles[element];
        (0..3).map(|k| bary[k] * self.values[t[k]]).sum()
    }

    /// `∫ F(x, value)` by the space's quadrature.
    pub fn integrate(&self, space: &FeSpace, f: impl Fn([f64; 2], f64) -> f64) -> f64 {
        let mut s = 0.0;
        for e in 0..space.n_elements() {
            for q in space.qp(e) {
                s += q.weight * f(q.point, self.eval_at(space, e, &q.bary));
            }
        }
        s
    }

    pub fn mean(&self, space: &FeSpace) -> f64 {
        self.integrate(space, |_, v| v) / space.mesh.domain.area()
    }

    pub fn l2_norm(&self, space: &FeSpace) -> f64 {
        self.integrate(space, |_, v| v * v).sqrt()
    }

    /// `‖self - f‖_L2`.
    pub fn l2_distance_to(&self, space: &FeSpace, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.integrate(space, |p, v| (v - f(p)).powi(2)).sqrt()
    }

    pub fn l2_distance(&self, space: &FeSpace, other: &ScalarFieldP1) -> f64 {
        let diff = ScalarFieldP1 {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            zero_mean: false,
        };
        diff.l2_norm(space)
    }

    /// Subtracts the mean.
    pub fn make_zero_mean(&mut self, space: &FeSpace) {
        let m = self.mean(space);
        self.values.iter_mut().for_each(|v| *v -= m);
        self.zero_mean = true;
    }
}

/// Coupling `B[i][p] = ∫ psi_p Div phi_i` as rows per velocity dof.
fn div_coupling(space: &FeSpace) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); space.ndof()];
    for e in 0..space.n_elements() {
        let dofs = space.element_dofs(e);
        let verts = space.mesh.triangles[e];
        let mut local = [[0.0; 3]; 12];
        for q in space.qp(e) {
            for a in 0..6 {
                for c in 0..2 {
                    for k in 0..3 {
                        local[2 * a + c][k] += q.weight * q.bary[k] * q.grads[a][c];
                    }
                }
            }
        }
        for (i, row) in local.iter().enumerate() {
            for k in 0..3 {
                rows[dofs[i]].push((verts[k], row[k]));
            }
        }
    }
    for r in rows.iter_mut() {
        r.sort_by_key(|x| x.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(r.len());
        for &(p, v) in r.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += v,
                _ => merged.push((p, v)),
            }
        }
        *r = merged;
    }
    rows
}

/// Diagonal of the consistent scalar P2 mass matrix at each node.
fn mass_diagonal(space: &FeSpace) -> Vec<f64> {
    let mut d = vec![0.0; space.dofmap.scalar_dof_count];
    for e in 0..space.n_elements() {
        let en = &space.dofmap.element_nodes[e];
        for q in space.qp(e) {
            for a in 0..6 {
                d[en[a]] += q.weight * q.values[a] * q.values[a];
            }
        }
    }
    d
}

fn p1_solve(n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>, LinsolveError> {
    let m = SparseSym::from_triplets(n, triplets);
    Ok(solve_spd(&m, rhs, 1e-12, 20 * n.max(100))?.x)
}

/// Least-squares multiplier `lambda` with `<J'(u), v> ≈ (lambda, Div v)` on
/// free velocity dofs, from `B^T M^-1 B lambda = B^T M^-1 r`, mean-corrected.
pub fn recover_multiplier(problem: &Problem, u: &[f64]) -> Result<ScalarFieldP1, AnalysisError> {
    let space = &problem.space;
    let nv = space.dofmap.vertex_count;
    let r = problem.grad_j(u);
    let mut constrained = vec![false; space.ndof()];
    for &d in &problem.dirichlet {
        constrained[d] = true;
    }
    let b = div_coupling(space);
    let mass = mass_diagonal(space);
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; nv];
    for (i, row) in b.iter().enumerate() {
        if constrained[i] {
            continue;
        }
        let m = mass[i / 2];
        for &(p, bp) in row {
            rhs[p] += bp * r[i] / m;
            for &(q, bq) in row {
                triplets.push((p, q, bp * bq / m));
            }
        }
    }
    let values = p1_solve(nv, &triplets, &rhs)?;
    let mut lambda = ScalarFieldP1 { values, zero_mean: false };
    lambda.make_zero_mean(space);
    Ok(lambda)
}

/// Penalty threshold estimate `‖lambda‖_L2 |Ω|^exponent` (exponent -1/2 by default).
pub fn estimate_sigma0(space: &FeSpace, lambda: &ScalarFieldP1, area_exponent: f64) -> f64 {
    lambda.l2_norm(space) * space.mesh.domain.area().powf(area_exponent)
}

/// Zero-mean L2 projection of `-nu Div u` onto continuous P1.
pub fn qp_pressure_estimate(space: &FeSpace, u_nu: &[f64], nu: f64) -> Result<ScalarFieldP1, AnalysisError> {
    let nv = space.dofmap.vertex_count;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; nv];
    for e in 0..space.n_elements() {
        let verts = space.mesh.triangles[e];
        let local = space.local_values(u_nu, e);
        for q in space.qp(e) {
            let g = FeSpace::gradient(&local, q);
            let d = -nu * (g[0][0] + g[1][1]);
            for a in 0..3 {
                rhs[verts[a]] += q.weight * d * q.bary[a];
                for b in 0..3 {
                    triplets.push((verts[a], verts[b], q.weight * q.bary[a] * q.bary[b]));
                }
            }
        }
    }
    let values = p1_solve(nv, &triplets, &rhs)?;
    let mut p = ScalarFieldP1 { values, zero_mean: false };
    p.make_zero_mean(space);
    Ok(p)
}
