#![allow(dead_code)]

use bingham_ep::fem::FeSpace;
use bingham_ep::mesh::{build_rect_mesh, Rect};
use bingham_ep::model;
use bingham_ep::solvers::Problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_space(n: usize, degree: usize) -> FeSpace {
    FeSpace::new(build_rect_mesh(n, n, Rect::UNIT).unwrap(), degree).unwrap()
}

pub fn random_field(seed: u64, n: usize, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect()
}

pub fn axpy(u: &[f64], s: f64, v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a + s * b).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn h1_distance(p: &Problem, a: &[f64], b: &[f64]) -> f64 {
    model::h1_seminorm(&p.space, &sub(a, b))
}

/// Textbook dense Cholesky solve, used as an oracle.
pub fn dense_cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                assert!(d > 0.0, "matrix not positive definite");
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Mixed-branch parameters for derivative checks on an 8x8 mesh: with
/// amplitude ~1e-2 both regularizations see both branches.
pub fn mixed_params() -> bingham_ep::model::ModelParams {
    bingham_ep::model::ModelParams {
        mu: 1.0,
        g: 1.0,
        beta: 10.0,
        gamma: 10.0,
        sigma: 1.0,
        nu: 0.0,
        form: bingham_ep::fem::Form::Sym,
    }
}

pub fn derivative_problem() -> Problem {
    let base = bingham_ep::analysis::rotational_setup(8).build(4).unwrap();
    base.with_params(mixed_params()).unwrap()
}

pub struct GradientCheck {
    pub rel_j: f64,
    pub rel_h: f64,
}

/// Central differences of `J` and `h_gamma` along a random direction.
pub fn gradient_check(p: &Problem, seed: u64, amp: f64) -> GradientCheck {
    let n = p.space.ndof();
    let u = random_field(seed, n, amp);
    let v = random_field(seed + 1000, n, amp);
    let eps = 1e-6;
    let (up, um) = (axpy(&u, eps, &v), axpy(&u, -eps, &v));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let fd_j = (p.eval_j(&up) - p.eval_j(&um)) / (2.0 * eps);
    let an_j = dot(&p.grad_j(&u), &v);
    let h = |w: &[f64]| model::eval_h(&p.space, w, &p.params);
    let fd_h = (h(&up) - h(&um)) / (2.0 * eps);
    let an_h = dot(&model::assemble_grad_h(&p.space, &u, &p.params), &v);
    GradientCheck { rel_j: rel(fd_j, an_j), rel_h: rel(fd_h, an_h) }
}

pub struct HessianCheck {
    pub rel: f64,
    pub stable: bool,
    pub strain_inactive: f64,
    pub div_inactive: f64,
}

fn full_gradient(p: &Problem, u: &[f64]) -> Vec<f64> {
    let g = p.grad_j(u);
    let h = model::assemble_grad_h(&p.space, u, &p.params);
    g.iter().zip(&h).map(|(a, b)| a + b).collect()
}

/// Directional differences of `J' + h'` against `(𝒥 + ℋ) w`, with the branch
/// pattern verified identical at `u`, `u ± eps w` and `u ± 10 eps w`.
pub fn hessian_check(p: &Problem, seed: u64, amp: f64) -> HessianCheck {
    let n = p.space.ndof();
    let u = random_field(seed, n, amp);
    let w = random_field(seed + 2000, n, amp);
    let eps = 1e-7;
    let base = model::branch_pattern(&p.space, &u, &p.params);
    let stable = [-10.0, -1.0, 1.0, 10.0]
        .iter()
        .all(|s| model::branch_pattern(&p.space, &axpy(&u, s * eps, &w), &p.params) == base);
    let mut m = model::assemble_hessian_j(&p.space, &u, &p.params, true);
    m.add_scaled(1.0, &model::assemble_hessian_h(&p.space, &u, &p.params, true));
    let hw = m.matvec(&w);
    let gp = full_gradient(p, &axpy(&u, eps, &w));
    let gm = full_gradient(p, &axpy(&u, -eps, &w));
    let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let stats = model::active_set_stats(&p.space, &u, &p.params);
    HessianCheck {
        rel: norm(&sub(&fd, &hw)) / norm(&hw),
        stable,
        strain_inactive: stats.fraction_strain_inactive,
        div_inactive: stats.fraction_div_inactive,
    }
}
