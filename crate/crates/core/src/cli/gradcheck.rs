//! Finite-difference checks of the assembled gradient and Hessian of `J + h_gamma`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linsolve::{dot, norm2};
use crate::model;
use crate::solvers::Problem;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradcheckSample {
    pub seed: u64,
    pub grad_rel_err: f64,
    pub hess_rel_err: f64,
    pub eps: f64,
    /// Whether the branch pattern was identical on the whole difference stencil.
    pub branches_stable: bool,
    pub fraction_strain_inactive: f64,
    pub fraction_div_inactive: f64,
}

fn functional(problem: &Problem, u: &[f64]) -> f64 {
    problem.eval_j(u) + model::eval_h(&problem.space, u, &problem.params)
}

fn gradient(problem: &Problem, u: &[f64]) -> Vec<f64> {
    let mut g = problem.grad_j(u);
    let h = model::assemble_grad_h(&problem.space, u, &problem.params);
    g.iter_mut().zip(&h).for_each(|(a, b)| *a += b);
    g
}

fn hess_vec(problem: &Problem, u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut m = model::assemble_hessian_j(&problem.space, u, &problem.params, true);
    m.add_scaled(1.0, &model::assemble_hessian_h(&problem.space, u, &problem.params, true));
    m.matvec(v)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| amp * rng.random_range(-1.0..1.0)).collect()
}

fn axpy(u: &[f64], s: f64, v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a + s * b).collect()
}

/// One check at a random state drawn from `seed`. With `corrupt`, the analytic
/// gradient is perturbed so that the check must fail.
pub fn check_at_seed(problem: &Problem, seed: u64, amplitude: f64, corrupt: bool) -> GradcheckSample {
    let n = problem.space.ndof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_vec(&mut rng, n, amplitude);
    let v = random_vec(&mut rng, n, amplitude);

    let mut g = gradient(problem, &u);
    if corrupt {
        let bump = 1e-3 * norm2(&g) / (n as f64).sqrt();
        g.iter_mut().for_each(|x| *x += bump);
    }
    let analytic = dot(&g, &v);
    let hv = hess_vec(problem, &u, &v);

    let base = model::branch_pattern(&problem.space, &u, &problem.params);
    let mut eps = 1e-6;
    let mut stable = false;
    for _ in 0..20 {
        let plus = model::branch_pattern(&problem.space, &axpy(&u, eps, &v), &problem.params);
        let minus = model::branch_pattern(&problem.space, &axpy(&u, -eps, &v), &problem.params);
        if plus == base && minus == base {
            stable = true;
            break;
        }
        eps *= 0.5;
    }

    let up = axpy(&u, eps, &v);
    let um = axpy(&u, -eps, &v);
    let fd = (functional(problem, &up) - functional(problem, &um)) / (2.0 * eps);
    let grad_rel_err = (fd - analytic).abs() / analytic.abs().max(fd.abs()).max(f64::MIN_POSITIVE);

    let gp = gradient(problem, &up);
    let gm = gradient(problem, &um);
    let fd_h: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    let diff: Vec<f64> = fd_h.iter().zip(&hv).map(|(a, b)| a - b).collect();
    let hess_rel_err = norm2(&diff) / norm2(&hv).max(f64::MIN_POSITIVE);

    let stats = model::active_set_stats(&problem.space, &u, &problem.params);
    GradcheckSample {
        seed,
        grad_rel_err,
        hess_rel_err,
        eps,
        branches_stable: stable,
        fraction_strain_inactive: stats.fraction_strain_inactive,
        fraction_div_inactive: stats.fraction_div_inactive,
    }
}
