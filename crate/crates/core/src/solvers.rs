//! Outer nonlinear iterations: exact penalization (EP), quadratic penalization
//! (QP) and a semismooth Newton baseline (SSN).
//!
//! EP and QP share one loop. Each iteration solves the generalized Newton
//! system for a direction `w`, measures the descent indicator
//! `|<r, w>|`, and backtracks on the penalized objective.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::FeSpace;
use crate::linsolve::{dot, norm2, LinearSolver, LinsolveError, SparseSym};
use crate::mesh::SideSet;
use crate::model::{self, Forcing, ModelError, ModelParams};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("starting field is not divergence free (‖Div u0‖ = {0:e})")]
    NonSolenoidalStart(f64),
    #[error("line search failed after {backtracks} backtracks (last alpha {alpha:e})")]
    LineSearchFailed { backtracks: usize, alpha: f64 },
    #[error(transparent)]
    Linear(#[from] LinsolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ep,
    Qp,
    Ssn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ep => "ep",
            Method::Qp => "qp",
            Method::Ssn => "ssn",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ep" => Some(Method::Ep),
            "qp" => Some(Method::Qp),
            "ssn" => Some(Method::Ssn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    pub alpha0: f64,
    pub c1: f64,
    pub c_l: f64,
    pub c_u: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig { alpha0: 1.0, c1: 1e-4, c_l: 0.1, c_u: 0.5, max_backtracks: 30 }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.c1 > 0.0
            && self.c1 < 1.0
            && self.c_l > 0.0
            && self.c_l < self.c_u
            && self.c_u < 1.0
            && self.alpha0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidConfig(format!("bad line-search constants {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub value: f64,
    /// Every trial step in the order tried; the last one was accepted.
    pub trials: Vec<f64>,
}

/// Backtracking with quadratic then cubic interpolation, safeguarded to
/// `[c_l * alpha_prev, c_u * alpha_prev]`. A trial is accepted only if it
/// satisfies the sufficient-decrease test and lowers the objective strictly,
/// so steps lost in rounding are rejected rather than accepted as no-ops.
pub fn backtracking_line_search(
    mut phi: impl FnMut(f64) -> f64,
    phi0: f64,
    slope: f64,
    cfg: &LineSearchConfig,
) -> Result<LineSearchOutcome, SolverError> {
    cfg.validate()?;
    if !(slope < 0.0) {
        return Err(SolverError::InvalidConfig(format!("line search needs a negative slope, got {slope:e}")));
    }
    let mut alpha = cfg.alpha0;
    let mut trials = vec![alpha];
    let mut value = phi(alpha);
    let mut prev: Option<(f64, f64)> = None;
    let accept = |alpha: f64, value: f64| value < phi0 && value <= phi0 + cfg.c1 * alpha * slope;
    for _ in 0..cfg.max_backtracks {
        if accept(alpha, value) {
            return Ok(LineSearchOutcome { alpha, value, trials });
        }
        let candidate = if !value.is_finite() {
            cfg.c_l * alpha
        } else if let Some((a_p, v_p)) = prev.filter(|(_, v)| v.is_finite()) {
            cubic_step(phi0, slope, alpha, value, a_p, v_p)
        } else {
            -slope * alpha * alpha / (2.0 * (value - phi0 - slope * alpha))
        };
        let candidate = if candidate.is_finite() { candidate } else { cfg.c_u * alpha };
        let next = candidate.clamp(cfg.c_l * alpha, cfg.c_u * alpha);
        prev = Some((alpha, value));
        alpha = next;
        trials.push(alpha);
        value = phi(alpha);
    }
    if accept(alpha, value) {
        return Ok(LineSearchOutcome { alpha, value, trials });
    }
    Err(SolverError::LineSearchFailed { backtracks: cfg.max_backtracks, alpha })
}

/// Minimizer of the cubic through `phi(0)`, `phi'(0)` and two trial values.
fn cubic_step(phi0: f64, slope: f64, a: f64, va: f64, ap: f64, vp: f64) -> f64 {
    let r1 = va - phi0 - slope * a;
    let r2 = vp - phi0 - slope * ap;
    let den = a - ap;
    let c3 = (r1 / (a * a) - r2 / (ap * ap)) / den;
    let c2 = (-ap * r1 / (a * a) + a * r2 / (ap * ap)) / den;
    if c3 == 0.0 {
        -slope / (2.0 * c2)
    } else {
        let disc = c2 * c2 - 3.0 * c3 * slope;
        (-c2 + disc.max(0.0).sqrt()) / (3.0 * c3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearchConfig,
    pub linear: LinearSolver,
    /// Retry without the rank-one Hessian terms if the factorization fails.
    pub rank_one_fallback: bool,
    /// SSN only: halve the step while the residual grows by more than 100x.
    pub ssn_damping: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-5,
            max_iter: 100,
            line_search: LineSearchConfig::default(),
            linear: LinearSolver::Cholesky,
            rank_one_fallback: true,
            ssn_damping: true,
        }
    }
}

/// A discretized Bingham problem: space, parameters, data and constraints.
#[derive(Debug, Clone)]
pub struct Problem {
    pub space: FeSpace,
    pub params: ModelParams,
    pub forcing: Forcing,
    pub load: Vec<f64>,
    /// Sorted constrained vector dofs.
    pub dirichlet: Vec<usize>,
    /// Starting field; its values on `dirichlet` are the boundary data.
    pub u0: Vec<f64>,
}

impl Problem {
    pub fn new(
        space: FeSpace,
        params: ModelParams,
        forcing: Forcing,
        dirichlet_sides: SideSet,
        lift: Option<Vec<f64>>,
    ) -> Result<Self, SolverError> {
        params.validate()?;
        let load = model::load_vector(&space, &forcing);
        let dirichlet = space.dofmap.dofs_on_sides(dirichlet_sides);
        let u0 = match lift {
            Some(l) => {
                space.check_len(&l).map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
                l
            }
            None => vec![0.0; space.ndof()],
        };
        Ok(Problem { space, params, forcing, load, dirichlet, u0 })
    }

    pub fn with_params(&self, params: ModelParams) -> Result<Self, SolverError> {
        params.validate()?;
        Ok(Problem { params, ..self.clone() })
    }

    pub fn zero_constrained(&self, v: &mut [f64]) {
        for &d in &self.dirichlet {
            v[d] = 0.0;
        }
    }

    pub fn eval_j(&self, u: &[f64]) -> f64 {
        model::eval_j(&self.space, u, &self.params, &self.load)
    }

    pub fn grad_j(&self, u: &[f64]) -> Vec<f64> {
        model::assemble_grad_j(&self.space, u, &self.params, &self.load)
    }

    /// `(J, penalized objective, div L1, div L2)` for the given method.
    fn objectives(&self, u: &[f64], method: Method) -> (f64, f64, f64, f64) {
        let j = self.eval_j(u);
        let (l1, l2) = model::div_norms(&self.space, u);
        let pen = match method {
            Method::Ep => j + self.params.sigma * l1,
            Method::Qp => j + 0.5 * self.params.nu * l2 * l2,
            Method::Ssn => j + model::eval_h(&self.space, u, &self.params),
        };
        (j, pen, l1, l2)
    }

    fn objective(&self, u: &[f64], method: Method) -> f64 {
        self.objectives(u, method).1
    }

    /// Residual driving the direction solve, zeroed on constrained dofs.
    fn residual(&self, u: &[f64], method: Method) -> Vec<f64> {
        let mut r = self.grad_j(u);
        match method {
            Method::Ep => {}
            Method::Qp => {
                let s = model::assemble_grad_div_quadratic(&self.space, u, self.params.nu);
                r.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            }
            Method::Ssn => {
                let s = model::assemble_grad_h(&self.space, u, &self.params);
                r.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            }
        }
        self.zero_constrained(&mut r);
        r
    }

    /// Generalized Hessian of the method's model, before constraints.
    pub fn system_matrix(&self, u: &[f64], method: Method, rank_one: bool) -> SparseSym {
        let mut m = model::assemble_hessian_j(&self.space, u, &self.params, rank_one);
        let pen = match method {
            Method::Qp => model::assemble_div_div(&self.space, self.params.nu),
            Method::Ep | Method::Ssn => model::assemble_hessian_h(&self.space, u, &self.params, rank_one),
        };
        m.add_scaled(1.0, &pen);
        m
    }

    fn solve_direction(
        &self,
        u: &[f64],
        r: &[f64],
        method: Method,
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, usize, bool), LinsolveError> {
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let attempt = |rank_one: bool| {
            let mut m = self.system_matrix(u, method, rank_one);
            let mut b = rhs.clone();
            crate::fem::apply_dirichlet_in_place(&mut m, &mut b, &self.dirichlet, &vec![0.0; self.dirichlet.len()]);
            opts.linear.solve(&m, &b)
        };
        match attempt(true) {
            Ok(s) => Ok((s.x, s.iterations, false)),
            Err(LinsolveError::Indefinite { .. } | LinsolveError::NotPositiveDefinite { .. })
                if opts.rank_one_fallback =>
            {
                attempt(false).map(|s| (s.x, s.iterations, true))
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    #[serde(rename = "J")]
    pub j_value: f64,
    /// Penalized objective: `J_sigma` for EP, `J_nu` for QP, `J + h_gamma` for SSN.
    #[serde(rename = "J_sigma")]
    pub jsigma_value: f64,
    pub div_l1: f64,
    pub div_l2: f64,
    /// `|<r, w>|` for EP/QP; residual norm for SSN.
    pub indicator: f64,
    /// Step taken from this iterate; zero on the final record.
    pub alpha: f64,
    pub linear_iters: usize,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    NotDescent,
    LineSearchFailed(String),
    LinearSolveFailed(String),
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub history: Vec<IterationRecord>,
    pub final_field: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Iterations where the rank-one Hessian terms had to be dropped.
    pub rank_one_drops: usize,
    /// SSN step halvings.
    pub damping_events: usize,
}

impl SolveReport {
    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("history is nonempty")
    }

    pub fn iterations(&self) -> usize {
        self.last().k
    }
}

fn check_start(problem: &Problem) -> Result<(), SolverError> {
    let (_, l2) = model::div_norms(&problem.space, &problem.u0);
    if l2 > 1e-10 {
        return Err(SolverError::NonSolenoidalStart(l2));
    }
    Ok(())
}

/// Exact penalization: direction from `(𝒥 + ℋ) w = -J'(u)`, backtracking on
/// `J + sigma ‖Div u‖_L1`.
pub fn ep_solve(problem: &Problem, opts: &SolverOptions) -> Result<SolveReport, SolverError> {
    if !(problem.params.sigma > 0.0) {
        return Err(SolverError::InvalidConfig("EP needs sigma > 0".into()));
    }
    check_start(problem)?;
    descent_loop(problem, opts, Method::Ep)
}

/// Quadratic penalization: same loop on `J + (nu/2) ‖Div u‖²`.
pub fn qp_solve(problem: &Problem, opts: &SolverOptions) -> Result<SolveReport, SolverError> {
    if !(problem.params.nu >= 0.0) {
        return Err(SolverError::InvalidConfig("QP needs nu >= 0".into()));
    }
    descent_loop(problem, opts, Method::Qp)
}

/// One direction computation as used by EP at `u`.
#[derive(Debug, Clone)]
pub struct DescentStep {
    pub w: Vec<f64>,
    pub residual: Vec<f64>,
    pub linear_iters: usize,
    pub rank_one_dropped: bool,
}

pub fn descent_direction(problem: &Problem, u: &[f64], opts: &SolverOptions) -> Result<DescentStep, SolverError> {
    let r = problem.residual(u, Method::Ep);
    let (w, linear_iters, rank_one_dropped) = problem.solve_direction(u, &r, Method::Ep, opts)?;
    Ok(DescentStep { w, residual: r, linear_iters, rank_one_dropped })
}

fn descent_loop(problem: &Problem, opts: &SolverOptions, method: Method) -> Result<SolveReport, SolverError> {
    opts.line_search.validate()?;
    let mut u = problem.u0.clone();
    let mut history = Vec::new();
    let mut drops = 0;
    let stop;
    let mut k = 0;
    loop {
        let t0 = Instant::now();
        let (j, pen, l1, l2) = problem.objectives(&u, method);
        let mut rec = IterationRecord {
            k,
            j_value: j,
            jsigma_value: pen,
            div_l1: l1,
            div_l2: l2,
            indicator: f64::NAN,
            alpha: 0.0,
            linear_iters: 0,
            time_s: 0.0,
        };
        let r = problem.residual(&u, method);
        let (w, iters, dropped) = match problem.solve_direction(&u, &r, method, opts) {
            Ok(x) => x,
            Err(e) => {
                rec.time_s = t0.elapsed().as_secs_f64();
                history.push(rec);
                stop = StopReason::LinearSolveFailed(e.to_string());
                break;
            }
        };
        drops += dropped as usize;
        let slope = dot(&r, &w);
        rec.indicator = slope.abs();
        rec.linear_iters = iters;
        if rec.indicator <= opts.tol {
            rec.time_s = t0.elapsed().as_secs_f64();
            history.push(rec);
            stop = StopReason::Converged;
            break;
        }
        if k >= opts.max_iter {
            rec.time_s = t0.elapsed().as_secs_f64();
            history.push(rec);
            stop = StopReason::MaxIterations;
            break;
        }
        if slope >= 0.0 {
            rec.time_s = t0.elapsed().as_secs_f64();
            history.push(rec);
            stop = StopReason::NotDescent;
            break;
        }
        let mut trial = vec![0.0; u.len()];
        let ls = backtracking_line_search(
            |a| {
                for i in 0..u.len() {
                    trial[i] = u[i] + a * w[i];
                }
                problem.objective(&trial, method)
            },
            pen,
            slope,
            &opts.line_search,
        );
        match ls {
            Ok(out) => {
                for i in 0..u.len() {
                    u[i] += out.alpha * w[i];
                }
                rec.alpha = out.alpha;
                rec.time_s = t0.elapsed().as_secs_f64();
                history.push(rec);
            }
            Err(e) => {
                rec.time_s = t0.elapsed().as_secs_f64();
                history.push(rec);
                stop = StopReason::LineSearchFailed(e.to_string());
                break;
            }
        }
        k += 1;
    }
    Ok(SolveReport {
        method,
        converged: stop == StopReason::Converged,
        history,
        final_field: u,
        stop_reason: stop,
        rank_one_drops: drops,
        damping_events: 0,
    })
}

/// Full-step generalized Newton on `J'(u) + h'_gamma(u) = 0`.
pub fn ssn_solve(problem: &Problem, opts: &SolverOptions) -> Result<SolveReport, SolverError> {
    let p = &problem.params;
    if !(p.sigma > 0.0 && p.gamma > 0.0) {
        return Err(SolverError::InvalidConfig("SSN needs sigma > 0 and gamma > 0".into()));
    }
    let mut u = problem.u0.clone();
    let mut history = Vec::new();
    let (mut drops, mut damping) = (0, 0);
    let mut r = problem.residual(&u, Method::Ssn);
    let mut res = norm2(&r);
    let stop;
    let mut k = 0;
    loop {
        let t0 = Instant::now();
        let (j, pen, l1, l2) = problem.objectives(&u, Method::Ssn);
        let mut rec = IterationRecord {
            k,
            j_value: j,
            jsigma_value: pen,
            div_l1: l1,
            div_l2: l2,
            indicator: res,
            alpha: 0.0,
            linear_iters: 0,
            time_s: 0.0,
        };
        if res <= opts.tol {
            rec.time_s = t0.elapsed().as_secs_f64();
            history.push(rec);
            stop = StopReason::Converged;
            break;
        }
        if k >= opts.max_iter {
            rec.time_s = t0.elapsed().as_secs_f64();
            history.push(rec);
            stop = StopReason::MaxIterations;
            break;
        }
        let (delta, iters, dropped) = match problem.solve_direction(&u, &r, Method::Ssn, opts) {
            Ok(x) => x,
            Err(e) => {
                history.push(rec);
                stop = StopReason::LinearSolveFailed(e.to_string());
                break;
            }
        };
        drops += dropped as usize;
        rec.linear_iters = iters;
        let mut alpha = 1.0;
        let mut trial: Vec<f64>;
        let mut r_new;
        let mut halvings = 0;
        loop {
            trial = u.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            r_new = problem.residual(&trial, Method::Ssn);
            let grew = !(norm2(&r_new) <= 100.0 * res);
            if opts.ssn_damping && grew && halvings < 10 {
                alpha *= 0.5;
                halvings += 1;
                damping += 1;
            } else {
                break;
            }
        }
        u = trial;
        r = r_new;
        res = norm2(&r);
        rec.alpha = alpha;
        rec.time_s = t0.elapsed().as_secs_f64();
        history.push(rec);
        k += 1;
    }
    Ok(SolveReport {
        method: Method::Ssn,
        converged: stop == StopReason::Converged,
        history,
        final_field: u,
        stop_reason: stop,
        rank_one_drops: drops,
        damping_events: damping,
    })
}

pub fn solve(problem: &Problem, method: Method, opts: &SolverOptions) -> Result<SolveReport, SolverError> {
    match method {
        Method::Ep => ep_solve(problem, opts),
        Method::Qp => qp_solve(problem, opts),
        Method::Ssn => ssn_solve(problem, opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentDiagnostics {
    /// `<J'(u), w>`
    pub slope: f64,
    /// `w . (𝒥 + ℋ) w`
    pub curvature: f64,
    pub div_w_l2: f64,
    /// `gamma ‖Div w‖² / ‖r‖²`, reported only.
    pub gamma_ratio: f64,
}

pub fn check_descent_properties(problem: &Problem, u: &[f64], w: &[f64]) -> DescentDiagnostics {
    if w.iter().all(|&x| x == 0.0) {
        return DescentDiagnostics { slope: 0.0, curvature: 0.0, div_w_l2: 0.0, gamma_ratio: 0.0 };
    }
    let r = problem.residual(u, Method::Ep);
    let g = problem.system_matrix(u, Method::Ep, true);
    let div_w_l2 = model::div_norms(&problem.space, w).1;
    let rn = norm2(&r);
    DescentDiagnostics {
        slope: dot(&r, w),
        curvature: g.quadratic_form(w),
        div_w_l2,
        gamma_ratio: if rn > 0.0 { problem.params.gamma * div_w_l2 * div_w_l2 / (rn * rn) } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_accepts_unit_step() {
        let out = backtracking_line_search(|a| (a - 1.0) * (a - 1.0), 1.0, -2.0, &LineSearchConfig::default()).unwrap();
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.trials, vec![1.0]);
    }

    #[test]
    fn backtracks_stay_in_bracket() {
        let cfg = LineSearchConfig::default();
        // Minimum near 0.01 forces several rejections.
        let phi = |a: f64| (a - 0.01).powi(2) * 100.0 + a.powi(4) * 50.0;
        let out = backtracking_line_search(phi, phi(0.0), -2.0, &cfg).unwrap();
        assert!(out.trials.len() > 2);
        for w in out.trials.windows(2) {
            assert!(w[1] >= cfg.c_l * w[0] - 1e-15 && w[1] <= cfg.c_u * w[0] + 1e-15);
        }
        assert!(out.value < phi(0.0));
    }

    #[test]
    fn gives_up_on_ascent() {
        let cfg = LineSearchConfig { max_backtracks: 5, ..Default::default() };
        let err = backtracking_line_search(|a| a, 0.0, -1.0, &cfg).unwrap_err();
        assert!(matches!(err, SolverError::LineSearchFailed { .. }));
    }
}
