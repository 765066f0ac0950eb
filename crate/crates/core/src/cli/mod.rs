//! Command implementations behind the `bingham` binary.
//!
//! Exit codes: 0 on success or convergence, 1 when a run finishes without
//! converging or a check fails, 2 for configuration and I/O errors.

pub mod config;
pub mod gradcheck;
pub mod output;

use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, PoiseuilleDrive};
use crate::model::{self, ActiveSetStats};
use crate::solvers::{self, IterationRecord, Method, SolveReport, SolverError, StopReason};

pub use config::{ConfigError, Format, Preset, RunConfig};
pub use gradcheck::GradcheckSample;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Solver(SolverError::InvalidConfig(_) | SolverError::Model(_))
            | CliError::Solver(SolverError::NonSolenoidalStart(_)) => EXIT_USAGE,
            _ => EXIT_NOT_CONVERGED,
        }
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub method: Method,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    #[serde(rename = "final")]
    pub final_record: IterationRecord,
    pub rank_one_drops: usize,
    pub damping_events: usize,
    pub active_set: ActiveSetStats,
    pub sigma0_estimate: Option<f64>,
    pub multiplier_l2: Option<f64>,
    /// Poiseuille preset only: distances to the exact profile.
    pub h1_error: Option<f64>,
    pub l2_error: Option<f64>,
    pub config: serde_json::Value,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

fn params_for(cfg: &RunConfig, method: Method) -> crate::model::ModelParams {
    let mut p = cfg.params();
    if method == Method::Qp && p.nu == 0.0 {
        p.nu = p.sigma;
    }
    p
}

fn summarize(cfg: &RunConfig, problem: &solvers::Problem, report: &SolveReport) -> RunReport {
    let u = &report.final_field;
    let lambda = analysis::recover_multiplier(problem, u).ok();
    let sigma0 = lambda
        .as_ref()
        .map(|l| analysis::estimate_sigma0(&problem.space, l, cfg.experiment.sigma0_area_exponent));
    let (l2_error, h1_error) = if cfg.experiment.preset == Preset::Poiseuille {
        let (l2, h1) = analysis::poiseuille_errors(&problem.space, u, problem.params.g);
        (Some(l2), Some(h1))
    } else {
        (None, None)
    };
    let mut config = cfg.resolved();
    config["model"] = serde_json::to_value(problem.params).expect("params serialize");
    config["solver"]["method"] = serde_json::to_value(report.method).expect("method serializes");
    RunReport {
        method: report.method,
        converged: report.converged,
        stop_reason: report.stop_reason.clone(),
        iterations: report.iterations(),
        final_record: *report.last(),
        rank_one_drops: report.rank_one_drops,
        damping_events: report.damping_events,
        active_set: model::active_set_stats(&problem.space, u, &problem.params),
        sigma0_estimate: sigma0,
        multiplier_l2: lambda.as_ref().map(|l| l.l2_norm(&problem.space)),
        h1_error,
        l2_error,
        config,
    }
}

fn write_outputs(
    cfg: &RunConfig,
    dir: &Path,
    stem: &str,
    problem: &solvers::Problem,
    report: &SolveReport,
    summary: &RunReport,
) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for fmt in &cfg.output.formats {
        match fmt {
            Format::Csv => output::write_history(&dir.join(format!("{stem}history.csv")), &report.history)?,
            Format::Json => {
                let text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
                std::fs::write(dir.join(format!("{stem}report.json")), text)?;
            }
            Format::Vtk => output::write_vtk(&dir.join(format!("{stem}solution.vtk")), &problem.space, &report.final_field)?,
        }
    }
    Ok(())
}

/// Runs the configured method and writes the configured outputs into `out_dir`
/// (or `output.dir` when `None`).
pub fn cmd_solve(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<(RunReport, SolveReport), CliError> {
    let method = cfg.solver.method;
    let problem = cfg.build_problem()?.with_params(params_for(cfg, method))?;
    let report = solvers::solve(&problem, method, &cfg.solver.options())?;
    let summary = summarize(cfg, &problem, &report);
    let dir = out_dir.unwrap_or(&cfg.output.dir);
    write_outputs(cfg, dir, "", &problem, &report, &summary)?;
    Ok((summary, report))
}

pub const COMPARISON_HEADER: &str = "method,k,J,J_sigma,div_l1,div_l2,indicator,alpha,linear_iters,time_s";

/// Runs several methods on one configuration. Each method's outputs get a
/// `<method>_` prefix; `comparison.csv` collects all histories. A failing
/// method does not discard the others.
pub fn cmd_compare(
    cfg: &RunConfig,
    methods: &[Method],
    out_dir: Option<&Path>,
) -> Result<Vec<(Method, Result<RunReport, CliError>)>, CliError> {
    let base = cfg.build_problem()?;
    let dir = out_dir.unwrap_or(&cfg.output.dir);
    std::fs::create_dir_all(dir)?;
    let mut rows = vec![COMPARISON_HEADER.to_string()];
    let mut results = Vec::new();
    for &m in methods {
        let mut run = || -> Result<RunReport, CliError> {
            let problem = base.with_params(params_for(cfg, m))?;
            let report = solvers::solve(&problem, m, &cfg.solver.options())?;
            let summary = summarize(cfg, &problem, &report);
            for r in &report.history {
                rows.push(format!("{},{}", m.name(), output::history_row(r)));
            }
            write_outputs(cfg, dir, &format!("{}_", m.name()), &problem, &report, &summary)?;
            Ok(summary)
        };
        let res = run();
        results.push((m, res));
    }
    std::fs::write(dir.join("comparison.csv"), rows.join("\n") + "\n")?;
    Ok(results)
}

pub fn compare_exit_code(results: &[(Method, Result<RunReport, CliError>)]) -> i32 {
    results
        .iter()
        .map(|(_, r)| match r {
            Ok(s) => s.exit_code(),
            Err(e) => e.exit_code(),
        })
        .max()
        .unwrap_or(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub samples: Vec<GradcheckSample>,
    pub worst_grad: f64,
    pub worst_hess: f64,
    pub passed: bool,
}

/// Finite-difference check of the assembled derivatives on the configured
/// problem, rebuilt on a `gradcheck.nx` mesh.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradcheckReport, CliError> {
    let gc = &cfg.gradcheck;
    let mut small = cfg.clone();
    small.mesh.nx = gc.nx;
    small.mesh.ny = None;
    let problem = small.build_problem()?;
    let samples: Vec<_> = gc
        .seeds
        .iter()
        .map(|&s| gradcheck::check_at_seed(&problem, s, gc.amplitude, gc.corrupt_residual))
        .collect();
    let worst_grad = samples.iter().map(|s| s.grad_rel_err).fold(0.0, f64::max);
    let worst_hess = samples.iter().map(|s| s.hess_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        passed: worst_grad <= gc.grad_tol && worst_hess <= gc.hess_tol,
        samples,
        worst_grad,
        worst_hess,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PoiseuilleValidation {
    pub nx: usize,
    pub converged: bool,
    pub iterations: usize,
    pub h1_error: f64,
    pub l2_error: f64,
    pub div_l2: f64,
    /// L2 distance of the recovered multiplier to the exact zero-mean pressure:
    /// `1/2 - x` for the pressure drop, zero for the body force.
    pub multiplier_error: Option<f64>,
    pub sigma0_estimate: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParamOverrides {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
}

/// EP on the channel-flow preset, compared with the exact profile.
pub fn validate_poiseuille(
    nx: usize,
    drive: PoiseuilleDrive,
    overrides: ParamOverrides,
    h1_tol: f64,
) -> Result<PoiseuilleValidation, CliError> {
    if nx == 0 {
        return Err(ConfigError::Invalid("nx must be positive".into()).into());
    }
    let mut setup = analysis::poiseuille_setup(nx, drive);
    setup.params.beta = overrides.beta.unwrap_or(setup.params.beta);
    setup.params.gamma = overrides.gamma.unwrap_or(setup.params.gamma);
    setup.params.sigma = overrides.sigma.unwrap_or(setup.params.sigma);
    setup.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let problem = setup.build(4)?;
    let report = solvers::ep_solve(&problem, &Default::default())?;
    let u = &report.final_field;
    let (l2, h1) = analysis::poiseuille_errors(&problem.space, u, problem.params.g);
    let lambda = analysis::recover_multiplier(&problem, u)?;
    let multiplier_error = match drive {
        PoiseuilleDrive::PressureDrop => Some(lambda.l2_distance_to(&problem.space, |p| 0.5 - p[0])),
        PoiseuilleDrive::BodyForce => Some(lambda.l2_norm(&problem.space)),
    };
    Ok(PoiseuilleValidation {
        nx,
        converged: report.converged,
        iterations: report.iterations(),
        h1_error: h1,
        l2_error: l2,
        div_l2: report.last().div_l2,
        multiplier_error,
        sigma0_estimate: analysis::estimate_sigma0(&problem.space, &lambda, -0.5),
        passed: report.converged && h1 <= h1_tol,
    })
}
