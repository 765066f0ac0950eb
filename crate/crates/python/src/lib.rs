//! Python bindings: problem presets, the three solvers and post-processing.

use bingham_ep::analysis::{self, PoiseuilleDrive};
use bingham_ep::cli::RunConfig;
use bingham_ep::model;
use bingham_ep::solvers::{self, IterationRecord, Method, SolveReport, SolverOptions};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn record_dict<'py>(py: Python<'py>, r: &IterationRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", r.k)?;
    d.set_item("J", r.j_value)?;
    d.set_item("J_sigma", r.jsigma_value)?;
    d.set_item("div_l1", r.div_l1)?;
    d.set_item("div_l2", r.div_l2)?;
    d.set_item("indicator", r.indicator)?;
    d.set_item("alpha", r.alpha)?;
    d.set_item("linear_iters", r.linear_iters)?;
    d.set_item("time_s", r.time_s)?;
    Ok(d)
}

/// Outcome of a solve.
#[pyclass(frozen)]
struct SolveResult {
    inner: SolveReport,
}

#[pymethods]
impl SolveResult {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    #[getter]
    fn stop_reason(&self) -> String {
        format!("{:?}", self.inner.stop_reason)
    }

    /// Final velocity coefficients, interleaved `(x, y)` per P2 node.
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.inner.final_field.clone()
    }

    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.history.iter().map(|r| record_dict(py, r)).collect()
    }

    #[getter]
    fn last<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        record_dict(py, self.inner.last())
    }

    fn __repr__(&self) -> String {
        let l = self.inner.last();
        format!(
            "SolveResult(method={}, converged={}, iterations={}, J={:e}, div_l2={:e})",
            self.inner.method.name(),
            self.inner.converged,
            self.inner.iterations(),
            l.j_value,
            l.div_l2
        )
    }
}

/// A discretized Bingham problem.
#[pyclass(frozen)]
struct Problem {
    inner: solvers::Problem,
}

fn parse_drive(drive: &str) -> PyResult<PoiseuilleDrive> {
    match drive {
        "pressure_drop" => Ok(PoiseuilleDrive::PressureDrop),
        "body_force" => Ok(PoiseuilleDrive::BodyForce),
        other => Err(value_err(format!("unknown drive '{other}'"))),
    }
}

impl Problem {
    fn check_len(&self, u: &[f64]) -> PyResult<()> {
        self.inner.space.check_len(u).map_err(value_err)
    }
}

#[pymethods]
impl Problem {
    /// Rotational body force in the unit square with no-slip walls.
    #[staticmethod]
    #[pyo3(signature = (n, quad_degree = 4))]
    fn rotational(n: usize, quad_degree: usize) -> PyResult<Self> {
        let inner = analysis::rotational_setup(n).build(quad_degree).map_err(value_err)?;
        Ok(Problem { inner })
    }

    /// Channel flow between no-slip walls at `y = 0` and `y = 1`.
    #[staticmethod]
    #[pyo3(signature = (n, drive = "pressure_drop", quad_degree = 4))]
    fn poiseuille(n: usize, drive: &str, quad_degree: usize) -> PyResult<Self> {
        let inner = analysis::poiseuille_setup(n, parse_drive(drive)?).build(quad_degree).map_err(value_err)?;
        Ok(Problem { inner })
    }

    /// Lid-driven cavity.
    #[staticmethod]
    #[pyo3(signature = (n, quad_degree = 4))]
    fn lid(n: usize, quad_degree: usize) -> PyResult<Self> {
        let inner = analysis::lid_setup(n).build(quad_degree).map_err(value_err)?;
        Ok(Problem { inner })
    }

    /// Problem described by a TOML run configuration.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let cfg = RunConfig::from_toml(text).map_err(value_err)?;
        Ok(Problem { inner: cfg.build_problem().map_err(value_err)? })
    }

    /// Copy with some model parameters replaced.
    #[pyo3(signature = (*, mu = None, g = None, beta = None, gamma = None, sigma = None, nu = None))]
    fn with_params(
        &self,
        mu: Option<f64>,
        g: Option<f64>,
        beta: Option<f64>,
        gamma: Option<f64>,
        sigma: Option<f64>,
        nu: Option<f64>,
    ) -> PyResult<Self> {
        let mut p = self.inner.params;
        p.mu = mu.unwrap_or(p.mu);
        p.g = g.unwrap_or(p.g);
        p.beta = beta.unwrap_or(p.beta);
        p.gamma = gamma.unwrap_or(p.gamma);
        p.sigma = sigma.unwrap_or(p.sigma);
        p.nu = nu.unwrap_or(p.nu);
        Ok(Problem { inner: self.inner.with_params(p).map_err(value_err)? })
    }

    #[getter]
    fn ndof(&self) -> usize {
        self.inner.space.ndof()
    }

    #[getter]
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = &self.inner.params;
        let d = PyDict::new(py);
        d.set_item("mu", p.mu)?;
        d.set_item("g", p.g)?;
        d.set_item("beta", p.beta)?;
        d.set_item("gamma", p.gamma)?;
        d.set_item("sigma", p.sigma)?;
        d.set_item("nu", p.nu)?;
        d.set_item("form", format!("{:?}", p.form).to_lowercase())?;
        Ok(d)
    }

    /// Mesh vertex coordinates.
    fn vertices(&self) -> Vec<[f64; 2]> {
        self.inner.space.mesh.vertices.clone()
    }

    fn triangles(&self) -> Vec<[usize; 3]> {
        self.inner.space.mesh.triangles.clone()
    }

    /// Solve with `ep`, `qp` or `ssn`. A QP solve with `nu = 0` uses `nu = sigma`.
    #[pyo3(signature = (method = "ep", tol = 1e-5, max_iter = 100))]
    fn solve(&self, py: Python<'_>, method: &str, tol: f64, max_iter: usize) -> PyResult<SolveResult> {
        let m = Method::parse(method).ok_or_else(|| value_err(format!("unknown method '{method}'")))?;
        let mut problem = self.inner.clone();
        if m == Method::Qp && problem.params.nu == 0.0 {
            problem.params.nu = problem.params.sigma;
        }
        let opts = SolverOptions { tol, max_iter, ..Default::default() };
        let report = py.detach(|| solvers::solve(&problem, m, &opts)).map_err(runtime_err)?;
        Ok(SolveResult { inner: report })
    }

    /// Regularized energy `J(u)`.
    fn energy(&self, u: Vec<f64>) -> PyResult<f64> {
        self.check_len(&u)?;
        Ok(self.inner.eval_j(&u))
    }

    fn gradient(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&u)?;
        Ok(self.inner.grad_j(&u))
    }

    /// `(‖Div u‖_L1, ‖Div u‖_L2)`.
    fn div_norms(&self, u: Vec<f64>) -> PyResult<(f64, f64)> {
        self.check_len(&u)?;
        Ok(model::div_norms(&self.inner.space, &u))
    }

    fn l2_norm(&self, u: Vec<f64>) -> PyResult<f64> {
        self.check_len(&u)?;
        Ok(model::l2_norm(&self.inner.space, &u))
    }

    fn h1_seminorm(&self, u: Vec<f64>) -> PyResult<f64> {
        self.check_len(&u)?;
        Ok(model::h1_seminorm(&self.inner.space, &u))
    }

    /// Vertex values of the zero-mean divergence multiplier at `u`.
    fn recover_multiplier(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&u)?;
        let l = analysis::recover_multiplier(&self.inner, &u).map_err(runtime_err)?;
        Ok(l.values)
    }

    /// Penalty threshold estimate from the multiplier at `u`.
    #[pyo3(signature = (u, area_exponent = -0.5))]
    fn sigma0_estimate(&self, u: Vec<f64>, area_exponent: f64) -> PyResult<f64> {
        self.check_len(&u)?;
        let l = analysis::recover_multiplier(&self.inner, &u).map_err(runtime_err)?;
        Ok(analysis::estimate_sigma0(&self.inner.space, &l, area_exponent))
    }

    /// `(L2, H1-seminorm)` distances to the exact channel profile.
    fn poiseuille_errors(&self, u: Vec<f64>) -> PyResult<(f64, f64)> {
        self.check_len(&u)?;
        Ok(analysis::poiseuille_errors(&self.inner.space, &u, self.inner.params.g))
    }
}

/// Exact channel-flow velocity for yield stress `g` at height `y`.
#[pyfunction]
fn poiseuille_exact(y: f64, g: f64) -> f64 {
    analysis::poiseuille_exact(y, g)
}

/// Huber regularization of `g |A|` as a function of `|A|`.
#[pyfunction]
fn huber_norm(norm: f64, g: f64, beta: f64) -> f64 {
    model::huber_norm(norm, g, beta)
}

#[pymodule]
fn pybingham(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<SolveResult>()?;
    m.add_function(wrap_pyfunction!(poiseuille_exact, m)?)?;
    m.add_function(wrap_pyfunction!(huber_norm, m)?)?;
    Ok(())
}
