//! TOML run configuration and its resolution into a [`Problem`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, Lift, PoiseuilleDrive, Setup};
use crate::fem::Form;
use crate::linsolve::LinearSolver;
use crate::mesh::{Rect, Side, SideSet};
use crate::model::{Forcing, ModelParams};
use crate::solvers::{LineSearchConfig, Method, Problem, SolverOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub nx: usize,
    /// Defaults to `nx`.
    pub ny: Option<usize>,
    /// `[x0, x1, y0, y1]`
    pub rect: [f64; 4],
    pub quad_degree: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection { nx: 32, ny: None, rect: [0.0, 1.0, 0.0, 1.0], quad_degree: 4 }
    }
}

/// Overrides of the preset's model parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mu: Option<f64>,
    pub g: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
    pub nu: Option<f64>,
    /// `sym` (coefficient mu on the symmetric gradient) or `grad`
    /// (coefficient mu/2 on the full gradient).
    pub form: Option<Form>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    #[default]
    Cholesky,
    Cg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    pub rank_one_fallback: bool,
    pub ssn_damping: bool,
    pub linear: LinearKind,
    pub cg_rel_tol: f64,
    pub cg_max_iter: Option<usize>,
    pub line_search: LineSearchConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            method: Method::Ep,
            tol: o.tol,
            max_iter: o.max_iter,
            rank_one_fallback: o.rank_one_fallback,
            ssn_damping: o.ssn_damping,
            linear: LinearKind::Cholesky,
            cg_rel_tol: 1e-10,
            cg_max_iter: None,
            line_search: o.line_search,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            line_search: self.line_search,
            linear: match self.linear {
                LinearKind::Cholesky => LinearSolver::Cholesky,
                LinearKind::Cg => LinearSolver::Cg { rel_tol: self.cg_rel_tol, max_iter: self.cg_max_iter },
            },
            rank_one_fallback: self.rank_one_fallback,
            ssn_damping: self.ssn_damping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Rotational,
    Poiseuille,
    Lid2d,
    Custom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionSpec {
    pub side: Side,
    pub value: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub preset: Preset,
    /// Poiseuille only.
    pub drive: PoiseuilleDrive,
    /// Custom only: constant body force.
    pub body_force: [f64; 2],
    /// Custom only.
    pub tractions: Vec<TractionSpec>,
    /// Custom only: sides with no-slip (or lifted) velocity.
    pub dirichlet: Vec<Side>,
    /// Custom only.
    pub lift: Option<Lift>,
    /// Exponent of `|Ω|` in the penalty-threshold estimate.
    pub sigma0_area_exponent: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            preset: Preset::Rotational,
            drive: PoiseuilleDrive::PressureDrop,
            body_force: [0.0, 0.0],
            tractions: Vec::new(),
            dirichlet: Side::ALL.to_vec(),
            lift: None,
            sigma0_area_exponent: -0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Vtk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json, Format::Vtk] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub nx: usize,
    pub seeds: Vec<u64>,
    pub grad_tol: f64,
    pub hess_tol: f64,
    /// Entries of the random states are drawn from `[-amplitude, amplitude]`.
    pub amplitude: f64,
    /// Test hook: perturb the assembled residual to exercise the failure path.
    pub corrupt_residual: bool,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection { nx: 8, seeds: vec![1, 2, 3, 4, 5], grad_tol: 1e-6, hess_tol: 1e-4, amplitude: 1e-2, corrupt_residual: false }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mesh.nx == 0 || self.mesh.ny == Some(0) {
            return Err(ConfigError::Invalid("mesh subdivisions must be positive".into()));
        }
        if !(1..=6).contains(&self.mesh.quad_degree) {
            return Err(ConfigError::Invalid(format!("quad_degree {} not in 1..=6", self.mesh.quad_degree)));
        }
        self.params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.solver.line_search.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.solver.tol > 0.0) {
            return Err(ConfigError::Invalid("solver.tol must be > 0".into()));
        }
        let p = self.params();
        match self.solver.method {
            Method::Ep if !(p.sigma > 0.0) => Err(ConfigError::Invalid("method ep needs sigma > 0".into())),
            Method::Qp if !(p.nu > 0.0) => Err(ConfigError::Invalid("method qp needs nu > 0".into())),
            Method::Ssn if !(p.sigma > 0.0) => Err(ConfigError::Invalid("method ssn needs sigma > 0".into())),
            _ => Ok(()),
        }
    }

    fn preset_setup(&self) -> Setup {
        let n = self.mesh.nx;
        let mut s = match self.experiment.preset {
            Preset::Rotational => analysis::rotational_setup(n),
            Preset::Poiseuille => analysis::poiseuille_setup(n, self.experiment.drive),
            Preset::Lid2d => analysis::lid_setup(n),
            Preset::Custom => {
                let e = &self.experiment;
                let mut forcing = if e.body_force == [0.0, 0.0] { Forcing::zero() } else { Forcing::constant(e.body_force) };
                for t in &e.tractions {
                    forcing = forcing.with_traction(t.side, t.value);
                }
                Setup {
                    nx: n,
                    ny: n,
                    rect: Rect::UNIT,
                    params: ModelParams::default(),
                    forcing,
                    dirichlet: SideSet::from_sides(&e.dirichlet),
                    lift: e.lift,
                }
            }
        };
        s.ny = self.mesh.ny.unwrap_or(n);
        let [x0, x1, y0, y1] = self.mesh.rect;
        s.rect = Rect::new(x0, x1, y0, y1);
        s.params = self.apply_overrides(s.params);
        s
    }

    fn apply_overrides(&self, mut p: ModelParams) -> ModelParams {
        let m = &self.model;
        p.mu = m.mu.unwrap_or(p.mu);
        p.g = m.g.unwrap_or(p.g);
        p.beta = m.beta.unwrap_or(p.beta);
        p.gamma = m.gamma.unwrap_or(p.gamma);
        p.sigma = m.sigma.unwrap_or(p.sigma);
        p.nu = m.nu.unwrap_or(p.nu);
        p.form = m.form.unwrap_or(p.form);
        if self.solver.method == Method::Qp && m.nu.is_none() && p.nu == 0.0 {
            // A QP run without an explicit nu uses the exact-penalty weight.
            p.nu = p.sigma;
        }
        p
    }

    /// Model parameters after applying overrides to the preset.
    pub fn params(&self) -> ModelParams {
        self.preset_setup().params
    }

    pub fn setup(&self) -> Setup {
        self.preset_setup()
    }

    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        self.preset_setup().build(self.mesh.quad_degree).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Fully resolved configuration for reports.
    pub fn resolved(&self) -> serde_json::Value {
        let mut full = self.clone();
        let p = self.params();
        full.model = ModelSection {
            mu: Some(p.mu),
            g: Some(p.g),
            beta: Some(p.beta),
            gamma: Some(p.gamma),
            sigma: Some(p.sigma),
            nu: Some(p.nu),
            form: Some(p.form),
        };
        full.mesh.ny = Some(self.mesh.ny.unwrap_or(self.mesh.nx));
        serde_json::to_value(full).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::from_toml(
            r#"
            [mesh]
            nx = 4
            [model]
            sigma = 5000.0
            [experiment]
            preset = "poiseuille"
            "#,
        )
        .unwrap();
        let p = cfg.params();
        assert_eq!(p.sigma, 5000.0);
        assert_eq!(p.g, 0.3);
        assert_eq!(p.form, Form::Grad);
        assert_eq!(cfg.setup().ny, 4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("[mesh]\nnx = 4\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[model]\nmu = -1.0\n").is_err());
        assert!(RunConfig::from_toml("[solver]\nmethod = \"newton\"\n").is_err());
    }
}
