//! Config parsing, output files and exit codes of the `bingham` binary.

use std::path::Path;
use std::process::Command;

use bingham_ep::cli::{self, output::HISTORY_HEADER, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bingham"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const POISEUILLE: &str = r#"
[mesh]
nx = 8
[experiment]
preset = "poiseuille"
"#;

#[test]
fn solve_writes_history_report_and_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), POISEUILLE);
    let out = dir.path().join("out");
    let status = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let csv = std::fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(HISTORY_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 9);
    assert_eq!(row[0], "0");
    for field in &row[1..7] {
        let (mant, exp) = field.split_once('e').unwrap();
        assert_eq!(mant.trim_start_matches('-').len(), 8, "{field}");
        assert!(exp.starts_with('+') || exp.starts_with('-'));
    }

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "ep");
    assert_eq!(report["converged"], true);
    assert!(report["iterations"].as_u64().is_some());
    for key in ["k", "J", "J_sigma", "div_l1", "div_l2", "indicator", "alpha", "linear_iters", "time_s"] {
        assert!(!report["final"][key].is_null(), "missing final.{key}");
    }
    assert!(report["sigma0_estimate"].as_f64().unwrap() > 0.0);
    assert!(report["h1_error"].as_f64().unwrap() < 2e-2);
    assert_eq!(report["config"]["model"]["sigma"], 30.0);
    assert_eq!(report["config"]["mesh"]["ny"], 8);

    let vtk = std::fs::read_to_string(out.join("solution.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 2.0\n"));
    assert!(vtk.contains("POINTS 81 double"));
    assert!(vtk.contains("CELLS 128 512"));
    assert!(vtk.contains("VECTORS velocity double"));
    assert!(vtk.contains("SCALARS strain_norm double 1"));
    assert!(vtk.contains("SCALARS div double 1"));
}

#[test]
fn zero_field_vtk_has_zero_data() {
    let dir = tempfile::tempdir().unwrap();
    let space = bingham_ep::fem::FeSpace::new(
        bingham_ep::mesh::build_rect_mesh(2, 3, bingham_ep::mesh::Rect::UNIT).unwrap(),
        4,
    )
    .unwrap();
    let path = dir.path().join("z.vtk");
    cli::output::write_vtk(&path, &space, &vec![0.0; space.ndof()]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let data = text.split("POINT_DATA").nth(1).unwrap();
    for line in data.lines().skip(1) {
        if line.starts_with("VECTORS") || line.starts_with("SCALARS") || line.starts_with("LOOKUP") {
            continue;
        }
        assert!(line.split_whitespace().all(|t| t.parse::<f64>().unwrap() == 0.0), "{line}");
    }
    assert!(text.contains("POINTS 12 double"));
    assert!(text.contains("CELL_TYPES 12"));
    assert!(cli::output::write_vtk(Path::new("/nonexistent/dir/x.vtk"), &space, &vec![0.0; space.ndof()]).is_err());
}

#[test]
fn non_converged_run_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
        [mesh]
        nx = 4
        [solver]
        max_iter = 1
        [output]
        formats = ["json"]
        "#,
    );
    let out = dir.path().join("o");
    let status = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(out.join("report.json").exists());
    assert!(!out.join("history.csv").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[mesh]\nnx = 0\n");
    let status = bin().args(["solve", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["solve", "--config", "/nonexistent.toml"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["frobnicate"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin().args(["validate-poiseuille", "--nx", "4", "--sigma", "-1"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn compare_collects_all_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{POISEUILLE}\n[output]\nformats = [\"csv\"]\n"));
    let out = dir.path().join("cmp");
    let status = bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .args(["--methods", "ep,qp,ssn", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(cli::COMPARISON_HEADER));
    let methods: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods.into_iter().collect::<Vec<_>>(), ["ep", "qp", "ssn"]);
    for m in ["ep", "qp", "ssn"] {
        assert!(out.join(format!("{m}_history.csv")).exists());
    }
}

#[test]
fn gradcheck_passes_by_default_and_catches_corruption() {
    let out = bin().arg("gradcheck").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let first = String::from_utf8(out.stdout).unwrap();
    let again = String::from_utf8(bin().arg("gradcheck").output().unwrap().stdout).unwrap();
    assert_eq!(first, again, "seeded checks must be deterministic");

    let report = cli::cmd_gradcheck(&RunConfig::default()).unwrap();
    assert!(report.passed && report.worst_grad <= 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[gradcheck]\ncorrupt_residual = true\n");
    let status = bin().args(["gradcheck", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn validate_poiseuille_reports_errors() {
    let out = bin().args(["validate-poiseuille", "--nx", "16"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], true);
    assert!(v["h1_error"].as_f64().unwrap() <= 5e-3);
    assert!(v["multiplier_error"].as_f64().unwrap() <= 5e-2);
}

#[test]
fn custom_preset_uses_given_forcing_and_walls() {
    let cfg = RunConfig::from_toml(
        r#"
        [mesh]
        nx = 4
        [model]
        g = 0.0
        sigma = 10.0
        [experiment]
        preset = "custom"
        dirichlet = ["bottom", "top"]
        body_force = [1.0, 0.0]
        "#,
    )
    .unwrap();
    let p = cfg.build_problem().unwrap();
    let total: f64 = p.load.iter().step_by(2).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(p.load.iter().skip(1).step_by(2).all(|&x| x.abs() < 1e-15));
    let left_only: Vec<_> = p.dirichlet.iter().filter(|&&d| p.space.dofmap.node_coords[d / 2][1] == 0.5).collect();
    assert!(left_only.is_empty());
}
