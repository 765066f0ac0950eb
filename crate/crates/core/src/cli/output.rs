//! History CSV, JSON report and legacy VTK writers.

use std::io::{self, Write};
use std::path::Path;

use crate::fem::{frob_norm, sym_part, FeSpace};
use crate::solvers::IterationRecord;

pub const HISTORY_HEADER: &str = "k,J,J_sigma,div_l1,div_l2,indicator,alpha,linear_iters,time_s";

/// C-style `%.6e`: six mantissa digits, signed exponent of at least two digits.
pub fn fmt_e(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.6e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

pub fn history_row(r: &IterationRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.k,
        fmt_e(r.j_value),
        fmt_e(r.jsigma_value),
        fmt_e(r.div_l1),
        fmt_e(r.div_l2),
        fmt_e(r.indicator),
        fmt_e(r.alpha),
        r.linear_iters,
        fmt_e(r.time_s)
    )
}

pub fn write_history(path: &Path, history: &[IterationRecord]) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(f, "{}", history_row(r))?;
    }
    f.flush()
}

/// Element averages of `|E u|` and `div u`, then averaged onto vertices.
pub fn vertex_fields(space: &FeSpace, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nv = space.mesh.vertices.len();
    let mut strain = vec![0.0; nv];
    let mut div = vec![0.0; nv];
    let mut count = vec![0usize; nv];
    for (el, tri) in space.mesh.triangles.iter().enumerate() {
        let local = space.local_values(u, el);
        let (mut s, mut d, mut w) = (0.0, 0.0, 0.0);
        for q in space.qp(el) {
            let g = FeSpace::gradient(&local, q);
            s += q.weight * frob_norm(&sym_part(&g));
            d += q.weight * (g[0][0] + g[1][1]);
            w += q.weight;
        }
        for &v in tri {
            strain[v] += s / w;
            div[v] += d / w;
            count[v] += 1;
        }
    }
    for v in 0..nv {
        let c = count[v].max(1) as f64;
        strain[v] /= c;
        div[v] /= c;
    }
    (strain, div)
}

pub fn write_vtk(path: &Path, space: &FeSpace, u: &[f64]) -> io::Result<()> {
    let mesh = &space.mesh;
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 2.0")?;
    writeln!(f, "bingham velocity")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", mesh.vertices.len())?;
    for p in &mesh.vertices {
        writeln!(f, "{} {} 0", p[0], p[1])?;
    }
    let nt = mesh.triangles.len();
    writeln!(f, "CELLS {} {}", nt, 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(f, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(f, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(f, "5")?;
    }
    let (strain, div) = vertex_fields(space, u);
    writeln!(f, "POINT_DATA {}", mesh.vertices.len())?;
    // P2 vertex nodes share the vertex numbering.
    writeln!(f, "VECTORS velocity double")?;
    for v in 0..mesh.vertices.len() {
        writeln!(f, "{} {} 0", u[2 * v], u[2 * v + 1])?;
    }
    writeln!(f, "SCALARS strain_norm double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for s in &strain {
        writeln!(f, "{s}")?;
    }
    writeln!(f, "SCALARS div double 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for d in &div {
        writeln!(f, "{d}")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_e(1.0), "1.000000e+00");
        assert_eq!(fmt_e(-8.16543), "-8.165430e+00");
        assert_eq!(fmt_e(5.4e-5), "5.400000e-05");
        assert_eq!(fmt_e(0.0), "0.000000e+00");
        assert_eq!(fmt_e(1.5e123), "1.500000e+123");
    }
}
