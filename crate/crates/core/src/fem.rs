//! P2 basis, triangle quadrature, kinematics at quadrature points and
//! Dirichlet handling.
//!
//! [`FeSpace`] bundles a mesh, its P2 dof map and a quadrature rule, and
//! caches physical basis gradients at every quadrature point so the energy,
//! residual and matrix assemblies are simple loops.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linsolve::SparseSym;
use crate::mesh::{build_p2_dofmap, DofMap, Mesh, Side, SideSet};

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Error, PartialEq)]
pub enum FemError {
    #[error("unsupported quadrature degree {0} (supported: 1..=6)")]
    UnsupportedDegree(usize),
    #[error("field has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Which tensor enters the energy: the symmetric gradient or the full gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[default]
    Sym,
    Grad,
}

#[inline]
pub fn frob_dot(a: &Mat2, b: &Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

#[inline]
pub fn frob_norm(a: &Mat2) -> f64 {
    frob_dot(a, a).sqrt()
}

#[inline]
pub fn sym_part(g: &Mat2) -> Mat2 {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub degree: usize,
    /// Reference coordinates `(xi, eta)` on the triangle `(0,0), (1,0), (0,1)`.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

struct RuleBuilder {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl RuleBuilder {
    fn new() -> Self {
        RuleBuilder { points: Vec::new(), weights: Vec::new() }
    }

    // Barycentric (l0, l1, l2) with weight normalized to area 1.
    fn push(&mut self, l: [f64; 3], w: f64) {
        self.points.push([l[1], l[2]]);
        self.weights.push(0.5 * w);
    }

    fn perm3(&mut self, a: f64, b: f64, w: f64) {
        self.push([a, b, b], w);
        self.push([b, a, b], w);
        self.push([b, b, a], w);
    }

    fn perm6(&mut self, a: f64, b: f64, c: f64, w: f64) {
        for l in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.push(l, w);
        }
    }
}

/// Symmetric Gauss rule exact for polynomials of total degree `degree`.
/// Degree 3 returns the degree-4 rule, which has positive weights.
pub fn quad_rule(degree: usize) -> Result<QuadRule, FemError> {
    let mut r = RuleBuilder::new();
    let declared = match degree {
        1 => {
            r.push([1.0 / 3.0; 3], 1.0);
            1
        }
        2 => {
            r.perm3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0);
            2
        }
        3 | 4 => {
            r.perm3(0.108103018168070, 0.445948490915965, 0.223381589678011);
            r.perm3(0.816847572980459, 0.091576213509771, 0.109951743655322);
            4
        }
        5 => {
            r.push([1.0 / 3.0; 3], 0.225);
            r.perm3(0.059715871789770, 0.470142064105115, 0.132394152788506);
            r.perm3(0.797426985353087, 0.101286507323456, 0.125939180544827);
            5
        }
        6 => {
            r.perm3(0.501426509658179, 0.249286745170910, 0.116786275726379);
            r.perm3(0.873821971016996, 0.063089014491502, 0.050844906370207);
            r.perm6(0.053145049844817, 0.310352451033784, 0.636502499121399, 0.082851075618374);
            6
        }
        d => return Err(FemError::UnsupportedDegree(d)),
    };
    Ok(QuadRule { degree: declared, points: r.points, weights: r.weights })
}

/// Values and reference gradients of the six P2 basis functions.
/// Nodes: vertices 0, 1, 2 then midpoints of edges 01, 12, 20.
pub fn p2_basis(p: [f64; 2]) -> ([f64; 6], [[f64; 2]; 6]) {
    let (l1, l2) = (p[0], p[1]);
    let l0 = 1.0 - l1 - l2;
    let g0 = [-1.0, -1.0];
    let g1 = [1.0, 0.0];
    let g2 = [0.0, 1.0];
    let vals = [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ];
    let sc = |s: f64, g: [f64; 2]| [s * g[0], s * g[1]];
    let add = |a: [f64; 2], b: [f64; 2]| [a[0] + b[0], a[1] + b[1]];
    let grads = [
        sc(4.0 * l0 - 1.0, g0),
        sc(4.0 * l1 - 1.0, g1),
        sc(4.0 * l2 - 1.0, g2),
        add(sc(4.0 * l0, g1), sc(4.0 * l1, g0)),
        add(sc(4.0 * l1, g2), sc(4.0 * l2, g1)),
        add(sc(4.0 * l2, g0), sc(4.0 * l0, g2)),
    ];
    (vals, grads)
}

/// Cached data at one quadrature point.
#[derive(Debug, Clone)]
pub struct QpData {
    /// Physical weight `|det J| * w_ref`.
    pub weight: f64,
    pub point: [f64; 2],
    /// Barycentric coordinates, i.e. the P1 basis values at the element vertices.
    pub bary: [f64; 3],
    pub values: [f64; 6],
    /// Physical gradients of the six scalar basis functions.
    pub grads: [[f64; 2]; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSample {
    /// Symmetric gradient (form sym) or full gradient (form grad).
    pub tensor: Mat2,
    pub divergence: f64,
    pub weight: f64,
}

/// A boundary edge with its P2 scalar nodes `[v0, midpoint, v1]`.
#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub side: Side,
    pub nodes: [usize; 3],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub rule: QuadRule,
    qp: Vec<QpData>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pattern: SparseSym,
    /// For each element, storage indices of its 12x12 local matrix.
    scatter: Vec<[usize; 144]>,
}

impl FeSpace {
    pub fn new(mesh: Mesh, quad_degree: usize) -> Result<Self, FemError> {
        let rule = quad_rule(quad_degree)?;
        let dofmap = build_p2_dofmap(&mesh);
        let ref_basis: Vec<_> = rule.points.iter().map(|&p| p2_basis(p)).collect();

        let mut qp = Vec::with_capacity(mesh.triangles.len() * rule.len());
        for t in &mesh.triangles {
            let [a, b, c] = t.map(|v| mesh.vertices[v]);
            let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            // Rows of J^{-T}.
            let jit = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
            for (q, (vals, rgrads)) in ref_basis.iter().enumerate() {
                let p = rule.points[q];
                let mut grads = [[0.0; 2]; 6];
                for (g, r) in grads.iter_mut().zip(rgrads) {
                    *g = [jit[0][0] * r[0] + jit[0][1] * r[1], jit[1][0] * r[0] + jit[1][1] * r[1]];
                }
                qp.push(QpData {
                    weight: det.abs() * rule.weights[q],
                    point: [a[0] + j[0][0] * p[0] + j[0][1] * p[1], a[1] + j[1][0] * p[0] + j[1][1] * p[1]],
                    bary: [1.0 - p[0] - p[1], p[0], p[1]],
                    values: *vals,
                    grads,
                });
            }
        }

        let valence = mesh.edge_valence();
        let nv = mesh.vertices.len();
        let mut boundary_edges = Vec::new();
        for (e, &[v0, v1]) in mesh.edges.iter().enumerate() {
            if valence[e] != 1 {
                continue;
            }
            let common_side = |s: SideSet| Side::ALL.into_iter().find(|&x| s.contains(x));
            let shared = Side::ALL
                .into_iter()
                .find(|&x| dofmap.node_sides[v0].contains(x) && dofmap.node_sides[v1].contains(x))
                .or_else(|| common_side(dofmap.node_sides[nv + e]))
                .expect("boundary edge lies on a side");
            let (p0, p1) = (mesh.vertices[v0], mesh.vertices[v1]);
            let length = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
            boundary_edges.push(BoundaryEdge { side: shared, nodes: [v0, nv + e, v1], length });
        }

        let ndof = dofmap.vector_dof_count();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); ndof];
        for en in &dofmap.element_nodes {
            let dofs = local_dofs(en);
            for &i in &dofs {
                rows[i].extend_from_slice(&dofs);
            }
        }
        let pattern = SparseSym::from_pattern(rows);
        let scatter = dofmap
            .element_nodes
            .iter()
            .map(|en| {
                let dofs = local_dofs(en);
                let mut s = [0usize; 144];
                for a in 0..12 {
                    for b in 0..12 {
                        s[12 * a + b] = pattern.find(dofs[a], dofs[b]).expect("pattern entry");
                    }
                }
                s
            })
            .collect();

        Ok(FeSpace { mesh, dofmap, rule, qp, boundary_edges, pattern, scatter })
    }

    pub fn ndof(&self) -> usize {
        self.dofmap.vector_dof_count()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.triangles.len()
    }

    pub fn n_qp(&self) -> usize {
        self.rule.len()
    }

    pub fn qp(&self, element: usize) -> &[QpData] {
        let nq = self.rule.len();
        &self.qp[element * nq..(element + 1) * nq]
    }

    /// Global vector dofs of an element, ordered `2 * local_node + comp`.
    pub fn element_dofs(&self, element: usize) -> [usize; 12] {
        local_dofs(&self.dofmap.element_nodes[element])
    }

    /// Zero matrix with the P2 vector sparsity pattern.
    pub fn zero_matrix(&self) -> SparseSym {
        self.pattern.clone()
    }

    pub fn scatter_element(&self, m: &mut SparseSym, element: usize, local: &[f64; 144]) {
        let idx = &self.scatter[element];
        let vals = m.values_mut();
        for (k, &v) in local.iter().enumerate() {
            vals[idx[k]] += v;
        }
    }

    pub fn check_len(&self, u: &[f64]) -> Result<(), FemError> {
        if u.len() == self.ndof() {
            Ok(())
        } else {
            Err(FemError::LengthMismatch { expected: self.ndof(), got: u.len() })
        }
    }

    /// Element-local coefficients of `u`, indexed `[node][comp]`.
    #[inline]
    pub fn local_values(&self, u: &[f64], element: usize) -> [[f64; 2]; 6] {
        let en = &self.dofmap.element_nodes[element];
        let mut out = [[0.0; 2]; 6];
        for (o, &n) in out.iter_mut().zip(en) {
            *o = [u[2 * n], u[2 * n + 1]];
        }
        out
    }

    /// Velocity gradient `G[c][j] = d u_c / d x_j` at a quadrature point.
    #[inline]
    pub fn gradient(local: &[[f64; 2]; 6], q: &QpData) -> Mat2 {
        let mut g = [[0.0; 2]; 2];
        for (uc, grad) in local.iter().zip(&q.grads) {
            for c in 0..2 {
                g[c][0] += uc[c] * grad[0];
                g[c][1] += uc[c] * grad[1];
            }
        }
        g
    }

    #[inline]
    pub fn value(local: &[[f64; 2]; 6], q: &QpData) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (uc, phi) in local.iter().zip(&q.values) {
            v[0] += uc[0] * phi;
            v[1] += uc[1] * phi;
        }
        v
    }

    pub fn eval_kinematics(&self, u: &[f64], element: usize, form: Form) -> Vec<KinematicSample> {
        let local = self.local_values(u, element);
        self.qp(element)
            .iter()
            .map(|q| {
                let g = Self::gradient(&local, q);
                let tensor = match form {
                    Form::Grad => g,
                    Form::Sym => sym_part(&g),
                };
                KinematicSample { tensor, divergence: g[0][0] + g[1][1], weight: q.weight }
            })
            .collect()
    }

    /// Nodal interpolant of a vector function.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; self.ndof()];
        for (n, &p) in self.dofmap.node_coords.iter().enumerate() {
            let v = f(p);
            u[2 * n] = v[0];
            u[2 * n + 1] = v[1];
        }
        u
    }

    /// Integral of a scalar function of the point, the field value and its gradient.
    pub fn integrate(&self, u: &[f64], f: impl Fn([f64; 2], [f64; 2], &Mat2) -> f64) -> f64 {
        let mut total = 0.0;
        for e in 0..self.n_elements() {
            let local = self.local_values(u, e);
            for q in self.qp(e) {
                total += q.weight * f(q.point, Self::value(&local, q), &Self::gradient(&local, q));
            }
        }
        total
    }
}

fn local_dofs(en: &[usize; 6]) -> [usize; 12] {
    let mut d = [0usize; 12];
    for (a, &n) in en.iter().enumerate() {
        d[2 * a] = DofMap::component_dof(n, 0);
        d[2 * a + 1] = DofMap::component_dof(n, 1);
    }
    d
}

/// Field equal to `g` at boundary nodes and zero at interior nodes.
pub fn lift_boundary(dofmap: &DofMap, g: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mut u = vec![0.0; dofmap.vector_dof_count()];
    for &n in &dofmap.boundary_scalar_dofs {
        let v = g(dofmap.node_coords[n]);
        u[2 * n] = v[0];
        u[2 * n + 1] = v[1];
    }
    u
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: SparseSym,
    pub rhs: Vec<f64>,
}

/// Symmetric elimination of constrained dofs: their rows and columns are
/// zeroed, the diagonal set to one and the right-hand side adjusted so the
/// solution takes `values` there.
pub fn apply_dirichlet(
    mut matrix: SparseSym,
    mut rhs: Vec<f64>,
    constrained: &[usize],
    values: &[f64],
) -> AssembledSystem {
    apply_dirichlet_in_place(&mut matrix, &mut rhs, constrained, values);
    AssembledSystem { matrix, rhs }
}

/// In-place form of [`apply_dirichlet`]; `values` is indexed like `constrained`.
pub fn apply_dirichlet_in_place(
    matrix: &mut SparseSym,
    rhs: &mut [f64],
    constrained: &[usize],
    values: &[f64],
) {
    let n = matrix.dim();
    let mut is_c = vec![false; n];
    let mut val = vec![0.0; n];
    for (&d, &v) in constrained.iter().zip(values) {
        is_c[d] = true;
        val[d] = v;
    }
    // Move known values to the right-hand side, then clear.
    let mut shift = vec![0.0; n];
    for i in 0..n {
        if is_c[i] {
            continue;
        }
        let (cols, vals) = matrix.row(i);
        shift[i] = cols.iter().zip(vals).filter(|(j, _)| is_c[**j]).map(|(&j, &a)| a * val[j]).sum();
    }
    let mut entries: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let (cols, _) = matrix.row(i);
        for &j in cols {
            if is_c[i] || is_c[j] {
                entries.push((i, j));
            }
        }
    }
    for (i, j) in entries {
        let k = matrix.find(i, j).unwrap();
        matrix.values_mut()[k] = if i == j { 1.0 } else { 0.0 };
    }
    for i in 0..n {
        if is_c[i] {
            if matrix.find(i, i).is_none() {
                panic!("constrained dof {i} has no diagonal entry in the pattern");
            }
            rhs[i] = val[i];
        } else {
            rhs[i] -= shift[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, Rect};

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for degree in 1..=6 {
            let r = quad_rule(degree).unwrap();
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 0.5).abs() < 1e-14, "degree {degree}");
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let got: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!((got - exact).abs() < 1e-12, "degree {degree} monomial x^{a} y^{b}");
                }
            }
        }
        assert!(quad_rule(0).is_err() && quad_rule(7).is_err());
        let r4 = quad_rule(4).unwrap();
        let x2y2: f64 = r4.points.iter().zip(&r4.weights).map(|(p, w)| w * p[0] * p[0] * p[1] * p[1]).sum();
        assert!((x2y2 - 1.0 / 180.0).abs() < 1e-14);
    }

    #[test]
    fn basis_is_lagrange() {
        let nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
        for (j, &p) in nodes.iter().enumerate() {
            let (v, _) = p2_basis(p);
            for (i, vi) in v.iter().enumerate() {
                assert_eq!(*vi, if i == j { 1.0 } else { 0.0 });
            }
        }
        let (v, g) = p2_basis([0.2, 0.3]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let gs = g.iter().fold([0.0, 0.0], |s, x| [s[0] + x[0], s[1] + x[1]]);
        assert!(gs[0].abs() < 1e-14 && gs[1].abs() < 1e-14);
    }

    fn space(n: usize) -> FeSpace {
        FeSpace::new(build_rect_mesh(n, n, Rect::UNIT).unwrap(), 4).unwrap()
    }

    #[test]
    fn kinematics_of_simple_fields() {
        let s = space(3);
        let u = s.interpolate(|p| [p[0], 0.0]);
        for e in 0..s.n_elements() {
            for k in s.eval_kinematics(&u, e, Form::Sym) {
                assert!((k.tensor[0][0] - 1.0).abs() < 1e-13 && k.tensor[0][1].abs() < 1e-13);
                assert!((k.divergence - 1.0).abs() < 1e-13);
            }
        }
        let rot = s.interpolate(|p| [p[1], -p[0]]);
        for e in 0..s.n_elements() {
            for k in s.eval_kinematics(&rot, e, Form::Sym) {
                assert!(frob_norm(&k.tensor) < 1e-13 && k.divergence.abs() < 1e-13);
            }
        }
        let quad = s.interpolate(|p| [p[0] * p[0], 0.0]);
        for e in 0..s.n_elements() {
            for (k, q) in s.eval_kinematics(&quad, e, Form::Grad).iter().zip(s.qp(e)) {
                assert!((k.tensor[0][0] - 2.0 * q.point[0]).abs() < 1e-12);
                assert!(k.tensor[0][1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dirichlet_elimination() {
        let s = space(2);
        let n = s.ndof();
        let mut a = s.zero_matrix();
        for v in a.values_mut() {
            *v = 0.25;
        }
        let all: Vec<usize> = (0..n).collect();
        let sys = apply_dirichlet(a.clone(), vec![1.0; n], &all, &vec![0.0; n]);
        assert_eq!(sys.matrix.to_dense(), SparseSym::identity(n).to_dense());
        assert!(sys.rhs.iter().all(|&r| r == 0.0));

        let sys = apply_dirichlet(a.clone(), vec![1.0; n], &[], &[]);
        assert_eq!(sys.matrix, a);

        let sys = apply_dirichlet(a, vec![1.0; n], &[0, 5], &[2.0, -1.0]);
        assert_eq!(sys.matrix.asymmetry(), 0.0);
        assert_eq!((sys.rhs[0], sys.rhs[5]), (2.0, -1.0));
    }

    #[test]
    fn lid_lift_touches_only_top_nodes() {
        let s = space(4);
        let u = lift_boundary(&s.dofmap, |p| if p[1] == 1.0 { [1.0, 0.0] } else { [0.0, 0.0] });
        for (n, p) in s.dofmap.node_coords.iter().enumerate() {
            let expect = if p[1] == 1.0 { 1.0 } else { 0.0 };
            assert_eq!(u[2 * n], expect);
            assert_eq!(u[2 * n + 1], 0.0);
        }
    }

    #[test]
    fn boundary_edges_cover_perimeter() {
        let s = FeSpace::new(build_rect_mesh(3, 5, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap(), 2).unwrap();
        let per: f64 = s.boundary_edges.iter().map(|e| e.length).sum();
        assert!((per - 6.0).abs() < 1e-12);
        assert_eq!(s.boundary_edges.len(), 16);
    }
}
