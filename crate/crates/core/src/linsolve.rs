//! Sparse symmetric storage and solvers for the descent systems.
//!
//! [`solve_spd`] is a Jacobi-preconditioned conjugate gradient. The penalty
//! systems built with a large `gamma` are far too ill-conditioned for it, so
//! the outer solvers default to [`EnvelopeCholesky`], a profile Cholesky
//! factorization on a reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinsolveError {
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (curvature {curvature:e} at iteration {iteration})")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("Cholesky pivot {pivot:e} at row {row} is not positive")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
}

/// Symmetric matrix in CSR form with both triangles stored and sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Zero matrix with the given (structurally symmetric) pattern.
    /// Each row's column list is sorted and deduplicated here.
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        SparseSym { n, row_ptr, col_idx, values }
    }

    /// Sums duplicate entries. Only the given entries are stored, so callers
    /// supply both `(i, j)` and `(j, i)`.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            rows[i].push(j);
        }
        let mut m = Self::from_pattern(rows);
        for &(i, j, v) in triplets {
            let k = m.find(i, j).expect("entry in pattern");
            m.values[k] += v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_pattern((0..n).map(|i| vec![i]).collect());
        m.values.fill(1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Storage index of entry `(i, j)` if it is in the pattern.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        self.col_idx[lo..self.row_ptr[i + 1]].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `x . A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    /// Adds `s * other`; `other` must share this matrix's pattern.
    pub fn add_scaled(&mut self, s: f64, other: &SparseSym) {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense copy, for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] += v;
            }
        }
        d
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for `A x = b`.
pub fn solve_spd(
    a: &SparseSym,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome, LinsolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(LinsolveError::DimensionMismatch { matrix: n, vector: b.len() });
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, rel_residual: 0.0 });
    }
    let diag = a.diagonal();
    if let Some(&d) = diag.iter().find(|d| !(**d > 0.0)) {
        return Err(LinsolveError::Indefinite { iteration: 0, curvature: d });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(LinsolveError::Indefinite { iteration: it, curvature });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= rel_tol * bnorm {
            // Confirm against the true residual before returning.
            let ax = a.matvec(&x);
            let true_res = norm2(&b.iter().zip(&ax).map(|(b, y)| b - y).collect::<Vec<_>>()) / bnorm;
            if true_res <= rel_tol {
                return Ok(CgOutcome { x, iterations: it, rel_residual: true_res });
            }
            r = b.iter().zip(&ax).map(|(b, y)| b - y).collect();
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinsolveError::NotConverged { iterations: max_iter, residual: norm2(&r) / bnorm })
}

/// Reverse Cuthill-McKee ordering: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseSym) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    let bfs_levels = |start: usize| -> (Vec<usize>, usize) {
        // Returns the last level and eccentricity of `start`.
        let mut level = vec![usize::MAX; n];
        level[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = vec![start];
        let mut depth = 0;
        while let Some(v) = q.pop_front() {
            for &w in a.row(v).0 {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    if level[w] > depth {
                        depth = level[w];
                        last.clear();
                    }
                    if level[w] == depth {
                        last.push(w);
                    }
                    q.push_back(w);
                }
            }
        }
        (last, depth)
    };

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start node.
        let mut start = seed;
        let (mut last, mut ecc) = bfs_levels(start);
        loop {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (l2, e2) = bfs_levels(cand);
            if e2 > ecc {
                start = cand;
                last = l2;
                ecc = e2;
            } else {
                break;
            }
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).0.iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (profile) Cholesky factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    /// First stored column of each permuted row.
    first: Vec<usize>,
    /// Start of each row in `data`; row `i` holds columns `first[i]..=i`.
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseSym) -> Result<Self, LinsolveError> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &SparseSym, perm: Vec<usize>) -> Result<Self, LinsolveError> {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &j in a.row(old).0 {
                first[new] = first[new].min(inv[j]);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (new, &old) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let c = inv[j];
                if c <= new {
                    data[start[new] + c - first[new]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let len = j - k0;
                let ri = &data[si + k0 - fi..si + k0 - fi + len];
                let rj = &data[sj + k0 - fj..sj + k0 - fj + len];
                let s = dot(ri, rj);
                let ljj = data[sj + j - fj];
                let idx = si + j - fi;
                data[idx] = (data[idx] - s) / ljj;
            }
            let row = &data[si..si + i - fi];
            let d = data[si + i - fi] - dot(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(LinsolveError::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            data[si + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { perm, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let s = dot(&self.data[si..si + i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / self.data[si + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            y[i] /= self.data[si + i - fi];
            let xi = y[i];
            for (k, l) in (fi..i).zip(&self.data[si..si + i - fi]) {
                y[k] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Linear solver used inside the nonlinear iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LinearSolver {
    /// Envelope Cholesky with one step of iterative refinement.
    Cholesky,
    /// Jacobi-preconditioned conjugate gradient.
    Cg { rel_tol: f64, max_iter: Option<usize> },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Cholesky
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    /// CG iterations, or the number of triangular solve passes for Cholesky.
    pub iterations: usize,
}

impl LinearSolver {
    pub fn solve(&self, a: &SparseSym, b: &[f64]) -> Result<LinearSolution, LinsolveError> {
        if b.len() != a.dim() {
            return Err(LinsolveError::DimensionMismatch { matrix: a.dim(), vector: b.len() });
        }
        match *self {
            LinearSolver::Cholesky => {
                let f = EnvelopeCholesky::factor(a)?;
                let mut x = f.solve(b);
                let ax = a.matvec(&x);
                let r: Vec<f64> = b.iter().zip(&ax).map(|(b, y)| b - y).collect();
                let dx = f.solve(&r);
                for (xi, d) in x.iter_mut().zip(&dx) {
                    *xi += d;
                }
                Ok(LinearSolution { x, iterations: 2 })
            }
            LinearSolver::Cg { rel_tol, max_iter } => {
                let out = solve_spd(a, b, rel_tol, max_iter.unwrap_or(10 * a.dim()))?;
                Ok(LinearSolution { x: out.x, iterations: out.iterations })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseSym {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseSym::from_triplets(n, &t)
    }

    #[test]
    fn identity_in_one_iteration() {
        let a = SparseSym::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 4.0];
        let out = solve_spd(&a, &b, 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b.to_vec());
    }

    #[test]
    fn zero_rhs() {
        let out = solve_spd(&laplace_1d(4), &[0.0; 4], 1e-10, 10).unwrap();
        assert_eq!(out.x, vec![0.0; 4]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn detects_indefinite_and_nonconvergence() {
        let a = SparseSym::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0), (1, 0, 2.0)]);
        assert!(matches!(solve_spd(&a, &[1.0, -1.0], 1e-10, 10), Err(LinsolveError::Indefinite { .. })));
        assert!(matches!(
            EnvelopeCholesky::factor(&a),
            Err(LinsolveError::NotPositiveDefinite { .. })
        ));
        let l = laplace_1d(200);
        let b = vec![1.0; 200];
        assert!(matches!(solve_spd(&l, &b, 1e-12, 3), Err(LinsolveError::NotConverged { .. })));
    }

    #[test]
    fn cholesky_matches_cg_on_laplacian() {
        let a = laplace_1d(60);
        let b: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let x1 = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        let x2 = solve_spd(&a, &b, 1e-13, 1000).unwrap().x;
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplace_1d(17);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }
}
