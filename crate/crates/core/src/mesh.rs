//! Structured triangulations of rectangles and the P2 degree-of-freedom layout.
//!
//! Every grid cell is split along the same diagonal, from its lower-left to
//! its upper-right corner. Scalar P2 nodes are the mesh vertices followed by
//! the edge midpoints; vector dofs interleave the two components.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh argument: {0}")]
    InvalidArgument(String),
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Sides of the rectangle that contain `p` (within a relative tolerance).
    pub fn sides_of(&self, p: [f64; 2]) -> SideSet {
        let tx = BOUNDARY_TOL * (self.x1 - self.x0).abs().max(1.0);
        let ty = BOUNDARY_TOL * (self.y1 - self.y0).abs().max(1.0);
        let mut s = SideSet::NONE;
        if (p[1] - self.y0).abs() <= ty {
            s = s.with(Side::Bottom);
        }
        if (p[0] - self.x1).abs() <= tx {
            s = s.with(Side::Right);
        }
        if (p[1] - self.y1).abs() <= ty {
            s = s.with(Side::Top);
        }
        if (p[0] - self.x0).abs() <= tx {
            s = s.with(Side::Left);
        }
        s
    }

    pub fn on_boundary(&self, p: [f64; 2]) -> bool {
        !self.sides_of(p).is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    fn bit(self) -> u8 {
        match self {
            Side::Bottom => 1,
            Side::Right => 2,
            Side::Top => 4,
            Side::Left => 8,
        }
    }

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }
}

/// Small bit set of rectangle sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SideSet(u8);

impl SideSet {
    pub const NONE: SideSet = SideSet(0);
    pub const ALL: SideSet = SideSet(15);

    pub fn from_sides(sides: &[Side]) -> Self {
        sides.iter().fold(SideSet::NONE, |s, &side| s.with(side))
    }

    pub fn with(self, side: Side) -> Self {
        SideSet(self.0 | side.bit())
    }

    pub fn contains(self, side: Side) -> bool {
        self.0 & side.bit() != 0
    }

    pub fn intersects(self, other: SideSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Unique vertex pairs, lower index first.
    pub edges: Vec<[usize; 2]>,
    /// Edge indices of `(v0,v1)`, `(v1,v2)`, `(v2,v0)` for each triangle.
    pub triangle_edges: Vec<[usize; 3]>,
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Largest cell edge length.
    pub h: f64,
}

pub fn build_rect_mesh(nx: usize, ny: usize, rect: Rect) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidArgument(format!(
            "subdivision counts must be positive, got {nx}x{ny}"
        )));
    }
    let all_finite = [rect.x0, rect.x1, rect.y0, rect.y1].iter().all(|v| v.is_finite());
    if !all_finite || rect.x1 <= rect.x0 || rect.y1 <= rect.y0 {
        return Err(MeshError::InvalidArgument(format!("degenerate rectangle {rect:?}")));
    }
    let dx = (rect.x1 - rect.x0) / nx as f64;
    let dy = (rect.y1 - rect.y0) / ny as f64;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Pin the last row/column to the exact bounds.
        let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * dy };
        for i in 0..=nx {
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * dx };
            vertices.push([x, y]);
        }
    }

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for t in &triangles {
        let mut te = [0usize; 3];
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let idx = *edge_index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edges.len() - 1
            });
            te[k] = idx;
        }
        triangle_edges.push(te);
    }

    Ok(Mesh { vertices, triangles, edges, triangle_edges, domain: rect, nx, ny, h: dx.max(dy) })
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Number of triangles sharing each edge.
    pub fn edge_valence(&self) -> Vec<usize> {
        let mut count = vec![0; self.edges.len()];
        for te in &self.triangle_edges {
            for &e in te {
                count[e] += 1;
            }
        }
        count
    }
}

/// P2 scalar node layout plus vector dof numbering.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub scalar_dof_count: usize,
    pub vertex_count: usize,
    pub node_coords: Vec<[f64; 2]>,
    /// Sorted scalar node indices lying on the boundary.
    pub boundary_scalar_dofs: Vec<usize>,
    /// Sides each scalar node lies on.
    pub node_sides: Vec<SideSet>,
    /// Scalar nodes of each element: 3 vertices then midpoints of the
    /// edges `(v0,v1)`, `(v1,v2)`, `(v2,v0)`.
    pub element_nodes: Vec<[usize; 6]>,
}

pub fn build_p2_dofmap(mesh: &Mesh) -> DofMap {
    let nv = mesh.vertices.len();
    let mut node_coords = mesh.vertices.clone();
    for e in &mesh.edges {
        let (a, b) = (mesh.vertices[e[0]], mesh.vertices[e[1]]);
        node_coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    }
    let node_sides: Vec<SideSet> = node_coords.iter().map(|&p| mesh.domain.sides_of(p)).collect();
    let boundary_scalar_dofs =
        (0..node_coords.len()).filter(|&n| !node_sides[n].is_empty()).collect();
    let element_nodes = mesh
        .triangles
        .iter()
        .zip(&mesh.triangle_edges)
        .map(|(t, te)| [t[0], t[1], t[2], nv + te[0], nv + te[1], nv + te[2]])
        .collect();
    DofMap {
        scalar_dof_count: node_coords.len(),
        vertex_count: nv,
        node_coords,
        boundary_scalar_dofs,
        node_sides,
        element_nodes,
    }
}

impl DofMap {
    pub fn vector_dof_count(&self) -> usize {
        2 * self.scalar_dof_count
    }

    /// Global vector dof of scalar node `node`, component `comp`.
    #[inline]
    pub fn component_dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        !self.node_sides[node].is_empty()
    }

    /// Vector dofs (both components) of every node touching one of `sides`.
    pub fn dofs_on_sides(&self, sides: SideSet) -> Vec<usize> {
        let mut out = Vec::new();
        for (n, s) in self.node_sides.iter().enumerate() {
            if s.intersects(sides) {
                out.push(Self::component_dof(n, 0));
                out.push(Self::component_dof(n, 1));
            }
        }
        out
    }
}
