use serde::{Deserialize, Serialize};

use super::stl::StlDocument;
use super::{triangle_area, GeometryError, Vec2, Vec3};
use crate::MACHINE_SHEET_LIMIT_MM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexState {
    Free,
    ClampedEdge,
    AdheredToMold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Index of an axial grid edge. Edges along x come first, row by row,
/// followed by the edges along y.
pub type EdgeId = usize;

/// Edge joining two vertices of an `nx` by `ny` grid, if they are adjacent.
pub fn grid_edge_between(nx: usize, ny: usize, a: usize, b: usize) -> Option<EdgeId> {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi >= nx * ny {
        return None;
    }
    let (i, j) = (lo % nx, lo / nx);
    if hi == lo + 1 && i + 1 < nx {
        Some(j * (nx - 1) + i)
    } else if hi == lo + nx && j + 1 < ny {
        Some((nx - 1) * ny + lo)
    } else {
        None
    }
}

/// Regular quad grid holding both the flat (rest) and formed positions.
///
/// Vertex `(i, j)` has index `j * nx + i`; `i` runs along x. Faces and edges
/// are implicit in the indexing, so vertex indices are the correspondence
/// between the printed sheet and the formed surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetMesh {
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    pub rest_positions: Vec<Vec2>,
    pub positions: Vec<Vec3>,
    pub vertex_state: Vec<VertexState>,
}

/// Builds an `nx` by `ny` vertex grid centered on the origin, lifted to the
/// clamp plane, with every boundary vertex clamped.
pub fn build_sheet(
    nx: usize,
    ny: usize,
    width_mm: f64,
    height_mm: f64,
    clamp_height_mm: f64,
) -> Result<SheetMesh, GeometryError> {
    if nx < 2 || ny < 2 {
        return Err(GeometryError::InvalidDimensions(format!(
            "grid needs at least 2x2 vertices, got {nx}x{ny}"
        )));
    }
    if !(width_mm > 0.0 && height_mm > 0.0 && width_mm.is_finite() && height_mm.is_finite()) {
        return Err(GeometryError::InvalidDimensions(format!(
            "sheet size must be positive, got {width_mm} x {height_mm} mm"
        )));
    }
    if !clamp_height_mm.is_finite() {
        return Err(GeometryError::InvalidDimensions("clamp height is not finite".into()));
    }
    if width_mm > MACHINE_SHEET_LIMIT_MM || height_mm > MACHINE_SHEET_LIMIT_MM {
        log::warn!(
            "sheet {width_mm} x {height_mm} mm exceeds the {MACHINE_SHEET_LIMIT_MM} mm machine limit"
        );
    }
    let dx = width_mm / (nx - 1) as f64;
    let dy = height_mm / (ny - 1) as f64;
    let mut rest_positions = Vec::with_capacity(nx * ny);
    let mut vertex_state = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            rest_positions.push(Vec2::new(-0.5 * width_mm + i as f64 * dx, -0.5 * height_mm + j as f64 * dy));
            let boundary = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
            vertex_state.push(if boundary { VertexState::ClampedEdge } else { VertexState::Free });
        }
    }
    let positions = rest_positions
        .iter()
        .map(|r| Vec3::new(r.x, r.y, clamp_height_mm))
        .collect();
    Ok(SheetMesh {
        nx,
        ny,
        width: width_mm,
        height: height_mm,
        rest_positions,
        positions,
        vertex_state,
    })
}

impl SheetMesh {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn pitch_x(&self) -> f64 {
        self.width / (self.nx - 1) as f64
    }

    pub fn pitch_y(&self) -> f64 {
        self.height / (self.ny - 1) as f64
    }

    pub fn vertex_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn vertex(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v % self.nx, v / self.nx)
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        let (i, j) = self.coords(v);
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    /// Grid-adjacent vertices in the order -x, +x, -y, +y.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.coords(v);
        let nx = self.nx;
        let candidates = [
            (i > 0).then(|| v - 1),
            (i + 1 < nx).then(|| v + 1),
            (j > 0).then(|| v - nx),
            (j + 1 < self.ny).then(|| v + nx),
        ];
        candidates.into_iter().flatten()
    }

    fn x_edge_count(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    pub fn edge_count(&self) -> usize {
        self.x_edge_count() + self.nx * (self.ny - 1)
    }

    /// Endpoints of an edge, lower index first.
    pub fn edge(&self, e: EdgeId) -> (usize, usize) {
        let hx = self.x_edge_count();
        if e < hx {
            let j = e / (self.nx - 1);
            let i = e % (self.nx - 1);
            let a = self.vertex(i, j);
            (a, a + 1)
        } else {
            let k = e - hx;
            (k, k + self.nx)
        }
    }

    pub fn edge_axis(&self, e: EdgeId) -> Axis {
        if e < self.x_edge_count() {
            Axis::X
        } else {
            Axis::Y
        }
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<EdgeId> {
        grid_edge_between(self.nx, self.ny, a, b)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.edge_count()).map(|e| self.edge(e))
    }

    pub fn rest_length(&self, e: EdgeId) -> f64 {
        let (a, b) = self.edge(e);
        (self.rest_positions[a] - self.rest_positions[b]).norm()
    }

    pub fn formed_length(&self, e: EdgeId) -> f64 {
        let (a, b) = self.edge(e);
        (self.positions[a] - self.positions[b]).norm()
    }

    pub fn face_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn face(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }

    pub fn face_coords(&self, f: usize) -> (usize, usize) {
        (f % (self.nx - 1), f / (self.nx - 1))
    }

    /// Corners of a quad, counter-clockwise in the rest plane.
    pub fn face_vertices(&self, f: usize) -> [usize; 4] {
        let (i, j) = self.face_coords(f);
        let a = self.vertex(i, j);
        [a, a + 1, a + 1 + self.nx, a + self.nx]
    }

    /// Two triangles per quad; the diagonal alternates with the parity of
    /// `i + j` so the split pattern is symmetric about the sheet center.
    pub fn face_triangles(&self, f: usize) -> [[usize; 3]; 2] {
        let (i, j) = self.face_coords(f);
        let [a, b, c, d] = self.face_vertices(f);
        if (i + j) % 2 == 0 {
            [[a, b, c], [a, c, d]]
        } else {
            [[a, b, d], [b, c, d]]
        }
    }

    /// Quads sharing an edge with face `f`.
    pub fn face_neighbors(&self, f: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.face_coords(f);
        let fx = self.nx - 1;
        let candidates = [
            (i > 0).then(|| f - 1),
            (i + 1 < fx).then(|| f + 1),
            (j > 0).then(|| f - fx),
            (j + 1 < self.ny - 1).then(|| f + fx),
        ];
        candidates.into_iter().flatten()
    }

    pub fn rest_face_area(&self, _f: usize) -> f64 {
        self.pitch_x() * self.pitch_y()
    }

    pub fn formed_face_area(&self, f: usize) -> f64 {
        self.face_triangles(f)
            .iter()
            .map(|t| triangle_area(&self.positions[t[0]], &self.positions[t[1]], &self.positions[t[2]]))
            .sum()
    }

    pub fn count_state(&self, state: VertexState) -> usize {
        self.vertex_state.iter().filter(|&&s| s == state).count()
    }

    pub fn rest_position3(&self, v: usize) -> Vec3 {
        let r = self.rest_positions[v];
        Vec3::new(r.x, r.y, 0.0)
    }

    /// Triangulated formed surface, normals facing +z on a flat sheet.
    pub fn to_stl(&self, name: &str) -> StlDocument {
        let faces: Vec<[Vec3; 3]> = (0..self.face_count())
            .flat_map(|f| self.face_triangles(f))
            .map(|t| t.map(|v| self.positions[v]))
            .collect();
        StlDocument::from_faces(name, faces.iter())
    }
}
