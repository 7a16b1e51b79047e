use std::collections::HashMap;

use super::bvh::{Aabb, Bvh};
use super::stl::StlDocument;
use super::{triangle_area, triangle_normal, GeometryError, Vec3};

/// Triangles smaller than this (mm²) are dropped on load.
const DEGENERATE_AREA: f64 = 1e-12;
/// Barycentric slack for segment hits, so a segment through a shared edge
/// is caught by at least one of the two triangles.
const EDGE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance: f64,
    pub triangle: usize,
}

/// A rigid triangle mesh the sheet is formed over.
#[derive(Debug, Clone)]
pub struct MoldMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    bounds: Aabb,
    bvh: Bvh,
}

impl MoldMesh {
    /// Builds a mold, rejecting out-of-range indices and dropping
    /// zero-area triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len() as u32;
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(GeometryError::InvalidDimensions(format!(
                "triangle {t:?} references a vertex outside 0..{n}"
            )));
        }
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                triangle_area(&a, &b, &c) > DEGENERATE_AREA
            })
            .collect();
        Ok(Self::from_clean(vertices, triangles))
    }

    fn from_clean(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                for &i in t {
                    b.grow(&vertices[i as usize]);
                }
                b
            })
            .collect();
        let bvh = Bvh::build(&boxes);
        let bounds = bvh.bounds();
        Self {
            vertices,
            triangles,
            bounds,
            bvh,
        }
    }

    /// A mold with no geometry: forming happens against the bed alone.
    pub fn empty() -> Self {
        Self::from_clean(Vec::new(), Vec::new())
    }

    /// Welds coincident STL vertices into an indexed mesh.
    pub fn from_stl(doc: &StlDocument) -> Result<Self, GeometryError> {
        if doc.triangles.is_empty() {
            return Err(GeometryError::EmptyModel);
        }
        let mut index: HashMap<[u32; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(doc.triangles.len());
        for tri in &doc.triangles {
            let mut t = [0u32; 3];
            for (k, v) in tri.vertices.iter().enumerate() {
                let key = v.map(f32::to_bits);
                t[k] = *index.entry(key).or_insert_with(|| {
                    vertices.push(Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64));
                    (vertices.len() - 1) as u32
                });
            }
            triangles.push(t);
        }
        let mold = Self::new(vertices, triangles)?;
        if mold.is_empty() {
            return Err(GeometryError::EmptyModel);
        }
        Ok(mold)
    }

    pub fn to_stl(&self, name: &str) -> StlDocument {
        let faces: Vec<[Vec3; 3]> = (0..self.triangles.len()).map(|i| self.triangle(i)).collect();
        StlDocument::from_faces(name, faces.iter())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|k| self.vertices[k as usize])
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Height of the mold top; zero for an empty mold.
    pub fn top(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.bounds.max.z
        }
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        let vertices = self.vertices.iter().map(|v| v + offset).collect();
        Self::from_clean(vertices, self.triangles.clone())
    }

    /// Centers the footprint on the origin and rests the mold on `z = 0`.
    pub fn placed_on_bed(&self) -> Self {
        if self.is_empty() {
            return self.clone();
        }
        let b = self.bounds;
        let offset = Vec3::new(-(b.min.x + b.max.x) * 0.5, -(b.min.y + b.max.y) * 0.5, -b.min.z);
        self.translated(offset)
    }

    /// Keeps triangles that face up or sideways. Downward faces sit under
    /// the mold and can never be reached by a sheet coming from above.
    pub fn upper_surface(&self) -> Self {
        let triangles = self
            .triangles
            .iter()
            .copied()
            .filter(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                triangle_normal(&a, &b, &c).z > -1e-6
            })
            .collect();
        Self::from_clean(self.vertices.clone(), triangles)
    }

    /// Exact nearest point over all triangles.
    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestPoint> {
        let (tri, d2) = self.bvh.nearest(p, |i| {
            let [a, b, c] = self.triangle(i);
            (closest_point_on_triangle(p, &a, &b, &c) - p).norm_squared()
        })?;
        let [a, b, c] = self.triangle(tri);
        Some(ClosestPoint {
            point: closest_point_on_triangle(p, &a, &b, &c),
            distance: d2.sqrt(),
            triangle: tri,
        })
    }

    /// First intersection of the segment `from -> to` with the mold, as the
    /// segment parameter in `[0, 1]` and the triangle index.
    pub fn first_hit(&self, from: &Vec3, to: &Vec3) -> Option<(f64, usize)> {
        let dir = to - from;
        let mut best: Option<(f64, usize)> = None;
        self.bvh.for_each_on_segment(from, &dir, 1.0, |i| {
            let [a, b, c] = self.triangle(i);
            if let Some(t) = segment_triangle_hit(from, &dir, &a, &b, &c) {
                let better = match best {
                    None => true,
                    Some((bt, bi)) => t < bt || (t == bt && i < bi),
                };
                if better {
                    best = Some((t, i));
                }
            }
        });
        best
    }

    /// Highest mold surface directly above or at `(x, y)`, if any.
    pub fn top_height(&self, x: f64, y: f64) -> Option<f64> {
        if self.is_empty() || !self.bounds.contains_xy(x, y) {
            return None;
        }
        let from = Vec3::new(x, y, self.bounds.max.z + 1.0);
        let to = Vec3::new(x, y, self.bounds.min.z - 1.0);
        self.first_hit(&from, &to).map(|(t, _)| from.z + t * (to.z - from.z))
    }

    /// Inside test for the mold resting on the bed: a point is inside when
    /// it lies below `z = 0` or has mold surface above it.
    pub fn contains(&self, p: &Vec3) -> bool {
        if p.z < 0.0 {
            return true;
        }
        if self.is_empty() || !self.bounds.contains_xy(p.x, p.y) || p.z > self.bounds.max.z {
            return false;
        }
        let up = Vec3::new(p.x, p.y, self.bounds.max.z + 1.0);
        self.first_hit(p, &up).is_some()
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Segment `origin + t * dir`, `t` in `[0, 1]`, against triangle `abc`.
pub fn segment_triangle_hit(origin: &Vec3, dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if scale == 0.0 || det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv;
    if !(-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -EDGE_SLACK || u + v > 1.0 + EDGE_SLACK {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    if (0.0..=1.0).contains(&t) {
        Some(t)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn point_above_box_top_projects_onto_face() {
        let mold = fixtures::box_mold(30.0, 30.0, 15.0);
        let cp = mold.closest_point(&Vec3::new(2.0, -3.0, 25.0)).unwrap();
        assert!((cp.distance - 10.0).abs() < 1e-12);
        assert!((cp.point - Vec3::new(2.0, -3.0, 15.0)).norm() < 1e-12);
    }

    #[test]
    fn point_off_corner_projects_onto_corner() {
        let mold = fixtures::box_mold(30.0, 30.0, 15.0);
        let cp = mold.closest_point(&Vec3::new(16.0, 16.0, 16.0)).unwrap();
        assert!((cp.distance - 3f64.sqrt()).abs() < 1e-12);
        assert!((cp.point - Vec3::new(15.0, 15.0, 15.0)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_triangles_dropped() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let mold = MoldMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(mold.len(), 1);
        assert!(MoldMesh::new(vec![Vec3::zeros()], vec![[0, 0, 1]]).is_err());
    }

    #[test]
    fn inside_tests_use_bed_and_surface_above() {
        let mold = fixtures::hemisphere_mold(25.0, 48, 16);
        assert!(mold.contains(&Vec3::new(0.0, 0.0, 10.0)));
        assert!(!mold.contains(&Vec3::new(0.0, 0.0, 26.0)));
        assert!(!mold.contains(&Vec3::new(40.0, 0.0, 1.0)));
        assert!(mold.contains(&Vec3::new(40.0, 0.0, -0.5)));
        let top = mold.top_height(0.0, 0.0).unwrap();
        assert!((top - 25.0).abs() < 1e-9);
    }

    #[test]
    fn first_hit_on_box_top() {
        let mold = fixtures::box_mold(30.0, 30.0, 15.0);
        let (t, _) = mold
            .first_hit(&Vec3::new(0.0, 0.0, 20.0), &Vec3::new(0.0, 0.0, 10.0))
            .unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert!(mold
            .first_hit(&Vec3::new(0.0, 0.0, 20.0), &Vec3::new(0.0, 0.0, 16.0))
            .is_none());
    }

    #[test]
    fn placed_on_bed_centers_footprint() {
        let mold = fixtures::box_mold(10.0, 20.0, 5.0).translated(Vec3::new(7.0, -3.0, 2.5));
        let placed = mold.placed_on_bed();
        let b = placed.bounds();
        assert!((b.min.z).abs() < 1e-12);
        assert!((b.min.x + b.max.x).abs() < 1e-12);
        assert!((b.min.y + b.max.y).abs() < 1e-12);
    }
}
