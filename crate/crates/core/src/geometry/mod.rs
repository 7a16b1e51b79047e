//! Mesh data structures, STL I/O and spatial queries.

mod bvh;
mod mold;
mod sheet;
mod stl;

pub use bvh::{Aabb, Bvh};
pub use mold::{closest_point_on_triangle, segment_triangle_hit, ClosestPoint, MoldMesh};
pub use sheet::{build_sheet, grid_edge_between, Axis, EdgeId, SheetMesh, VertexState};
pub use stl::{parse_stl, write_stl, StlDocument, StlFormat, StlTriangle};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("STL data truncated: {0}")]
    TruncatedFile(String),
    #[error("malformed ASCII STL at line {line}: {message}")]
    MalformedAscii { line: usize, message: String },
    #[error("model contains no triangles")]
    EmptyModel,
    #[error("invalid sheet dimensions: {0}")]
    InvalidDimensions(String),
}

/// Unit normal of a triangle from its winding, or zero for degenerate input.
pub fn triangle_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 0.0 {
        n / len
    } else {
        Vec3::zeros()
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}
