//! Procedural molds: the shapes used for forming trials and calibration.
//!
//! Every mold is closed, wound counter-clockwise seen from outside, centered
//! on the origin and resting on the bed plane `z = 0`.

use std::f64::consts::PI;

use crate::geometry::{MoldMesh, Vec3};

struct Builder {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
}

impl Builder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
        }
    }

    fn vertex(&mut self, x: f64, y: f64, z: f64) -> u32 {
        self.vertices.push(Vec3::new(x, y, z));
        (self.vertices.len() - 1) as u32
    }

    fn tri(&mut self, a: u32, b: u32, c: u32) {
        self.triangles.push([a, b, c]);
    }

    /// Quad `abcd`, counter-clockwise seen from the side it faces.
    fn quad(&mut self, a: u32, b: u32, c: u32, d: u32) {
        self.tri(a, b, c);
        self.tri(a, c, d);
    }

    fn square(&mut self, half_x: f64, half_y: f64, z: f64) -> [u32; 4] {
        [
            self.vertex(-half_x, -half_y, z),
            self.vertex(half_x, -half_y, z),
            self.vertex(half_x, half_y, z),
            self.vertex(-half_x, half_y, z),
        ]
    }

    /// Side walls between two counter-clockwise loops, `lower` below `upper`.
    fn walls(&mut self, lower: &[u32], upper: &[u32]) {
        let n = lower.len();
        for k in 0..n {
            let k1 = (k + 1) % n;
            self.quad(lower[k], lower[k1], upper[k1], upper[k]);
        }
    }

    fn finish(self) -> MoldMesh {
        MoldMesh::new(self.vertices, self.triangles).expect("fixture indices are valid")
    }
}

/// Axis-aligned box of the given footprint and height.
pub fn box_mold(size_x: f64, size_y: f64, height: f64) -> MoldMesh {
    let mut b = Builder::new();
    let bottom = b.square(0.5 * size_x, 0.5 * size_y, 0.0);
    let top = b.square(0.5 * size_x, 0.5 * size_y, height);
    b.quad(bottom[0], bottom[3], bottom[2], bottom[1]);
    b.quad(top[0], top[1], top[2], top[3]);
    b.walls(&bottom, &top);
    b.finish()
}

/// Square frustum with a square base of `base_size` and walls tilted
/// `draft_deg` from vertical.
pub fn frustum_mold(base_size: f64, height: f64, draft_deg: f64) -> MoldMesh {
    let top_size = base_size - 2.0 * height * draft_deg.to_radians().tan();
    assert!(top_size > 0.0, "draft too large for the base");
    frustum_between(base_size, top_size, height)
}

/// Square frustum described by its top face instead of its base.
pub fn frustum_mold_with_top(top_size: f64, height: f64, draft_deg: f64) -> MoldMesh {
    let base_size = top_size + 2.0 * height * draft_deg.to_radians().tan();
    frustum_between(base_size, top_size, height)
}

fn frustum_between(base_size: f64, top_size: f64, height: f64) -> MoldMesh {
    let mut b = Builder::new();
    let bottom = b.square(0.5 * base_size, 0.5 * base_size, 0.0);
    let top = b.square(0.5 * top_size, 0.5 * top_size, height);
    b.quad(bottom[0], bottom[3], bottom[2], bottom[1]);
    b.quad(top[0], top[1], top[2], top[3]);
    b.walls(&bottom, &top);
    b.finish()
}

/// Upper half of a sphere sitting on the bed, closed by a flat disc.
/// `segments` runs around the axis, `rings` from the equator to the pole.
pub fn hemisphere_mold(radius: f64, segments: usize, rings: usize) -> MoldMesh {
    assert!(segments >= 3 && rings >= 1);
    let mut b = Builder::new();
    let mut loops: Vec<Vec<u32>> = Vec::with_capacity(rings);
    for k in 0..rings {
        let phi = k as f64 * 0.5 * PI / rings as f64;
        let (r, z) = (radius * phi.cos(), radius * phi.sin());
        let ring = (0..segments)
            .map(|s| {
                let theta = 2.0 * PI * s as f64 / segments as f64;
                b.vertex(r * theta.cos(), r * theta.sin(), z)
            })
            .collect();
        loops.push(ring);
    }
    let pole = b.vertex(0.0, 0.0, radius);
    let center = b.vertex(0.0, 0.0, 0.0);
    for k in 0..rings - 1 {
        let (lower, upper) = (loops[k].clone(), loops[k + 1].clone());
        b.walls(&lower, &upper);
    }
    let last = &loops[rings - 1];
    for s in 0..segments {
        b.tri(last[s], last[(s + 1) % segments], pole);
    }
    let equator = &loops[0];
    for s in 0..segments {
        b.tri(center, equator[(s + 1) % segments], equator[s]);
    }
    b.finish()
}

/// Rectangular block with a centered pocket in its top face. The pocket
/// walls taper by `draft_deg` toward the floor.
pub fn concave_mold(block_size: f64, block_height: f64, pocket_size: f64, pocket_depth: f64, draft_deg: f64) -> MoldMesh {
    let floor_size = pocket_size - 2.0 * pocket_depth * draft_deg.to_radians().tan();
    assert!(pocket_size < block_size && floor_size > 0.0 && pocket_depth < block_height);
    let mut b = Builder::new();
    let bottom = b.square(0.5 * block_size, 0.5 * block_size, 0.0);
    let top = b.square(0.5 * block_size, 0.5 * block_size, block_height);
    let rim = b.square(0.5 * pocket_size, 0.5 * pocket_size, block_height);
    let floor = b.square(0.5 * floor_size, 0.5 * floor_size, block_height - pocket_depth);
    b.quad(bottom[0], bottom[3], bottom[2], bottom[1]);
    b.walls(&bottom, &top);
    // Top annulus between the outer edge and the pocket rim.
    for k in 0..4 {
        let k1 = (k + 1) % 4;
        b.quad(top[k], top[k1], rim[k1], rim[k]);
    }
    // Pocket walls face the pocket center.
    for k in 0..4 {
        let k1 = (k + 1) % 4;
        b.quad(rim[k], rim[k1], floor[k1], floor[k]);
    }
    b.quad(floor[0], floor[1], floor[2], floor[3]);
    b.finish()
}

/// A zero-height mold: one upward-facing square on the bed.
pub fn flat_plate(size: f64) -> MoldMesh {
    let mut b = Builder::new();
    let s = b.square(0.5 * size, 0.5 * size, 0.0);
    b.quad(s[0], s[1], s[2], s[3]);
    b.finish()
}

/// The calibration mold with a recessed square used across the test suite.
pub fn calibration_concave() -> MoldMesh {
    concave_mold(70.0, 15.0, 36.0, 8.0, 10.0)
}

/// The 30 x 30 x 15 mm mold with 10 degree draft used for forming trials.
pub fn trial_frustum() -> MoldMesh {
    frustum_mold(30.0, 15.0, 10.0)
}

/// Default dome for forming tests.
pub fn trial_hemisphere() -> MoldMesh {
    hemisphere_mold(25.0, 64, 16)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_volume(m: &MoldMesh) -> f64 {
        (0..m.len())
            .map(|i| {
                let [a, b, c] = m.triangle(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    fn closed(m: &MoldMesh) -> bool {
        let mut counts = std::collections::HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }

    #[test]
    fn box_volume_and_closure() {
        let m = box_mold(30.0, 20.0, 15.0);
        assert_eq!(m.len(), 12);
        assert!(closed(&m));
        assert!((signed_volume(&m) - 30.0 * 20.0 * 15.0).abs() < 1e-9);
    }

    #[test]
    fn frustum_volume() {
        let m = frustum_mold(30.0, 15.0, 10.0);
        assert!(closed(&m));
        let top = 30.0 - 30.0 * 10f64.to_radians().tan();
        let expected = 15.0 / 3.0 * (900.0 + top * top + (900.0 * top * top).sqrt());
        assert!((signed_volume(&m) - expected).abs() < 1e-9);
    }

    #[test]
    fn hemisphere_is_closed_and_positive() {
        let m = hemisphere_mold(25.0, 32, 8);
        assert!(closed(&m));
        let v = signed_volume(&m);
        let exact = 2.0 / 3.0 * PI * 25f64.powi(3);
        assert!(v > 0.9 * exact && v < exact);
    }

    #[test]
    fn concave_block_volume() {
        let m = concave_mold(60.0, 15.0, 30.0, 8.0, 0.0);
        assert!(closed(&m));
        let expected = 60.0 * 60.0 * 15.0 - 30.0 * 30.0 * 8.0;
        assert!((signed_volume(&m) - expected).abs() < 1e-8);
    }
}
