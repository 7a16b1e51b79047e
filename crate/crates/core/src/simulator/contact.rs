//! The mold-plus-bed obstacle the sheet is formed against.

use crate::geometry::{MoldMesh, Vec3};

#[derive(Debug, Clone)]
pub struct Obstacle {
    /// Upward and sideways faces of the mold only.
    surface: MoldMesh,
}

impl Obstacle {
    pub fn new(mold: &MoldMesh) -> Self {
        Self {
            surface: mold.upper_surface(),
        }
    }

    /// The bed plane alone.
    pub fn bed() -> Self {
        Self {
            surface: MoldMesh::empty(),
        }
    }

    /// Nearest surface point and its distance.
    pub fn closest(&self, p: &Vec3) -> (Vec3, f64) {
        let bed = (Vec3::new(p.x, p.y, 0.0), p.z.abs());
        match self.surface.closest_point(p) {
            Some(cp) if cp.distance < bed.1 => (cp.point, cp.distance),
            _ => bed,
        }
    }

    /// Where the segment `from -> to` first touches the surface.
    pub fn first_hit(&self, from: &Vec3, to: &Vec3) -> Option<Vec3> {
        let mut best_t = self.surface.first_hit(from, to).map(|(t, _)| t);
        if to.z < 0.0 && from.z >= 0.0 {
            let t = from.z / (from.z - to.z);
            best_t = Some(best_t.map_or(t, |b: f64| b.min(t)));
        }
        best_t.map(|t| {
            let mut hit = from + (to - from) * t;
            if t == 0.0 {
                hit = *from;
            }
            if hit.z < 0.0 {
                hit.z = 0.0;
            }
            hit
        })
    }

    /// Whether `p` lies in the mold-plus-bed solid.
    pub fn contains(&self, p: &Vec3) -> bool {
        self.surface.contains(p)
    }

    /// Depth of `p` inside the mold-plus-bed solid, zero outside.
    pub fn penetration_depth(&self, p: &Vec3) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        let covered = self.surface.top_height(p.x, p.y).is_some_and(|h| h > 0.0);
        let mold = self.surface.closest_point(p).map(|cp| cp.distance);
        match (covered, mold) {
            (true, Some(d)) => d,
            (false, Some(d)) => d.min(-p.z.min(0.0)),
            (_, None) => -p.z.min(0.0),
        }
    }
}
