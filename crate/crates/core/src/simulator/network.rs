//! Axial spring network over the sheet grid.

use nalgebra::Matrix3;

use super::SimConfig;
use crate::geometry::{Axis, SheetMesh, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    /// Rest length, mm.
    pub rest: f64,
    /// Stiffness `EA/L`, N/mm.
    pub stiffness: f64,
}

#[derive(Debug, Clone)]
pub struct SpringNetwork {
    pub springs: Vec<Spring>,
    /// Per vertex: (neighbor, spring index).
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Weight carried by each vertex, N.
    pub vertex_load: f64,
}

impl SpringNetwork {
    pub fn new(sheet: &SheetMesh, config: &SimConfig) -> Self {
        let (dx, dy) = (sheet.pitch_x(), sheet.pitch_y());
        let mut springs = Vec::with_capacity(sheet.edge_count());
        for e in 0..sheet.edge_count() {
            let (a, b) = sheet.edge(e);
            let rest = sheet.rest_length(e);
            let across = match sheet.edge_axis(e) {
                Axis::X => dy,
                Axis::Y => dx,
            };
            springs.push(Spring {
                a,
                b,
                rest,
                stiffness: config.stiffness_n_per_mm(rest, across),
            });
        }
        if config.diagonal_springs {
            for f in 0..sheet.face_count() {
                let [a, b, c, d] = sheet.face_vertices(f);
                for (p, q) in [(a, c), (b, d)] {
                    let diag = (sheet.rest_positions[p] - sheet.rest_positions[q]).norm();
                    springs.push(Spring {
                        a: p,
                        b: q,
                        rest: diag,
                        stiffness: config.stiffness_n_per_mm(diag, 0.5 * dx.min(dy)),
                    });
                }
            }
        }
        let mut adjacency = vec![Vec::with_capacity(4); sheet.vertex_count()];
        for (i, s) in springs.iter().enumerate() {
            adjacency[s.a].push((s.b, i));
            adjacency[s.b].push((s.a, i));
        }
        let vertex_load = config.sheet_mass_kg * config.gravity_mps2 / sheet.vertex_count() as f64;
        Self {
            springs,
            adjacency,
            vertex_load,
        }
    }

    /// Energy of the springs touching `v` plus its potential, with `v` at `p`.
    pub fn local_energy(&self, v: usize, p: &Vec3, positions: &[Vec3], gravity: bool) -> f64 {
        let mut e = 0.0;
        for &(n, s) in &self.adjacency[v] {
            let spring = &self.springs[s];
            let stretch = (p - positions[n]).norm() - spring.rest;
            e += 0.5 * spring.stiffness * stretch * stretch;
        }
        if gravity {
            e += self.vertex_load * p.z;
        }
        e
    }

    /// Total energy in N·mm, counting the potential of `movable` vertices.
    pub fn total_energy(&self, positions: &[Vec3], movable: impl Fn(usize) -> bool, gravity: bool) -> f64 {
        let springs: f64 = self
            .springs
            .iter()
            .map(|s| {
                let stretch = (positions[s.a] - positions[s.b]).norm() - s.rest;
                0.5 * s.stiffness * stretch * stretch
            })
            .sum();
        let potential: f64 = if gravity {
            (0..positions.len())
                .filter(|&v| movable(v))
                .map(|v| self.vertex_load * positions[v].z)
                .sum()
        } else {
            0.0
        };
        springs + potential
    }

    /// Net force on `v` (N): spring forces plus its weight when `gravity`.
    pub fn force(&self, v: usize, positions: &[Vec3], gravity: bool) -> Vec3 {
        let p = positions[v];
        let mut f = Vec3::zeros();
        for &(n, s) in &self.adjacency[v] {
            let spring = &self.springs[s];
            let d = p - positions[n];
            let len = d.norm();
            if len > 0.0 {
                f -= d * (spring.stiffness * (len - spring.rest) / len);
            }
        }
        if gravity {
            f.z -= self.vertex_load;
        }
        f
    }

    /// Damped Newton step for one vertex with its neighbors held fixed.
    ///
    /// The 3x3 stiffness includes the geometric term of stretched springs and
    /// drops the negative part from compressed ones, so it stays positive
    /// semi-definite. The step is capped and backtracked until the local
    /// energy decreases; a zero vector means no descent was found.
    pub fn relax_step(&self, v: usize, positions: &[Vec3], gravity: bool, damping: f64) -> Vec3 {
        let p = positions[v];
        let mut hessian = Matrix3::zeros();
        let mut k_sum = 0.0;
        let mut min_rest = f64::INFINITY;
        for &(n, s) in &self.adjacency[v] {
            let spring = &self.springs[s];
            let d = p - positions[n];
            let len = d.norm();
            k_sum += spring.stiffness;
            min_rest = min_rest.min(spring.rest);
            if len <= 0.0 {
                hessian += Matrix3::identity() * spring.stiffness;
                continue;
            }
            let dir = d / len;
            let outer = dir * dir.transpose();
            let geometric = (1.0 - spring.rest / len).max(0.0);
            hessian += (outer + (Matrix3::identity() - outer) * geometric) * spring.stiffness;
        }
        if k_sum == 0.0 {
            return Vec3::zeros();
        }
        let force = self.force(v, positions, gravity);
        if force.norm() == 0.0 {
            return Vec3::zeros();
        }
        hessian += Matrix3::identity() * (1e-9 * k_sum);
        let Some(step) = hessian.cholesky().map(|c| c.solve(&force)) else {
            return Vec3::zeros();
        };
        let mut step = step * damping;
        let cap = 0.5 * min_rest;
        let len = step.norm();
        if len > cap {
            step *= cap / len;
        }
        let e0 = self.local_energy(v, &p, positions, gravity);
        for _ in 0..40 {
            let e1 = self.local_energy(v, &(p + step), positions, gravity);
            if e1 < e0 {
                return step;
            }
            step *= 0.5;
        }
        Vec3::zeros()
    }
}
