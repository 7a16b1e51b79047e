//! Three-stage forming simulation: heat, press, vacuum.
//!
//! The sheet is a net of axial springs with stiffness `k = EA/L`. Vertices
//! are relaxed one at a time in index order; each update is a damped Newton
//! step on the vertex's local energy with its neighbors held fixed. Every
//! move is swept against the mold and the bed, and a vertex that touches
//! either adheres and never moves again.

mod contact;
mod network;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contact::Obstacle;
pub use network::{Spring, SpringNetwork};

use crate::geometry::{build_sheet, GeometryError, MoldMesh, SheetMesh, Vec3, VertexState};

/// Sweep cap for the relaxation after each press increment.
const PRESS_INCREMENT_SWEEPS: usize = 200;

/// Sweep cap for the relaxation after each vacuum pull.
const VACUUM_RELAX_SWEEPS: usize = 200;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("spring rest length must be positive")]
    ZeroRestLength,
    #[error("mold top at {mold_top_mm} mm is above the clamp start height {clamp_height_mm} mm")]
    MoldTallerThanClampTravel { mold_top_mm: f64, clamp_height_mm: f64 },
    #[error("{stage:?} stage did not converge")]
    NoConvergence { stage: Stage, partial: Box<FormedSheet> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub young_modulus_pa: f64,
    pub sheet_mass_kg: f64,
    /// Spring cross-section in m². `None` uses sheet thickness times the
    /// grid spacing across the edge.
    pub cross_section_area_m2: Option<f64>,
    pub sheet_thickness_mm: f64,
    pub gravity_mps2: f64,
    pub clamp_height_mm: f64,
    pub convergence_tol: f64,
    pub max_iterations: usize,
    pub damping: f64,
    pub contact_tol_mm: f64,
    pub pull_step_mm: f64,
    pub diagonal_springs: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            young_modulus_pa: 229.6e6,
            sheet_mass_kg: 0.021,
            cross_section_area_m2: None,
            sheet_thickness_mm: 1.0,
            gravity_mps2: 9.81,
            clamp_height_mm: 40.0,
            convergence_tol: 1e-6,
            max_iterations: 5000,
            damping: 1.0,
            contact_tol_mm: 0.1,
            pull_step_mm: 0.5,
            diagonal_springs: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        if !(self.young_modulus_pa > 0.0 && self.young_modulus_pa.is_finite()) {
            return bad("young_modulus_pa must be positive");
        }
        if !(self.sheet_mass_kg > 0.0 && self.sheet_mass_kg.is_finite()) {
            return bad("sheet_mass_kg must be positive");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.contact_tol_mm > 0.0 && self.pull_step_mm > 0.0) {
            return bad("contact_tol_mm and pull_step_mm must be positive");
        }
        if !(self.gravity_mps2 >= 0.0 && self.clamp_height_mm >= 0.0 && self.sheet_thickness_mm > 0.0) {
            return bad("gravity, clamp height and thickness must be non-negative");
        }
        if self.cross_section_area_m2.is_some_and(|a| !(a > 0.0)) {
            return bad("cross_section_area_m2 must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }

    /// Spring stiffness in N/mm for an edge of `rest_mm` whose neighbors
    /// lie `across_mm` apart.
    pub fn stiffness_n_per_mm(&self, rest_mm: f64, across_mm: f64) -> f64 {
        let area = self
            .cross_section_area_m2
            .unwrap_or(self.sheet_thickness_mm * 1e-3 * across_mm * 1e-3);
        self.young_modulus_pa * area / (rest_mm * 1e-3) * 1e-3
    }
}

/// Grid resolution and footprint of the sheet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheetParams {
    pub nx: usize,
    pub ny: usize,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl SheetParams {
    pub fn square(n: usize, size_mm: f64) -> Self {
        Self {
            nx: n,
            ny: n,
            width_mm: size_mm,
            height_mm: size_mm,
        }
    }
}

impl Default for SheetParams {
    fn default() -> Self {
        Self::square(40, crate::MACHINE_SHEET_LIMIT_MM)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Heat,
    Press,
    Vacuum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub iterations: usize,
    /// Largest vertex displacement in the last sweep, mm.
    pub residual_mm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormedSheet {
    pub sheet: SheetMesh,
    pub stage_log: Vec<StageReport>,
    /// Vertices adhered to the mold or bed, ascending.
    pub contact_set: Vec<usize>,
    /// Free vertices left hanging when the vacuum stage gave up.
    pub unreached: Vec<usize>,
}

impl FormedSheet {
    pub fn new(sheet: SheetMesh, stage_log: Vec<StageReport>) -> Self {
        let contact_set = indices_in(&sheet, VertexState::AdheredToMold);
        let unreached = indices_in(&sheet, VertexState::Free);
        Self {
            sheet,
            stage_log,
            contact_set,
            unreached,
        }
    }

    pub fn converged(&self) -> bool {
        self.stage_log.iter().all(|r| r.converged)
    }

    /// Largest depth of any vertex inside the mold-plus-bed solid.
    pub fn max_penetration(&self, mold: &MoldMesh) -> f64 {
        let obstacle = Obstacle::new(mold);
        self.sheet
            .positions
            .iter()
            .map(|p| obstacle.penetration_depth(p))
            .fold(0.0, f64::max)
    }
}

fn indices_in(sheet: &SheetMesh, state: VertexState) -> Vec<usize> {
    (0..sheet.vertex_count())
        .filter(|&v| sheet.vertex_state[v] == state)
        .collect()
}

/// Signed axial force (N, tension positive) for lengths in meters.
pub fn spring_force(rest_m: f64, length_m: f64, young_modulus_pa: f64, area_m2: f64) -> Result<f64, SimError> {
    if !(rest_m > 0.0) {
        return Err(SimError::ZeroRestLength);
    }
    Ok(young_modulus_pa * area_m2 / rest_m * (length_m - rest_m))
}

/// Mutable solver state shared by the stages.
struct Solver<'a> {
    sheet: SheetMesh,
    network: SpringNetwork,
    obstacle: Obstacle,
    config: &'a SimConfig,
    /// Lower bound on each vertex's distance to the obstacle.
    clearance: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(sheet: SheetMesh, obstacle: Obstacle, config: &'a SimConfig) -> Self {
        let network = SpringNetwork::new(&sheet, config);
        let clearance = vec![0.0; sheet.vertex_count()];
        Self {
            sheet,
            network,
            obstacle,
            config,
            clearance,
        }
    }

    fn adhere(&mut self, v: usize, at: Vec3) {
        self.sheet.positions[v] = at;
        self.sheet.vertex_state[v] = VertexState::AdheredToMold;
    }

    /// Refreshes the clearance of `v` and adheres it when in contact.
    fn probe(&mut self, v: usize) -> bool {
        let p = self.sheet.positions[v];
        let (closest, distance) = self.obstacle.closest(&p);
        if distance <= self.config.contact_tol_mm || self.obstacle.contains(&p) {
            self.adhere(v, closest);
            return true;
        }
        self.clearance[v] = distance;
        false
    }

    /// Adheres every free vertex already touching the obstacle.
    fn anchor_contacts(&mut self) {
        for v in 0..self.sheet.vertex_count() {
            if self.sheet.vertex_state[v] == VertexState::Free {
                self.probe(v);
            }
        }
    }

    /// Moves a free vertex toward `target`, stopping at the first contact.
    /// Returns the distance actually travelled.
    fn move_vertex(&mut self, v: usize, target: Vec3) -> f64 {
        let from = self.sheet.positions[v];
        let travel = (target - from).norm();
        if travel == 0.0 {
            return 0.0;
        }
        if self.clearance[v] - travel > self.config.contact_tol_mm {
            self.sheet.positions[v] = target;
            self.clearance[v] -= travel;
            return travel;
        }
        if let Some(hit) = self.obstacle.first_hit(&from, &target) {
            let (closest, _) = self.obstacle.closest(&hit);
            self.adhere(v, closest);
            return (closest - from).norm();
        }
        self.sheet.positions[v] = target;
        self.probe(v);
        (self.sheet.positions[v] - from).norm()
    }

    /// Gauss-Seidel relaxation of the free vertices.
    fn relax(&mut self, gravity: bool, max_sweeps: usize) -> (usize, f64, bool) {
        let mut residual = 0.0;
        for sweep in 1..=max_sweeps {
            residual = 0.0_f64;
            for v in 0..self.sheet.vertex_count() {
                if self.sheet.vertex_state[v] != VertexState::Free {
                    continue;
                }
                let step = self
                    .network
                    .relax_step(v, &self.sheet.positions, gravity, self.config.damping);
                if step == Vec3::zeros() {
                    continue;
                }
                let target = self.sheet.positions[v] + step;
                residual = residual.max(self.move_vertex(v, target));
            }
            if residual < self.config.convergence_tol {
                return (sweep, residual, true);
            }
        }
        (max_sweeps, residual, false)
    }

    /// Gravity-free relaxation in which no vertex may back away along its
    /// pull direction.
    fn relax_toward(&mut self, toward: &[Vec3], max_sweeps: usize) {
        for _ in 0..max_sweeps {
            let mut residual = 0.0_f64;
            for v in 0..self.sheet.vertex_count() {
                if self.sheet.vertex_state[v] != VertexState::Free {
                    continue;
                }
                let mut step = self.network.relax_step(v, &self.sheet.positions, false, self.config.damping);
                let along = step.dot(&toward[v]);
                if along < 0.0 {
                    step -= toward[v] * along;
                }
                if step == Vec3::zeros() {
                    continue;
                }
                let target = self.sheet.positions[v] + step;
                residual = residual.max(self.move_vertex(v, target));
            }
            if residual < self.config.convergence_tol {
                return;
            }
        }
    }

    fn clamp_height(&self) -> f64 {
        (0..self.sheet.vertex_count())
            .filter(|&v| self.sheet.vertex_state[v] == VertexState::ClampedEdge)
            .map(|v| self.sheet.positions[v].z)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_sheet(sheet: &SheetMesh) -> Result<(), SimError> {
    if sheet.vertex_count() != sheet.positions.len() || sheet.vertex_count() != sheet.vertex_state.len() {
        return Err(SimError::InvalidConfig("sheet arrays disagree with the grid size".into()));
    }
    Ok(())
}

fn warn_if_mold_overhangs(sheet: &SheetMesh, mold: &MoldMesh) {
    if mold.is_empty() {
        return;
    }
    let b = mold.bounds();
    let (hx, hy) = (0.5 * sheet.width(), 0.5 * sheet.height());
    if b.min.x < -hx || b.max.x > hx || b.min.y < -hy || b.max.y > hy {
        log::warn!("mold footprint extends beyond the {} x {} mm sheet", sheet.width(), sheet.height());
    }
}

/// Relaxes the interior under gravity with the boundary fixed in XYZ.
/// The bed is the only obstacle.
pub fn stage_heat(sheet: SheetMesh, config: &SimConfig) -> Result<(SheetMesh, StageReport), SimError> {
    config.validate()?;
    check_sheet(&sheet)?;
    let mut solver = Solver::new(sheet, Obstacle::bed(), config);
    solver.anchor_contacts();
    let (iterations, residual_mm, converged) = solver.relax(true, config.max_iterations);
    let report = StageReport {
        stage: Stage::Heat,
        iterations,
        residual_mm,
        converged,
    };
    Ok((solver.sheet, report))
}

/// Lowers the clamp frame to the bed in `pull_step_mm` increments, adhering
/// vertices that meet the mold and relaxing under gravity after each step.
pub fn stage_press(sheet: SheetMesh, mold: &MoldMesh, config: &SimConfig) -> Result<(SheetMesh, StageReport), SimError> {
    config.validate()?;
    check_sheet(&sheet)?;
    warn_if_mold_overhangs(&sheet, mold);
    let mut solver = Solver::new(sheet, Obstacle::new(mold), config);
    let mut clamp = solver.clamp_height();
    if !mold.is_empty() && mold.top() > clamp {
        return Err(SimError::MoldTallerThanClampTravel {
            mold_top_mm: mold.top(),
            clamp_height_mm: clamp,
        });
    }
    solver.anchor_contacts();
    let mut iterations = 0;
    while clamp > 0.0 {
        let step = config.pull_step_mm.min(clamp);
        clamp = if clamp - step <= 1e-12 { 0.0 } else { clamp - step };
        let drop = Vec3::new(0.0, 0.0, -step);
        for v in 0..solver.sheet.vertex_count() {
            match solver.sheet.vertex_state[v] {
                VertexState::ClampedEdge => solver.sheet.positions[v].z = clamp,
                VertexState::Free => {
                    let target = solver.sheet.positions[v] + drop;
                    solver.move_vertex(v, target);
                }
                VertexState::AdheredToMold => {}
            }
        }
        iterations += solver.relax(true, PRESS_INCREMENT_SWEEPS).0;
    }
    let (sweeps, residual_mm, converged) = solver.relax(true, config.max_iterations);
    let report = StageReport {
        stage: Stage::Press,
        iterations: iterations + sweeps,
        residual_mm,
        converged,
    };
    Ok((solver.sheet, report))
}

/// Pulls free vertices toward the nearest mold-or-bed point until every
/// vertex has adhered. Gravity is off; springs only redistribute the pull.
pub fn stage_vacuum(sheet: SheetMesh, mold: &MoldMesh, config: &SimConfig) -> Result<FormedSheet, SimError> {
    config.validate()?;
    check_sheet(&sheet)?;
    let mut solver = Solver::new(sheet, Obstacle::new(mold), config);
    solver.anchor_contacts();
    let n = solver.sheet.vertex_count();
    let mut toward = vec![Vec3::zeros(); n];
    let mut iterations = 0;
    let mut residual_mm = 0.0;
    while iterations < config.max_iterations {
        iterations += 1;
        residual_mm = 0.0_f64;
        let mut free = 0;
        for v in 0..n {
            if solver.sheet.vertex_state[v] != VertexState::Free {
                continue;
            }
            let p = solver.sheet.positions[v];
            let (closest, distance) = solver.obstacle.closest(&p);
            if distance <= config.contact_tol_mm {
                solver.adhere(v, closest);
                residual_mm = residual_mm.max(distance);
                continue;
            }
            free += 1;
            toward[v] = (closest - p) / distance;
            let pull = toward[v] * config.pull_step_mm.min(distance);
            residual_mm = residual_mm.max(solver.move_vertex(v, p + pull));
        }
        if free == 0 || residual_mm < config.convergence_tol {
            break;
        }
        solver.relax_toward(&toward, VACUUM_RELAX_SWEEPS);
    }
    let unreached = solver
        .sheet
        .vertex_state
        .iter()
        .any(|&s| s == VertexState::Free);
    let report = StageReport {
        stage: Stage::Vacuum,
        iterations,
        residual_mm,
        converged: !unreached,
    };
    Ok(FormedSheet::new(solver.sheet, vec![report]))
}

/// Runs heat, press and vacuum on a fresh sheet.
pub fn simulate(mold: &MoldMesh, config: &SimConfig, params: &SheetParams) -> Result<FormedSheet, SimError> {
    config.validate()?;
    let sheet = build_sheet(params.nx, params.ny, params.width_mm, params.height_mm, config.clamp_height_mm)?;
    let (sheet, heat) = stage_heat(sheet, config)?;
    let (sheet, press) = stage_press(sheet, mold, config)?;
    let mut formed = stage_vacuum(sheet, mold, config)?;
    formed.stage_log.splice(0..0, [heat, press]);
    if let Some(failed) = formed.stage_log.iter().find(|r| !r.converged) {
        let stage = failed.stage;
        return Err(SimError::NoConvergence {
            stage,
            partial: Box::new(formed),
        });
    }
    Ok(formed)
}

#[cfg(test)]
mod tests;
