//! The `.formcast.json` project file.
//!
//! A project bundles the mold, forming parameters, the circuit design and
//! the print stack, plus optional cached results. Cached results are
//! dropped whenever an input they depend on changes.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitDesign, CircuitError};
use crate::flatten::{FlatLayout, LayerStack};
use crate::geometry::{build_sheet, parse_stl, GeometryError, MoldMesh, Vec3, VertexState};
use crate::simulator::{FormedSheet, SheetParams, SimConfig, StageReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const PROJECT_FILE: &str = ".formcast.json";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("unsupported project schema version {found}, expected {SCHEMA_VERSION}")]
    UnsupportedSchema { found: u64 },
    #[error("malformed project file: {0}")]
    Malformed(String),
    #[error("project has no mold")]
    NoMold,
    #[error("mold: {0}")]
    Mold(#[from] GeometryError),
    #[error("the sheet grid cannot change while the design has features")]
    GridInUse,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MoldSource {
    /// STL bytes stored in the project, base64 encoded.
    Embedded { stl_base64: String },
    /// STL file, relative paths resolved against the project directory.
    Path { path: String },
}

/// Formed sheet as stored in the project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormedCache {
    pub positions: Vec<[f64; 3]>,
    pub vertex_state: Vec<VertexState>,
    pub stage_log: Vec<StageReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    schema_version: u32,
    name: String,
    mold: Option<MoldSource>,
    sim_config: SimConfig,
    design: CircuitDesign,
    layer_stack: LayerStack,
    formed: Option<FormedCache>,
    flat: Option<FlatLayout>,
}

impl Project {
    pub fn new(name: impl Into<String>, grid: SheetParams, layer_count: usize) -> Result<Self, ProjectError> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            mold: None,
            sim_config: SimConfig::default(),
            design: CircuitDesign::new(grid, layer_count)?,
            layer_stack: LayerStack::default(),
            formed: None,
            flat: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn grid(&self) -> SheetParams {
        self.design.grid
    }

    /// Changes the sheet grid; only allowed on an empty design.
    pub fn set_grid(&mut self, grid: SheetParams) -> Result<(), ProjectError> {
        if grid == self.design.grid {
            return Ok(());
        }
        if !self.design.is_empty() {
            return Err(ProjectError::GridInUse);
        }
        self.design = CircuitDesign::new(grid, self.design.layer_count)?;
        self.invalidate_formed();
        Ok(())
    }

    pub fn mold_source(&self) -> Option<&MoldSource> {
        self.mold.as_ref()
    }

    /// Embeds STL bytes after checking that they parse as a mold.
    pub fn set_mold_stl(&mut self, bytes: &[u8]) -> Result<(), ProjectError> {
        MoldMesh::from_stl(&parse_stl(bytes)?)?;
        self.set_mold_source(MoldSource::Embedded {
            stl_base64: BASE64.encode(bytes),
        });
        Ok(())
    }

    pub fn set_mold_source(&mut self, source: MoldSource) {
        if self.mold.as_ref() != Some(&source) {
            self.mold = Some(source);
            self.invalidate_formed();
        }
    }

    /// Loads the mold, resting it centered on the bed.
    pub fn mold_mesh(&self, base_dir: &Path) -> Result<MoldMesh, ProjectError> {
        let bytes = match self.mold.as_ref().ok_or(ProjectError::NoMold)? {
            MoldSource::Embedded { stl_base64 } => BASE64
                .decode(stl_base64)
                .map_err(|e| ProjectError::Malformed(format!("embedded mold: {e}")))?,
            MoldSource::Path { path } => {
                let path = base_dir.join(path);
                std::fs::read(&path).map_err(|source| ProjectError::Io { path, source })?
            }
        };
        Ok(MoldMesh::from_stl(&parse_stl(&bytes)?)?.placed_on_bed())
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.sim_config
    }

    pub fn set_sim_config(&mut self, config: SimConfig) {
        if config != self.sim_config {
            self.sim_config = config;
            self.invalidate_formed();
        }
    }

    pub fn design(&self) -> &CircuitDesign {
        &self.design
    }

    /// Mutable design access; drops the flat layout, which depends on it.
    pub fn design_mut(&mut self) -> &mut CircuitDesign {
        self.flat = None;
        &mut self.design
    }

    pub fn layer_stack(&self) -> &LayerStack {
        &self.layer_stack
    }

    pub fn set_layer_stack(&mut self, stack: LayerStack) {
        self.layer_stack = stack;
    }

    fn invalidate_formed(&mut self) {
        self.formed = None;
        self.flat = None;
    }

    pub fn has_formed(&self) -> bool {
        self.formed.is_some()
    }

    pub fn set_formed(&mut self, formed: &FormedSheet) {
        self.formed = Some(FormedCache {
            positions: formed.sheet.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            vertex_state: formed.sheet.vertex_state.clone(),
            stage_log: formed.stage_log.clone(),
        });
        self.flat = None;
    }

    /// Rebuilds the cached formed sheet.
    pub fn formed(&self) -> Option<FormedSheet> {
        let cache = self.formed.as_ref()?;
        let g = self.design.grid;
        let mut sheet = build_sheet(g.nx, g.ny, g.width_mm, g.height_mm, self.sim_config.clamp_height_mm).ok()?;
        sheet.positions = cache.positions.iter().map(|&[x, y, z]| Vec3::new(x, y, z)).collect();
        sheet.vertex_state = cache.vertex_state.clone();
        Some(FormedSheet::new(sheet, cache.stage_log.clone()))
    }

    pub fn flat(&self) -> Option<&FlatLayout> {
        self.flat.as_ref()
    }

    pub fn set_flat(&mut self, layout: FlatLayout) {
        self.flat = Some(layout);
    }

    /// Canonical JSON: keys in a fixed order, shortest round-trip floats.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("project serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ProjectError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ProjectError::Malformed(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ProjectError::Malformed("missing schema_version".into()))?;
        if found != SCHEMA_VERSION as u64 {
            return Err(ProjectError::UnsupportedSchema { found });
        }
        let project: Project = serde_json::from_value(value).map_err(|e| ProjectError::Malformed(e.to_string()))?;
        project.design.validate()?;
        if let Some(cache) = &project.formed {
            let n = project.design.grid.nx * project.design.grid.ny;
            if cache.positions.len() != n || cache.vertex_state.len() != n {
                return Err(ProjectError::Malformed(format!("formed cache does not have {n} vertices")));
            }
        }
        Ok(project)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProjectError> {
        std::fs::write(path, self.to_json()).map_err(|source| ProjectError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProjectError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProjectError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::{write_stl, StlFormat};
    use crate::simulator::simulate;

    fn stl_bytes(mold: &MoldMesh) -> Vec<u8> {
        write_stl(&mold.to_stl("mold"), StlFormat::Binary).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let mut p = Project::new("dome", SheetParams::square(9, 130.0), 2).unwrap();
        p.set_mold_stl(&stl_bytes(&fixtures::hemisphere_mold(25.0, 24, 8))).unwrap();
        p.design_mut().add_trace(&[20, 24], 0, 1.5).unwrap();
        p.design_mut().add_pad(&[30], 1, true).unwrap();
        let mold = p.mold_mesh(Path::new(".")).unwrap();
        let formed = simulate(&mold, p.sim_config(), &p.grid()).unwrap();
        p.set_formed(&formed);
        let first = p.to_json();
        let loaded = Project::from_json(&first).unwrap();
        assert_eq!(loaded, p);
        assert_eq!(loaded.to_json(), first);
        assert_eq!(loaded.formed().unwrap().sheet.positions, formed.sheet.positions);
    }

    #[test]
    fn caches_follow_their_inputs() {
        let mut p = Project::new("box", SheetParams::square(7, 130.0), 1).unwrap();
        p.set_mold_stl(&stl_bytes(&fixtures::box_mold(30.0, 30.0, 10.0))).unwrap();
        let mold = p.mold_mesh(Path::new(".")).unwrap();
        let formed = simulate(&mold, p.sim_config(), &p.grid()).unwrap();
        p.set_formed(&formed);
        p.set_sim_config(p.sim_config().clone());
        assert!(p.has_formed());
        p.set_sim_config(SimConfig {
            pull_step_mm: 0.25,
            ..p.sim_config().clone()
        });
        assert!(!p.has_formed());

        p.set_formed(&formed);
        p.set_mold_stl(&stl_bytes(&fixtures::box_mold(30.0, 30.0, 12.0))).unwrap();
        assert!(!p.has_formed());
    }

    #[test]
    fn schema_version_is_checked() {
        let p = Project::new("x", SheetParams::square(5, 100.0), 1).unwrap();
        let text = p.to_json().replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(matches!(Project::from_json(&text), Err(ProjectError::UnsupportedSchema { found: 7 })));
        assert!(matches!(Project::from_json("{}"), Err(ProjectError::Malformed(_))));
    }

    #[test]
    fn grid_is_locked_by_features() {
        let mut p = Project::new("x", SheetParams::square(5, 100.0), 1).unwrap();
        p.set_grid(SheetParams::square(7, 100.0)).unwrap();
        p.design_mut().add_trace(&[8, 10], 0, 1.5).unwrap();
        assert!(matches!(p.set_grid(SheetParams::square(9, 100.0)), Err(ProjectError::GridInUse)));
    }

    #[test]
    fn mold_path_is_resolved_against_the_project() {
        let dir = std::env::temp_dir().join(format!("formcast-project-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("m.stl"), stl_bytes(&fixtures::box_mold(20.0, 20.0, 5.0))).unwrap();
        let mut p = Project::new("x", SheetParams::square(5, 100.0), 1).unwrap();
        p.set_mold_source(MoldSource::Path { path: "m.stl".into() });
        let mold = p.mold_mesh(&dir).unwrap();
        assert!((mold.top() - 5.0).abs() < 1e-6);
        assert!(matches!(p.mold_mesh(Path::new("/nonexistent")), Err(ProjectError::Io { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn corrupt_cache_is_rejected() {
        let mut p = Project::new("x", SheetParams::square(5, 100.0), 1).unwrap();
        p.formed = Some(FormedCache {
            positions: vec![[0.0; 3]],
            vertex_state: vec![VertexState::Free],
            stage_log: vec![],
        });
        assert!(matches!(Project::from_json(&p.to_json()), Err(ProjectError::Malformed(_))));
    }
}
