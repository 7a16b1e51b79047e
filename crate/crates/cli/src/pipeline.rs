//! Steps shared by the command line and the service.

use std::path::Path;

use formcast_core::analysis::StretchField;
use formcast_core::circuit::Violation;
use formcast_core::flatten::{flatten_design, generate_print_model, FlattenError, PrintMaterial};
use formcast_core::geometry::{write_stl, GeometryError, StlFormat};
use formcast_core::project::{Project, ProjectError};
use formcast_core::simulator::{simulate, FormedSheet, SimError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error("simulation did not converge")]
    NoConvergence(Box<FormedSheet>),
    #[error("simulation failed: {0}")]
    Simulation(SimError),
    #[error("design has rule violations")]
    Violations(Vec<Violation>),
    #[error("print model: {0}")]
    Flatten(FlattenError),
    #[error("stl: {0}")]
    Stl(#[from] GeometryError),
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NoConvergence { partial, .. } => PipelineError::NoConvergence(partial),
            other => PipelineError::Simulation(other),
        }
    }
}

impl From<FlattenError> for PipelineError {
    fn from(e: FlattenError) -> Self {
        match e {
            FlattenError::DesignRuleViolationsPresent(v) => PipelineError::Violations(v),
            other => PipelineError::Flatten(other),
        }
    }
}

/// The cached formed sheet, or a fresh simulation stored in the project.
pub fn ensure_formed(project: &mut Project, base_dir: &Path) -> Result<FormedSheet, PipelineError> {
    if let Some(formed) = project.formed() {
        return Ok(formed);
    }
    let mold = project.mold_mesh(base_dir)?;
    let formed = simulate(&mold, project.sim_config(), &project.grid())?;
    project.set_formed(&formed);
    Ok(formed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub material: PrintMaterial,
    pub file: String,
    pub triangles: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub project: String,
    pub thickness_mm: f64,
    pub outputs: Vec<ManifestEntry>,
}

pub struct ExportFiles {
    pub manifest: Manifest,
    /// File name and binary STL bytes per material.
    pub files: Vec<(String, Vec<u8>)>,
}

/// Flattens the design and builds one binary STL per material.
pub fn export_files(project: &mut Project, base_dir: &Path) -> Result<ExportFiles, PipelineError> {
    let formed = ensure_formed(project, base_dir)?;
    let layout = flatten_design(project.design(), &formed)?;
    let model = generate_print_model(&layout, project.layer_stack())?;
    project.set_flat(layout);
    let mut files = Vec::new();
    let mut outputs = Vec::new();
    for (material, doc) in &model.solids {
        let file = material.file_name(project.name());
        let bytes = write_stl(doc, StlFormat::Binary)?;
        outputs.push(ManifestEntry {
            material: *material,
            file: file.clone(),
            triangles: doc.len(),
            bytes: bytes.len(),
        });
        files.push((file, bytes));
    }
    Ok(ExportFiles {
        manifest: Manifest {
            project: project.name().to_string(),
            thickness_mm: model.thickness_mm,
            outputs,
        },
        files,
    })
}

/// Formed mesh and stretch as flat JSON arrays.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshPayload {
    pub nx: usize,
    pub ny: usize,
    pub positions: Vec<f64>,
    pub quads: Vec<usize>,
    pub face_stretch: Vec<f64>,
    pub face_area_ratio: Vec<f64>,
    pub converged: bool,
}

pub fn mesh_payload(formed: &FormedSheet) -> MeshPayload {
    let sheet = &formed.sheet;
    let stretch = StretchField::from_sheet(sheet);
    MeshPayload {
        nx: sheet.nx(),
        ny: sheet.ny(),
        positions: sheet.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        quads: (0..sheet.face_count()).flat_map(|f| sheet.face_vertices(f)).collect(),
        face_stretch: stretch.face_mean_stretch(),
        face_area_ratio: stretch.face_area_ratio,
        converged: formed.converged(),
    }
}
