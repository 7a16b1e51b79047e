//! `formcast` subcommands and their exit codes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use formcast_core::analysis::{compute_stretch, StretchField};
use formcast_core::geometry::{parse_stl, write_stl, MoldMesh, StlFormat};
use formcast_core::project::{Project, ProjectError, PROJECT_FILE};
use formcast_core::simulator::{simulate, FormedSheet, SheetParams, SimConfig, SimError, StageReport};
use serde::Serialize;

use crate::pipeline::{export_files, PipelineError};
use crate::service;

pub const DEFAULT_PORT: u16 = 8417;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Parse = 1,
    NoConvergence = 2,
    Io = 3,
    Violations = 4,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug, Parser)]
#[command(name = "formcast", version, about = "Vacuum-forming pipeline for printed circuit sheets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Form a sheet over a mold and write the formed mesh and stretch field.
    Simulate(SimulateArgs),
    /// Write one STL per material for a project's flattened circuit.
    Export(ExportArgs),
    /// Run the local design service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Mold STL, binary or ASCII.
    #[arg(long)]
    pub mold: PathBuf,
    /// Vertices per sheet side.
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u32).range(2..))]
    pub grid: u32,
    /// Sheet side length, mm.
    #[arg(long, default_value_t = 130.0)]
    pub size: f64,
    /// Formed mesh output.
    #[arg(long, default_value = "formed.stl")]
    pub out: PathBuf,
    /// Stretch report output; defaults to stretch.json next to the mesh.
    #[arg(long)]
    pub stretch: Option<PathBuf>,
    /// Simulation settings as JSON; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub young_modulus: Option<f64>,
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub clamp_height: Option<f64>,
    #[arg(long)]
    pub pull_step: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Project file, or a directory holding `.formcast.json`.
    pub project: PathBuf,
    /// Output directory; defaults to the project's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FORMCAST_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Project file to load and keep saved.
    #[arg(long)]
    pub project: Option<PathBuf>,
}

pub fn run<I, T>(args: I) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Parse } else { Exit::Ok };
        }
    };
    match cli.command {
        Command::Simulate(a) => run_simulate(&a),
        Command::Export(a) => run_export(&a),
        Command::Serve(a) => run_serve(&a),
    }
}

fn fail(code: Exit, msg: impl std::fmt::Display) -> Exit {
    eprintln!("formcast: {msg}");
    code
}

#[derive(Serialize)]
struct StretchReport<'a> {
    converged: bool,
    stage_log: &'a [StageReport],
    unreached: &'a [usize],
    stretch: StretchField,
}

fn read(path: &Path) -> Result<Vec<u8>, Exit> {
    std::fs::read(path).map_err(|e| fail(Exit::Io, format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Exit> {
    std::fs::write(path, bytes).map_err(|e| fail(Exit::Io, format!("cannot write {}: {e}", path.display())))
}

fn simulate_config(a: &SimulateArgs) -> Result<SimConfig, Exit> {
    let mut config = match &a.config {
        Some(path) => serde_json::from_slice(&read(path)?)
            .map_err(|e| fail(Exit::Parse, format!("{}: {e}", path.display())))?,
        None => SimConfig::default(),
    };
    if let Some(v) = a.young_modulus {
        config.young_modulus_pa = v;
    }
    if let Some(v) = a.mass {
        config.sheet_mass_kg = v;
    }
    if let Some(v) = a.clamp_height {
        config.clamp_height_mm = v;
    }
    if let Some(v) = a.pull_step {
        config.pull_step_mm = v;
    }
    if let Some(v) = a.max_iterations {
        config.max_iterations = v;
    }
    config.validate().map_err(|e| fail(Exit::Parse, e))?;
    Ok(config)
}

fn write_formed(a: &SimulateArgs, formed: &FormedSheet) -> Result<(), Exit> {
    let stl = write_stl(&formed.sheet.to_stl("formed"), StlFormat::Binary).map_err(|e| fail(Exit::Io, e))?;
    write(&a.out, &stl)?;
    let stretch_path = a.stretch.clone().unwrap_or_else(|| a.out.with_file_name("stretch.json"));
    let report = StretchReport {
        converged: formed.converged(),
        stage_log: &formed.stage_log,
        unreached: &formed.unreached,
        stretch: compute_stretch(formed),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&stretch_path, json.as_bytes())
}

fn run_simulate(a: &SimulateArgs) -> Exit {
    let inner = || -> Result<Exit, Exit> {
        let config = simulate_config(a)?;
        let bytes = read(&a.mold)?;
        let doc = parse_stl(&bytes).map_err(|e| fail(Exit::Parse, format!("{}: {e}", a.mold.display())))?;
        let mold = MoldMesh::from_stl(&doc)
            .map_err(|e| fail(Exit::Parse, format!("{}: {e}", a.mold.display())))?
            .placed_on_bed();
        let params = SheetParams::square(a.grid as usize, a.size);
        match simulate(&mold, &config, &params) {
            Ok(formed) => {
                write_formed(a, &formed)?;
                Ok(Exit::Ok)
            }
            Err(SimError::NoConvergence { stage, partial }) => {
                write_formed(a, &partial)?;
                Ok(fail(Exit::NoConvergence, format!("{stage:?} stage did not converge; partial result written")))
            }
            Err(e) => Err(fail(Exit::Parse, e)),
        }
    };
    inner().unwrap_or_else(|code| code)
}

/// Project file named by `path`, which may be the file or its directory.
pub fn project_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(PROJECT_FILE)
    } else {
        path.to_path_buf()
    }
}

fn run_export(a: &ExportArgs) -> Exit {
    let file = project_file(&a.project);
    let base_dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut project = match Project::load(&file) {
        Ok(p) => p,
        Err(e @ ProjectError::Io { .. }) => return fail(Exit::Io, e),
        Err(e) => return fail(Exit::Parse, format!("{}: {e}", file.display())),
    };
    let export = match export_files(&mut project, &base_dir) {
        Ok(x) => x,
        Err(PipelineError::Violations(v)) => {
            eprintln!("{}", serde_json::to_string_pretty(&v).expect("violations serialize"));
            return Exit::Violations;
        }
        Err(PipelineError::NoConvergence(_)) => return fail(Exit::NoConvergence, "simulation did not converge"),
        Err(PipelineError::Project(e @ ProjectError::Io { .. })) => return fail(Exit::Io, e),
        Err(e) => return fail(Exit::Parse, e),
    };
    let out_dir = a.out_dir.clone().unwrap_or(base_dir);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        return fail(Exit::Io, format!("cannot create {}: {e}", out_dir.display()));
    }
    for (name, bytes) in &export.files {
        if let Err(code) = write(&out_dir.join(name), bytes) {
            return code;
        }
    }
    let manifest = serde_json::to_string_pretty(&export.manifest).expect("manifest serializes");
    if let Err(code) = write(&out_dir.join(format!("{}_manifest.json", project.name())), manifest.as_bytes()) {
        return code;
    }
    println!("{manifest}");
    Exit::Ok
}

fn run_serve(a: &ServeArgs) -> Exit {
    let session = match &a.project {
        Some(path) => {
            let file = project_file(path);
            match service::Session::open(&file) {
                Ok(s) => s,
                Err(e @ ProjectError::Io { .. }) => return fail(Exit::Io, e),
                Err(e) => return fail(Exit::Parse, e),
            }
        }
        None => service::Session::new(Project::new("untitled", SheetParams::default(), 1).expect("default grid is valid")),
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return fail(Exit::Io, e),
    };
    match runtime.block_on(service::serve(session, a.port)) {
        Ok(()) => Exit::Ok,
        Err(e) => fail(Exit::Io, format!("port {}: {e}", a.port)),
    }
}
