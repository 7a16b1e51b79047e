//! Conformal circuit: traces along sheet vertices, pads over faces, vias
//! between layers, and the design-rule check that gates export.

mod drc;
mod path;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use drc::{check_design_rules, Violation};
pub use path::complete_path;

use crate::simulator::SheetParams;

pub type FeatureId = u64;

/// Size of the layer color palette; layer `l` uses color `l % PALETTE_SIZE`.
pub const PALETTE_SIZE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("vertex {0} is outside the grid")]
    InvalidVertex(usize),
    #[error("face {0} is outside the grid")]
    InvalidFace(usize),
    #[error("layer {layer} out of range for {layer_count} layers")]
    LayerOutOfRange { layer: usize, layer_count: usize },
    #[error("no grid path from vertex {from} to vertex {to}")]
    DisconnectedPick { from: usize, to: usize },
    #[error("trace width {width_mm} mm is below the {min_mm} mm minimum")]
    WidthTooSmall { width_mm: f64, min_mm: f64 },
    #[error("a trace needs at least two distinct vertices")]
    PathTooShort,
    #[error("trace doubles back at vertex {0}")]
    Backtracking(usize),
    #[error("a pad needs at least one face")]
    EmptyPad,
    #[error("pad faces are not edge-connected")]
    NotConnected,
    #[error("layer {0} is buried; only outer layers can be exposed")]
    BuriedExposure(usize),
    #[error("via radius {radius_mm} mm is below the {min_mm} mm minimum")]
    ViaRadiusTooSmall { radius_mm: f64, min_mm: f64 },
    #[error("via span {0}..{1} must go from a lower to a higher layer")]
    InvalidLayerSpan(usize, usize),
    #[error("no feature with id {0}")]
    UnknownFeature(FeatureId),
    #[error("layer count must be at least 1")]
    NoLayers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Conductive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: FeatureId,
    pub path: Vec<usize>,
    pub layer: usize,
    pub width_mm: f64,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pad {
    pub id: FeatureId,
    /// Sorted face indices.
    pub faces: Vec<usize>,
    pub layer: usize,
    pub exposed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Via {
    pub id: FeatureId,
    pub vertex: usize,
    pub radius_mm: f64,
    pub layer_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feature {
    Trace(Trace),
    Pad(Pad),
    Via(Via),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignRules {
    pub min_trace_width_mm: f64,
    pub min_clearance_mm: f64,
    pub boundary_margin_mm: f64,
    pub min_via_radius_mm: f64,
    /// Copper-style land added around a via on every layer it spans.
    pub via_ring_mm: f64,
}

impl Default for DesignRules {
    fn default() -> Self {
        Self {
            min_trace_width_mm: 1.5,
            min_clearance_mm: 1.0,
            boundary_margin_mm: 5.0,
            min_via_radius_mm: 0.4,
            via_ring_mm: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitDesign {
    pub grid: SheetParams,
    pub layer_count: usize,
    pub layer_colors: Vec<usize>,
    pub rules: DesignRules,
    pub traces: Vec<Trace>,
    pub pads: Vec<Pad>,
    pub vias: Vec<Via>,
    next_id: FeatureId,
}

impl CircuitDesign {
    pub fn new(grid: SheetParams, layer_count: usize) -> Result<Self, CircuitError> {
        if layer_count == 0 {
            return Err(CircuitError::NoLayers);
        }
        Ok(Self {
            grid,
            layer_count,
            layer_colors: (0..layer_count).map(layer_color).collect(),
            rules: DesignRules::default(),
            traces: Vec::new(),
            pads: Vec::new(),
            vias: Vec::new(),
            next_id: 1,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty() && self.pads.is_empty() && self.vias.is_empty()
    }

    pub fn set_layer_count(&mut self, layer_count: usize) -> Result<(), CircuitError> {
        if layer_count == 0 {
            return Err(CircuitError::NoLayers);
        }
        let highest = self
            .traces
            .iter()
            .map(|t| t.layer)
            .chain(self.pads.iter().map(|p| p.layer))
            .chain(self.vias.iter().map(|v| v.layer_span.1))
            .max();
        if let Some(layer) = highest.filter(|&l| l >= layer_count) {
            return Err(CircuitError::LayerOutOfRange { layer, layer_count });
        }
        self.layer_count = layer_count;
        self.layer_colors = (0..layer_count).map(layer_color).collect();
        Ok(())
    }

    fn vertex_count(&self) -> usize {
        self.grid.nx * self.grid.ny
    }

    fn face_count(&self) -> usize {
        (self.grid.nx - 1) * (self.grid.ny - 1)
    }

    fn check_layer(&self, layer: usize) -> Result<(), CircuitError> {
        if layer >= self.layer_count {
            return Err(CircuitError::LayerOutOfRange {
                layer,
                layer_count: self.layer_count,
            });
        }
        Ok(())
    }

    fn take_id(&mut self) -> FeatureId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Completes the picks into a grid path and appends the trace.
    pub fn add_trace(&mut self, picks: &[usize], layer: usize, width_mm: f64) -> Result<&Trace, CircuitError> {
        self.check_layer(layer)?;
        if !(width_mm >= self.rules.min_trace_width_mm) {
            return Err(CircuitError::WidthTooSmall {
                width_mm,
                min_mm: self.rules.min_trace_width_mm,
            });
        }
        if let Some(&v) = picks.iter().find(|&&v| v >= self.vertex_count()) {
            return Err(CircuitError::InvalidVertex(v));
        }
        let path = complete_path(self.grid.nx, self.grid.ny, picks)?;
        let id = self.take_id();
        self.traces.push(Trace {
            id,
            path,
            layer,
            width_mm,
            material: Material::Conductive,
        });
        Ok(self.traces.last().expect("just pushed"))
    }

    pub fn add_pad(&mut self, faces: &[usize], layer: usize, exposed: bool) -> Result<&Pad, CircuitError> {
        self.check_layer(layer)?;
        if faces.is_empty() {
            return Err(CircuitError::EmptyPad);
        }
        if let Some(&f) = faces.iter().find(|&&f| f >= self.face_count()) {
            return Err(CircuitError::InvalidFace(f));
        }
        let faces: BTreeSet<usize> = faces.iter().copied().collect();
        if !faces_connected(self.grid.nx - 1, &faces) {
            return Err(CircuitError::NotConnected);
        }
        if exposed && layer != 0 && layer != self.layer_count - 1 {
            return Err(CircuitError::BuriedExposure(layer));
        }
        let id = self.take_id();
        self.pads.push(Pad {
            id,
            faces: faces.into_iter().collect(),
            layer,
            exposed,
        });
        Ok(self.pads.last().expect("just pushed"))
    }

    pub fn add_via(&mut self, vertex: usize, radius_mm: f64, layer_span: (usize, usize)) -> Result<&Via, CircuitError> {
        if vertex >= self.vertex_count() {
            return Err(CircuitError::InvalidVertex(vertex));
        }
        if !(radius_mm >= self.rules.min_via_radius_mm) {
            return Err(CircuitError::ViaRadiusTooSmall {
                radius_mm,
                min_mm: self.rules.min_via_radius_mm,
            });
        }
        let (from, to) = layer_span;
        if from >= to {
            return Err(CircuitError::InvalidLayerSpan(from, to));
        }
        self.check_layer(to)?;
        let id = self.take_id();
        self.vias.push(Via {
            id,
            vertex,
            radius_mm,
            layer_span,
        });
        Ok(self.vias.last().expect("just pushed"))
    }

    pub fn remove_feature(&mut self, id: FeatureId) -> Result<Feature, CircuitError> {
        if let Some(i) = self.traces.iter().position(|t| t.id == id) {
            return Ok(Feature::Trace(self.traces.remove(i)));
        }
        if let Some(i) = self.pads.iter().position(|p| p.id == id) {
            return Ok(Feature::Pad(self.pads.remove(i)));
        }
        if let Some(i) = self.vias.iter().position(|v| v.id == id) {
            return Ok(Feature::Via(self.vias.remove(i)));
        }
        Err(CircuitError::UnknownFeature(id))
    }

    /// Re-checks every structural invariant, for designs loaded from disk.
    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.layer_count == 0 {
            return Err(CircuitError::NoLayers);
        }
        let mut scratch = Self::new(self.grid, self.layer_count)?;
        scratch.rules = self.rules.clone();
        for t in &self.traces {
            let rebuilt = scratch.add_trace(&t.path, t.layer, t.width_mm)?;
            if rebuilt.path != t.path {
                return Err(CircuitError::Backtracking(t.path[0]));
            }
        }
        for p in &self.pads {
            scratch.add_pad(&p.faces, p.layer, p.exposed)?;
        }
        for v in &self.vias {
            scratch.add_via(v.vertex, v.radius_mm, v.layer_span)?;
        }
        Ok(())
    }
}

pub fn layer_color(layer: usize) -> usize {
    layer % PALETTE_SIZE
}

fn faces_connected(faces_per_row: usize, faces: &BTreeSet<usize>) -> bool {
    let Some(&start) = faces.iter().next() else {
        return false;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(f) = queue.pop_front() {
        let (i, j) = (f % faces_per_row, f / faces_per_row);
        let candidates = [
            (i > 0).then(|| f - 1),
            (i + 1 < faces_per_row).then(|| f + 1),
            (j > 0).then(|| f - faces_per_row),
            Some(f + faces_per_row),
        ];
        for n in candidates.into_iter().flatten() {
            if faces.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == faces.len()
}
