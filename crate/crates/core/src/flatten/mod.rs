//! Pre-distortion of the formed design onto the flat sheet, thickness
//! compensation and layered multi-material solids for printing.

use std::collections::HashMap;

use geo::{unary_union, Area, BooleanOps, BoundingRect, Contains, Coord, LineString, MultiPolygon, Point, Polygon};
use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::circuit::{check_design_rules, CircuitDesign, FeatureId, Violation};
use crate::geometry::{triangle_area, SheetMesh, StlDocument, StlTriangle, Vec2, Vec3};
use crate::simulator::FormedSheet;

/// Segments used for round joins and via discs.
pub const CIRCLE_SEGMENTS: usize = 32;

#[derive(Debug, Error)]
pub enum FlattenError {
    #[error("design has {} rule violations", .0.len())]
    DesignRuleViolationsPresent(Vec<Violation>),
    #[error("invalid layer stack: {0}")]
    InvalidStack(String),
    #[error("invalid thickness target: {0}")]
    InvalidThickness(String),
    #[error("generated {material} solid is not a closed manifold")]
    NonManifoldOutput { material: &'static str },
}

/// Simple polygon with holes in the rest plane, mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatPolygon {
    pub exterior: Vec<[f64; 2]>,
    pub holes: Vec<Vec<[f64; 2]>>,
}

impl FlatPolygon {
    fn from_geo(p: &Polygon<f64>) -> Self {
        let ring = |ls: &LineString<f64>| ls.coords().map(|c| [c.x, c.y]).collect::<Vec<_>>();
        Self {
            exterior: ring(p.exterior()),
            holes: p.interiors().iter().map(ring).collect(),
        }
    }

    fn to_geo(&self) -> Polygon<f64> {
        let ring = |pts: &[[f64; 2]]| LineString::from(pts.iter().map(|&[x, y]| Coord { x, y }).collect::<Vec<_>>());
        Polygon::new(ring(&self.exterior), self.holes.iter().map(|h| ring(h)).collect())
    }

    pub fn area(&self) -> f64 {
        self.to_geo().unsigned_area()
    }
}

fn from_multi(m: &MultiPolygon<f64>) -> Vec<FlatPolygon> {
    m.0.iter().map(FlatPolygon::from_geo).collect()
}

fn to_multi(polys: &[FlatPolygon]) -> MultiPolygon<f64> {
    MultiPolygon(polys.iter().map(FlatPolygon::to_geo).collect())
}

pub fn outline_area(polys: &[FlatPolygon]) -> f64 {
    to_multi(polys).unsigned_area()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTrace {
    pub id: FeatureId,
    pub layer: usize,
    pub width_mm: f64,
    /// Sheet vertices along the trace; the link back to the formed surface.
    pub vertices: Vec<usize>,
    /// Rest positions of `vertices`.
    pub polyline: Vec<[f64; 2]>,
    pub outline: Vec<FlatPolygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatPad {
    pub id: FeatureId,
    pub layer: usize,
    pub exposed: bool,
    pub faces: Vec<usize>,
    pub outline: Vec<FlatPolygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatVia {
    pub id: FeatureId,
    pub vertex: usize,
    pub center: [f64; 2],
    pub radius_mm: f64,
    pub layer_span: (usize, usize),
}

/// The circuit drawn in the flat, printable configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatLayout {
    pub sheet_width_mm: f64,
    pub sheet_height_mm: f64,
    pub layer_count: usize,
    pub traces: Vec<FlatTrace>,
    pub pads: Vec<FlatPad>,
    pub vias: Vec<FlatVia>,
}

impl FlatLayout {
    /// Exposure masks: outlines of exposed pads, per layer.
    pub fn exposure_masks(&self) -> Vec<(usize, Vec<FlatPolygon>)> {
        self.pads
            .iter()
            .filter(|p| p.exposed)
            .map(|p| (p.layer, p.outline.clone()))
            .collect()
    }
}

/// Maps the design onto rest positions. Vertex indices are kept, so the
/// formed polyline of a flat trace is `positions[v]` for its vertices.
pub fn flatten_design(design: &CircuitDesign, formed: &FormedSheet) -> Result<FlatLayout, FlattenError> {
    let sheet = &formed.sheet;
    let violations = check_design_rules(design, sheet);
    if !violations.is_empty() {
        return Err(FlattenError::DesignRuleViolationsPresent(violations));
    }
    let rest = |v: usize| sheet.rest_positions[v];
    let traces = design
        .traces
        .iter()
        .map(|t| {
            let pts: Vec<Vec2> = t.path.iter().map(|&v| rest(v)).collect();
            FlatTrace {
                id: t.id,
                layer: t.layer,
                width_mm: t.width_mm,
                vertices: t.path.clone(),
                polyline: pts.iter().map(|p| [p.x, p.y]).collect(),
                outline: from_multi(&stroke_outline(&pts, t.width_mm)),
            }
        })
        .collect();
    let pads = design
        .pads
        .iter()
        .map(|p| {
            FlatPad {
                id: p.id,
                layer: p.layer,
                exposed: p.exposed,
                faces: p.faces.clone(),
                outline: face_region_outline(sheet, &p.faces),
            }
        })
        .collect();
    let vias = design
        .vias
        .iter()
        .map(|v| FlatVia {
            id: v.id,
            vertex: v.vertex,
            center: [rest(v.vertex).x, rest(v.vertex).y],
            radius_mm: v.radius_mm,
            layer_span: v.layer_span,
        })
        .collect();
    Ok(FlatLayout {
        sheet_width_mm: sheet.width(),
        sheet_height_mm: sheet.height(),
        layer_count: design.layer_count,
        traces,
        pads,
        vias,
    })
}

/// Exact outline of a set of grid quads in the rest plane. Boundary loops
/// take the sharpest right turn at pinch vertices, so counter-clockwise
/// loops are outer boundaries and clockwise loops are holes.
pub fn face_region_outline(sheet: &SheetMesh, faces: &[usize]) -> Vec<FlatPolygon> {
    let mut directed: HashMap<(usize, usize), bool> = HashMap::new();
    for &f in faces {
        let [a, b, c, d] = sheet.face_vertices(f);
        for (u, v) in [(a, b), (b, c), (c, d), (d, a)] {
            if directed.remove(&(v, u)).is_none() {
                directed.insert((u, v), true);
            }
        }
    }
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut starts: Vec<(usize, usize)> = directed.keys().copied().collect();
    starts.sort_unstable();
    for &(u, v) in &starts {
        outgoing.entry(u).or_default().push(v);
    }
    let pos = |v: usize| sheet.rest_positions[v];
    let mut loops: Vec<Vec<usize>> = Vec::new();
    for (u0, v0) in starts {
        if !directed.contains_key(&(u0, v0)) {
            continue;
        }
        let mut ring = Vec::new();
        let (mut u, mut v) = (u0, v0);
        loop {
            directed.remove(&(u, v));
            outgoing.get_mut(&u).expect("edge origin").retain(|&w| w != v);
            ring.push(u);
            if v == u0 {
                break;
            }
            let d_in = pos(v) - pos(u);
            let turn = |w: usize| {
                let d = pos(w) - pos(v);
                d_in.x * d.y - d_in.y * d.x
            };
            let next = outgoing[&v]
                .iter()
                .copied()
                .min_by(|&a, &b| turn(a).total_cmp(&turn(b)))
                .expect("boundary loops are closed");
            u = v;
            v = next;
        }
        loops.push(ring);
    }
    let signed = |ring: &[usize]| {
        (0..ring.len())
            .map(|k| {
                let (p, q) = (pos(ring[k]), pos(ring[(k + 1) % ring.len()]));
                p.x * q.y - q.x * p.y
            })
            .sum::<f64>()
            / 2.0
    };
    let coords = |ring: &[usize]| {
        let mut pts: Vec<[f64; 2]> = ring.iter().map(|&v| [pos(v).x, pos(v).y]).collect();
        pts.push(pts[0]);
        pts
    };
    let (outer, holes): (Vec<_>, Vec<_>) = loops.into_iter().partition(|r| signed(r) > 0.0);
    let mut polys: Vec<FlatPolygon> = outer
        .iter()
        .map(|r| FlatPolygon {
            exterior: coords(r),
            holes: vec![],
        })
        .collect();
    for h in holes {
        let (a, b) = (pos(h[0]), pos(h[1]));
        let mid = Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
        let owner = polys
            .iter()
            .position(|p| Polygon::new(p.to_geo().exterior().clone(), vec![]).contains(&mid))
            .unwrap_or(0);
        if let Some(p) = polys.get_mut(owner) {
            p.holes.push(coords(&h));
        }
    }
    polys
}

/// Vertex whose rest position is exactly `p`.
pub fn rest_vertex_at(sheet: &SheetMesh, p: [f64; 2]) -> Option<usize> {
    let i = ((p[0] + 0.5 * sheet.width()) / sheet.pitch_x()).round();
    let j = ((p[1] + 0.5 * sheet.height()) / sheet.pitch_y()).round();
    if i < 0.0 || j < 0.0 || i >= sheet.nx() as f64 || j >= sheet.ny() as f64 {
        return None;
    }
    let v = sheet.vertex(i as usize, j as usize);
    (sheet.rest_positions[v] == Vec2::new(p[0], p[1])).then_some(v)
}

fn disc(center: Vec2, radius: f64) -> Polygon<f64> {
    let ring: Vec<Coord<f64>> = (0..CIRCLE_SEGMENTS)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / CIRCLE_SEGMENTS as f64;
            Coord {
                x: center.x + radius * a.cos(),
                y: center.y + radius * a.sin(),
            }
        })
        .collect();
    Polygon::new(LineString::from(ring), vec![])
}

/// Constant-width outline of a polyline: flat caps, round joins.
fn stroke_outline(pts: &[Vec2], width: f64) -> MultiPolygon<f64> {
    let h = 0.5 * width;
    let mut corners = vec![pts[0]];
    for w in pts.windows(3) {
        let (a, b) = (w[1] - w[0], w[2] - w[1]);
        if (a.x * b.y - a.y * b.x).abs() > 1e-12 * a.norm() * b.norm() || a.dot(&b) < 0.0 {
            corners.push(w[1]);
        }
    }
    corners.push(pts[pts.len() - 1]);
    let pts = corners.as_slice();
    let mut parts = Vec::new();
    for w in pts.windows(2) {
        let d = w[1] - w[0];
        let n = Vec2::new(-d.y, d.x) * (h / d.norm());
        let ring = [w[0] - n, w[1] - n, w[1] + n, w[0] + n].map(|p| Coord { x: p.x, y: p.y });
        parts.push(Polygon::new(LineString::from(ring.to_vec()), vec![]));
    }
    for p in &pts[1..pts.len().saturating_sub(1)] {
        parts.push(disc(*p, h));
    }
    if parts.len() == 1 {
        return MultiPolygon(parts);
    }
    unary_union(&parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThicknessLimits {
    pub min_mm: f64,
    pub max_mm: f64,
}

impl Default for ThicknessLimits {
    fn default() -> Self {
        Self { min_mm: 0.3, max_mm: 3.0 }
    }
}

/// Printed thickness per quad that leaves a uniform `target_mm` after
/// forming, assuming the material keeps its volume while it stretches.
pub fn thickness_compensation_map(
    formed: &FormedSheet,
    target_mm: f64,
    limits: &ThicknessLimits,
) -> Result<Vec<f64>, FlattenError> {
    if !(target_mm > 0.0 && target_mm.is_finite()) {
        return Err(FlattenError::InvalidThickness(format!("target {target_mm} mm must be positive")));
    }
    if !(limits.min_mm > 0.0 && limits.min_mm <= limits.max_mm) {
        return Err(FlattenError::InvalidThickness("limits must satisfy 0 < min <= max".into()));
    }
    let sheet = &formed.sheet;
    Ok((0..sheet.face_count())
        .map(|f| {
            let rest: f64 = sheet
                .face_triangles(f)
                .iter()
                .map(|t| {
                    let [a, b, c] = t.map(|v| sheet.rest_position3(v));
                    triangle_area(&a, &b, &c)
                })
                .sum();
            (target_mm * sheet.formed_face_area(f) / rest).clamp(limits.min_mm, limits.max_mm)
        })
        .collect())
}

/// Vertical layout of the printed sheet.
///
/// Each circuit layer owns a trace slice followed by a cover slice above
/// it; layer 0 starts on the print bed. With the defaults one layer gives
/// a 0.9 mm sheet: traces in the lower 0.6 mm, 0.3 mm of cover on top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub print_layer_height_mm: f64,
    pub trace_height_mm: f64,
    pub cover_height_mm: f64,
}

impl Default for LayerStack {
    fn default() -> Self {
        Self {
            print_layer_height_mm: 0.3,
            trace_height_mm: 0.6,
            cover_height_mm: 0.3,
        }
    }
}

impl LayerStack {
    pub fn validate(&self) -> Result<(), FlattenError> {
        let h = self.print_layer_height_mm;
        if !(h > 0.0 && h.is_finite()) {
            return Err(FlattenError::InvalidStack("print layer height must be positive".into()));
        }
        for (name, v) in [("trace height", self.trace_height_mm), ("cover height", self.cover_height_mm)] {
            let k = v / h;
            if !(k >= 1.0 - 1e-9 && (k - k.round()).abs() < 1e-9) {
                return Err(FlattenError::InvalidStack(format!(
                    "{name} {v} mm is not a whole number of {h} mm print layers"
                )));
            }
        }
        Ok(())
    }

    fn trace_bands(&self) -> usize {
        (self.trace_height_mm / self.print_layer_height_mm).round() as usize
    }

    fn bands_per_layer(&self) -> usize {
        self.trace_bands() + (self.cover_height_mm / self.print_layer_height_mm).round() as usize
    }

    pub fn total_thickness_mm(&self, layer_count: usize) -> f64 {
        (layer_count.max(1) * self.bands_per_layer()) as f64 * self.print_layer_height_mm
    }

    /// Print layer boundaries from the bed to the top surface.
    pub fn band_levels(&self, layer_count: usize) -> Vec<f64> {
        (0..=layer_count.max(1) * self.bands_per_layer())
            .map(|k| k as f64 * self.print_layer_height_mm)
            .collect()
    }

    /// Bottom and top of the trace slice of `layer`.
    pub fn trace_slice(&self, layer: usize) -> (f64, f64) {
        let z0 = (layer * self.bands_per_layer()) as f64 * self.print_layer_height_mm;
        (z0, z0 + self.trace_bands() as f64 * self.print_layer_height_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrintMaterial {
    Substrate,
    Conductive,
}

impl PrintMaterial {
    pub fn name(self) -> &'static str {
        match self {
            PrintMaterial::Substrate => "substrate",
            PrintMaterial::Conductive => "conductive",
        }
    }

    pub fn file_name(self, project: &str) -> String {
        format!("{project}_{}.stl", self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrintModel {
    pub thickness_mm: f64,
    /// One closed solid per material, substrate first.
    pub solids: Vec<(PrintMaterial, StlDocument)>,
}

impl PrintModel {
    pub fn solid(&self, material: PrintMaterial) -> Option<&StlDocument> {
        self.solids.iter().find(|(m, _)| *m == material).map(|(_, s)| s)
    }

    /// All solids in one document, for previews.
    pub fn combined(&self, name: &str) -> StlDocument {
        let triangles = self.solids.iter().flat_map(|(_, s)| s.triangles.iter().cloned()).collect();
        StlDocument::new(name, triangles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Substrate,
    Conductive,
    Void,
}

struct BandRegions {
    conductive: MultiPolygon<f64>,
    void: MultiPolygon<f64>,
}

fn band_regions(layout: &FlatLayout, stack: &LayerStack, band: usize) -> BandRegions {
    let h = stack.print_layer_height_mm;
    let per = stack.bands_per_layer();
    let (layer, within) = (band / per, band % per);
    let in_trace = within < stack.trace_bands();
    let mut conductive: Vec<Polygon<f64>> = Vec::new();
    if in_trace {
        for t in layout.traces.iter().filter(|t| t.layer == layer) {
            conductive.extend(t.outline.iter().map(FlatPolygon::to_geo));
        }
        for p in layout.pads.iter().filter(|p| p.layer == layer) {
            conductive.extend(p.outline.iter().map(FlatPolygon::to_geo));
        }
    }
    let mid = (band as f64 + 0.5) * h;
    for v in &layout.vias {
        let bottom = stack.trace_slice(v.layer_span.0).0;
        let top = stack.trace_slice(v.layer_span.1).1;
        if mid > bottom && mid < top {
            conductive.push(disc(Vec2::new(v.center[0], v.center[1]), v.radius_mm));
        }
    }
    let mut void: Vec<Polygon<f64>> = Vec::new();
    let top_layer = layout.layer_count.max(1) - 1;
    if !in_trace && layer == top_layer {
        for p in layout.pads.iter().filter(|p| p.exposed && p.layer == top_layer) {
            void.extend(p.outline.iter().map(FlatPolygon::to_geo));
        }
    }
    let conductive = quantized(&unary_union(&conductive));
    let void = quantized(&unary_union(&void).difference(&conductive));
    BandRegions { conductive, void }
}

/// Grid step that every STL coordinate below 128 mm represents exactly.
const QUANTUM: f64 = 1.0 / (1u32 << 17) as f64;

fn snap(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

fn quantized(m: &MultiPolygon<f64>) -> MultiPolygon<f64> {
    let q = |ls: &LineString<f64>| {
        let mut pts: Vec<Coord<f64>> = ls
            .coords()
            .map(|c| Coord { x: snap(c.x), y: snap(c.y) })
            .collect();
        pts.dedup();
        LineString::from(pts)
    };
    MultiPolygon(m.0.iter().map(|p| Polygon::new(q(p.exterior()), p.interiors().iter().map(q).collect())).collect())
}

fn contains(m: &MultiPolygon<f64>, p: Point<f64>) -> bool {
    m.0.iter().any(|poly| {
        poly.bounding_rect()
            .is_some_and(|r| p.x() >= r.min().x && p.x() <= r.max().x && p.y() >= r.min().y && p.y() <= r.max().y)
            && poly.contains(&p)
    })
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn add_rings(cdt: &mut Cdt, m: &MultiPolygon<f64>) {
    for poly in &m.0 {
        for ring in std::iter::once(poly.exterior()).chain(poly.interiors()) {
            let handles: Vec<_> = ring
                .coords()
                .map(|c| cdt.insert(Point2::new(c.x, c.y)).expect("finite outline coordinates"))
                .collect();
            for w in handles.windows(2) {
                if w[0] != w[1] {
                    cdt.add_constraint_and_split(w[0], w[1], |p| Point2::new(snap(p.x), snap(p.y)));
                }
            }
        }
    }
}

/// Extrudes the flat layout into one closed solid per material.
///
/// Every print layer is split in 2D into conductive, void (exposure
/// cutouts over exposed top-layer pads) and substrate regions. A
/// triangulation conforming to all region boundaries turns the stack into
/// prism cells; each material's solid is bounded by the cell faces where
/// its membership changes.
pub fn generate_print_model(layout: &FlatLayout, stack: &LayerStack) -> Result<PrintModel, FlattenError> {
    stack.validate()?;
    let levels = stack.band_levels(layout.layer_count);
    let bands: Vec<BandRegions> = (0..levels.len() - 1).map(|b| band_regions(layout, stack, b)).collect();

    let (hw, hh) = (0.5 * layout.sheet_width_mm, 0.5 * layout.sheet_height_mm);
    let mut cdt = Cdt::new();
    let corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
    let footprint = MultiPolygon(vec![Polygon::new(LineString::from(corners.to_vec()), vec![])]);
    add_rings(&mut cdt, &footprint);
    let mut inserted: Vec<&MultiPolygon<f64>> = Vec::new();
    for m in bands.iter().flat_map(|b| [&b.conductive, &b.void]) {
        if !inserted.contains(&m) {
            add_rings(&mut cdt, m);
            inserted.push(m);
        }
    }

    let faces: Vec<[Vec2; 3]> = cdt
        .inner_faces()
        .map(|f| f.vertices().map(|v| Vec2::new(v.position().x, v.position().y)))
        .collect();
    let face_slot: HashMap<usize, usize> = cdt.inner_faces().enumerate().map(|(k, f)| (f.fix().index(), k)).collect();
    let cells: Vec<Vec<Cell>> = bands
        .iter()
        .map(|b| {
            faces
                .iter()
                .map(|t| {
                    let c = (t[0] + t[1] + t[2]) / 3.0;
                    let p = Point::new(c.x, c.y);
                    if contains(&b.conductive, p) {
                        Cell::Conductive
                    } else if contains(&b.void, p) {
                        Cell::Void
                    } else {
                        Cell::Substrate
                    }
                })
                .collect()
        })
        .collect();

    // Merge neighboring print layers with identical cells.
    let mut merged_levels = vec![levels[0]];
    let mut merged_cells: Vec<&Vec<Cell>> = Vec::new();
    for (b, row) in cells.iter().enumerate() {
        if merged_cells.last() == Some(&row) {
            *merged_levels.last_mut().unwrap() = levels[b + 1];
        } else {
            merged_cells.push(row);
            merged_levels.push(levels[b + 1]);
        }
    }

    let edges: Vec<(Vec2, Vec2, Option<usize>, Option<usize>)> = cdt
        .undirected_edges()
        .map(|e| {
            let d = e.as_directed();
            let slot = |f: spade::handles::FaceHandle<'_, spade::handles::PossiblyOuterTag, _, _, _, _>| {
                f.as_inner().map(|i| face_slot[&i.fix().index()])
            };
            let (from, to) = (d.from().position(), d.to().position());
            (Vec2::new(from.x, from.y), Vec2::new(to.x, to.y), slot(d.face()), slot(d.rev().face()))
        })
        .collect();

    let mut solids = Vec::new();
    for (material, cell) in [(PrintMaterial::Substrate, Cell::Substrate), (PrintMaterial::Conductive, Cell::Conductive)] {
        let is = |band: Option<usize>, face: Option<usize>| match (band, face) {
            (Some(b), Some(f)) => merged_cells[b][f] == cell,
            _ => false,
        };
        let mut tris = Vec::new();
        let bands_n = merged_cells.len();
        for (k, &z) in merged_levels.iter().enumerate() {
            let below = k.checked_sub(1);
            let above = (k < bands_n).then_some(k);
            for (f, t) in faces.iter().enumerate() {
                let (lo, hi) = (is(below, Some(f)), is(above, Some(f)));
                let [a, b, c] = t.map(|p| Vec3::new(p.x, p.y, z));
                if lo && !hi {
                    tris.push(StlTriangle::from_vertices(&a, &b, &c));
                } else if hi && !lo {
                    tris.push(StlTriangle::from_vertices(&a, &c, &b));
                }
            }
        }
        for k in 0..bands_n {
            let (z0, z1) = (merged_levels[k], merged_levels[k + 1]);
            for &(p, q, left, right) in &edges {
                let (l, r) = (is(Some(k), left), is(Some(k), right));
                let (from, to) = match (l, r) {
                    (true, false) => (p, q),
                    (false, true) => (q, p),
                    _ => continue,
                };
                let f0 = Vec3::new(from.x, from.y, z0);
                let t0 = Vec3::new(to.x, to.y, z0);
                let t1 = Vec3::new(to.x, to.y, z1);
                let f1 = Vec3::new(from.x, from.y, z1);
                tris.push(StlTriangle::from_vertices(&f0, &t0, &t1));
                tris.push(StlTriangle::from_vertices(&f0, &t1, &f1));
            }
        }
        let doc = StlDocument::new(material.name(), tris);
        if !doc.is_empty() && !is_closed_manifold(&doc) {
            return Err(FlattenError::NonManifoldOutput { material: material.name() });
        }
        if !doc.is_empty() || material == PrintMaterial::Substrate {
            solids.push((material, doc));
        }
    }
    Ok(PrintModel {
        thickness_mm: *levels.last().unwrap(),
        solids,
    })
}

/// Every edge is used exactly twice, once in each direction.
pub fn is_closed_manifold(doc: &StlDocument) -> bool {
    let key = |v: [f32; 3]| v.map(f32::to_bits);
    let mut uses: HashMap<([u32; 3], [u32; 3]), (u32, u32)> = HashMap::new();
    for t in &doc.triangles {
        for i in 0..3 {
            let (a, b) = (key(t.vertices[i]), key(t.vertices[(i + 1) % 3]));
            if a == b {
                return false;
            }
            if a < b {
                uses.entry((a, b)).or_default().0 += 1;
            } else {
                uses.entry((b, a)).or_default().1 += 1;
            }
        }
    }
    uses.values().all(|&u| u == (1, 1))
}
