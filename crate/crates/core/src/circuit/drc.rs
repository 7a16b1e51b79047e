//! Design-rule check in the rest (flat) configuration.

use serde::{Deserialize, Serialize};

use super::{CircuitDesign, FeatureId, Pad};
use crate::geometry::{SheetMesh, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Two features on one layer closer than the minimum clearance.
    /// `a < b`.
    Clearance {
        layer: usize,
        a: FeatureId,
        b: FeatureId,
        clearance_mm: f64,
    },
    /// A via without a trace ending on it on one of its end layers.
    ViaNotConnected { via: FeatureId, layer: usize },
    /// A feature reaching into the clamp margin.
    BoundaryMargin { feature: FeatureId, distance_mm: f64 },
    /// The design was drawn on a different grid than the sheet.
    GridMismatch,
}

impl Violation {
    fn sort_key(&self) -> (u8, usize, FeatureId, FeatureId) {
        match *self {
            Violation::GridMismatch => (0, 0, 0, 0),
            Violation::Clearance { layer, a, b, .. } => (1, layer, a, b),
            Violation::ViaNotConnected { via, layer } => (2, layer, via, 0),
            Violation::BoundaryMargin { feature, .. } => (3, 0, feature, 0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Prim {
    Segment(Vec2, Vec2),
    Rect(Vec2, Vec2),
}

struct Shape {
    id: FeatureId,
    prims: Vec<Prim>,
    radius: f64,
    /// Vertices through which this feature may touch another.
    terminals: Vec<usize>,
    /// Vertices this feature owns; a terminal of another feature landing
    /// here counts as a connection.
    pins: Vec<usize>,
}

impl Shape {
    fn connected(&self, other: &Shape) -> bool {
        self.terminals.iter().any(|t| other.pins.contains(t)) || other.terminals.iter().any(|t| self.pins.contains(t))
    }
}

/// Reports clearance, via-connection and margin violations, sorted.
pub fn check_design_rules(design: &CircuitDesign, sheet: &SheetMesh) -> Vec<Violation> {
    if sheet.nx() != design.grid.nx || sheet.ny() != design.grid.ny {
        return vec![Violation::GridMismatch];
    }
    let rules = &design.rules;
    let rest = &sheet.rest_positions;
    let mut out = Vec::new();

    for layer in 0..design.layer_count {
        let shapes = layer_shapes(design, sheet, layer);
        for (i, a) in shapes.iter().enumerate() {
            for b in &shapes[i + 1..] {
                if a.connected(b) {
                    continue;
                }
                let clearance = shape_distance(a, b);
                if clearance < rules.min_clearance_mm {
                    out.push(Violation::Clearance {
                        layer,
                        a: a.id.min(b.id),
                        b: a.id.max(b.id),
                        clearance_mm: clearance,
                    });
                }
            }
        }
    }

    for via in &design.vias {
        let (from, to) = via.layer_span;
        for layer in [from, to] {
            let landed = design
                .traces
                .iter()
                .any(|t| t.layer == layer && (t.path[0] == via.vertex || t.path[t.path.len() - 1] == via.vertex));
            if !landed {
                out.push(Violation::ViaNotConnected { via: via.id, layer });
            }
        }
    }

    let (hx, hy) = (0.5 * sheet.width(), 0.5 * sheet.height());
    let edge_gap = |p: &Vec2| (hx - p.x.abs()).min(hy - p.y.abs());
    let mut margin = |id: FeatureId, distance: f64| {
        if distance < rules.boundary_margin_mm {
            out.push(Violation::BoundaryMargin {
                feature: id,
                distance_mm: distance,
            });
        }
    };
    for t in &design.traces {
        let d = t.path.iter().map(|&v| edge_gap(&rest[v])).fold(f64::INFINITY, f64::min);
        margin(t.id, d - 0.5 * t.width_mm);
    }
    for p in &design.pads {
        let d = p
            .faces
            .iter()
            .flat_map(|&f| sheet.face_vertices(f))
            .map(|v| edge_gap(&rest[v]))
            .fold(f64::INFINITY, f64::min);
        margin(p.id, d);
    }
    for v in &design.vias {
        margin(v.id, edge_gap(&rest[v.vertex]) - v.radius_mm - rules.via_ring_mm);
    }

    out.sort_by_key(Violation::sort_key);
    out
}

fn pad_rects(pad: &Pad, sheet: &SheetMesh) -> Vec<Prim> {
    pad.faces
        .iter()
        .map(|&f| {
            let [a, _, c, _] = sheet.face_vertices(f);
            Prim::Rect(sheet.rest_positions[a], sheet.rest_positions[c])
        })
        .collect()
}

fn layer_shapes(design: &CircuitDesign, sheet: &SheetMesh, layer: usize) -> Vec<Shape> {
    let rest = &sheet.rest_positions;
    let mut shapes = Vec::new();
    for t in design.traces.iter().filter(|t| t.layer == layer) {
        shapes.push(Shape {
            id: t.id,
            prims: t.path.windows(2).map(|w| Prim::Segment(rest[w[0]], rest[w[1]])).collect(),
            radius: 0.5 * t.width_mm,
            terminals: vec![t.path[0], t.path[t.path.len() - 1]],
            pins: vec![t.path[0], t.path[t.path.len() - 1]],
        });
    }
    for p in design.pads.iter().filter(|p| p.layer == layer) {
        let mut corners: Vec<usize> = p.faces.iter().flat_map(|&f| sheet.face_vertices(f)).collect();
        corners.sort_unstable();
        corners.dedup();
        shapes.push(Shape {
            id: p.id,
            prims: pad_rects(p, sheet),
            radius: 0.0,
            terminals: Vec::new(),
            pins: corners,
        });
    }
    for v in &design.vias {
        let (from, to) = v.layer_span;
        if (from..=to).contains(&layer) {
            let c = rest[v.vertex];
            shapes.push(Shape {
                id: v.id,
                prims: vec![Prim::Segment(c, c)],
                radius: v.radius_mm + design.rules.via_ring_mm,
                terminals: vec![v.vertex],
                pins: vec![v.vertex],
            });
        }
    }
    shapes
}

fn shape_distance(a: &Shape, b: &Shape) -> f64 {
    let mut best = f64::INFINITY;
    for pa in &a.prims {
        for pb in &b.prims {
            best = best.min(prim_distance(pa, pb));
        }
    }
    best - a.radius - b.radius
}

fn prim_distance(a: &Prim, b: &Prim) -> f64 {
    match (*a, *b) {
        (Prim::Segment(p, q), Prim::Segment(r, s)) => segment_segment(p, q, r, s),
        (Prim::Segment(p, q), Prim::Rect(lo, hi)) | (Prim::Rect(lo, hi), Prim::Segment(p, q)) => {
            segment_rect(p, q, lo, hi)
        }
        (Prim::Rect(alo, ahi), Prim::Rect(blo, bhi)) => {
            let dx = (alo.x - bhi.x).max(blo.x - ahi.x).max(0.0);
            let dy = (alo.y - bhi.y).max(blo.y - ahi.y).max(0.0);
            dx.hypot(dy)
        }
    }
}

fn point_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_cross(p: Vec2, q: Vec2, r: Vec2, s: Vec2) -> bool {
    let d1 = cross(q - p, r - p);
    let d2 = cross(q - p, s - p);
    let d3 = cross(s - r, p - r);
    let d4 = cross(s - r, q - r);
    (d1 > 0.0) != (d2 > 0.0) && d1 != 0.0 && d2 != 0.0 && (d3 > 0.0) != (d4 > 0.0) && d3 != 0.0 && d4 != 0.0
}

fn segment_segment(p: Vec2, q: Vec2, r: Vec2, s: Vec2) -> f64 {
    if segments_cross(p, q, r, s) {
        return 0.0;
    }
    point_segment(p, r, s)
        .min(point_segment(q, r, s))
        .min(point_segment(r, p, q))
        .min(point_segment(s, p, q))
}

fn segment_rect(p: Vec2, q: Vec2, lo: Vec2, hi: Vec2) -> f64 {
    let inside = |v: Vec2| v.x >= lo.x && v.x <= hi.x && v.y >= lo.y && v.y <= hi.y;
    if inside(p) || inside(q) {
        return 0.0;
    }
    let corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
    (0..4)
        .map(|k| segment_segment(p, q, corners[k], corners[(k + 1) % 4]))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_sheet;
    use crate::simulator::SheetParams;

    fn setup() -> (CircuitDesign, SheetMesh) {
        let design = CircuitDesign::new(SheetParams::square(13, 130.0), 2).unwrap();
        let sheet = build_sheet(13, 13, 130.0, 130.0, 0.0).unwrap();
        (design, sheet)
    }

    #[test]
    fn empty_design_is_clean() {
        let (d, s) = setup();
        assert!(check_design_rules(&d, &s).is_empty());
    }

    #[test]
    fn parallel_traces_one_pitch_apart() {
        let (mut d, s) = setup();
        d.add_trace(&[s.vertex(2, 4), s.vertex(8, 4)], 0, 1.5).unwrap();
        d.add_trace(&[s.vertex(2, 5), s.vertex(8, 5)], 0, 1.5).unwrap();
        assert!(check_design_rules(&d, &s).is_empty());
        let shapes = layer_shapes(&d, &s, 0);
        let clearance = shape_distance(&shapes[0], &shapes[1]);
        assert!((clearance - (130.0 / 12.0 - 1.5)).abs() < 1e-9);
    }

    #[test]
    fn shared_vertex_is_a_violation() {
        let (mut d, s) = setup();
        d.add_trace(&[s.vertex(2, 4), s.vertex(8, 4)], 0, 1.5).unwrap();
        d.add_trace(&[s.vertex(5, 2), s.vertex(5, 8)], 0, 1.5).unwrap();
        let v = check_design_rules(&d, &s);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::Clearance { a, b, clearance_mm, .. } => {
                assert_eq!((*a, *b), (1, 2));
                assert!(*clearance_mm < 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        // The same pair on different layers is fine.
        d.traces[1].layer = 1;
        assert!(check_design_rules(&d, &s).is_empty());
    }

    #[test]
    fn via_must_land_on_both_layers() {
        let (mut d, s) = setup();
        let a = s.vertex(3, 6);
        let b = s.vertex(6, 6);
        let c = s.vertex(6, 9);
        d.add_trace(&[a, b], 0, 1.5).unwrap();
        let via = d.add_via(b, 0.5, (0, 1)).unwrap().id;
        assert_eq!(check_design_rules(&d, &s), vec![Violation::ViaNotConnected { via, layer: 1 }]);
        d.add_trace(&[b, c], 1, 1.5).unwrap();
        assert!(check_design_rules(&d, &s).is_empty());
    }

    #[test]
    fn margin_rule() {
        let (mut d, s) = setup();
        let id = d.add_trace(&[s.vertex(0, 3), s.vertex(3, 3)], 0, 1.5).unwrap().id;
        let v = check_design_rules(&d, &s);
        assert!(matches!(v[..], [Violation::BoundaryMargin { feature, .. }] if feature == id));
    }

    #[test]
    fn trace_ending_on_pad_is_connected() {
        let (mut d, s) = setup();
        let f = s.face(5, 5);
        d.add_pad(&[f], 0, false).unwrap();
        d.add_trace(&[s.vertex(5, 5), s.vertex(5, 2)], 0, 1.5).unwrap();
        assert!(check_design_rules(&d, &s).is_empty());
        // A trace passing the pad without ending on it is too close.
        d.add_trace(&[s.vertex(4, 6), s.vertex(7, 6)], 0, 1.5).unwrap();
        assert!(!check_design_rules(&d, &s).is_empty());
    }

    #[test]
    fn grid_mismatch() {
        let (d, _) = setup();
        let other = build_sheet(5, 5, 130.0, 130.0, 0.0).unwrap();
        assert_eq!(check_design_rules(&d, &other), vec![Violation::GridMismatch]);
    }
}
