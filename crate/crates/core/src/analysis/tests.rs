use super::*;
use crate::circuit::Material;
use crate::geometry::{build_sheet, Vec3};

fn flat_sheet(n: usize, size: f64) -> SheetMesh {
    let mut sheet = build_sheet(n, n, size, size, 0.0).unwrap();
    for v in 0..sheet.vertex_count() {
        sheet.positions[v] = sheet.rest_position3(v);
    }
    sheet
}

fn trace(path: Vec<usize>) -> Trace {
    Trace {
        id: 1,
        path,
        layer: 0,
        width_mm: 1.5,
        material: Material::Conductive,
    }
}

#[test]
fn identity_forming_has_unit_stretch() {
    let field = StretchField::from_sheet(&flat_sheet(9, 80.0));
    assert!(field.edge_stretch.iter().all(|l| (l - 1.0).abs() < 1e-12));
    assert!(field.face_area_ratio.iter().all(|a| (a - 1.0).abs() < 1e-12));
    assert!((field.min - 1.0).abs() < 1e-12 && (field.max - 1.0).abs() < 1e-12);
    assert!((field.mean - 1.0).abs() < 1e-12);
}

#[test]
fn stretched_edge_ratio() {
    // Two by two grid, 10 mm pitch; pull one corner out along x.
    let mut sheet = flat_sheet(2, 10.0);
    sheet.positions[1].x += 2.0;
    sheet.positions[3].x += 2.0;
    let field = StretchField::from_sheet(&sheet);
    let e = sheet.edge_between(0, 1).unwrap();
    assert!((field.edge_stretch[e] - 1.2).abs() < 1e-12);
    assert!((field.face_area_ratio[0] - 1.2).abs() < 1e-12);
    assert!((field.max - 1.2).abs() < 1e-12);
    assert!((field.min - 1.0).abs() < 1e-12);
}

#[test]
fn resistance_examples() {
    // 11 vertices, 5 mm pitch along x: a 50 mm (5 cm) trace.
    let sheet = flat_sheet(11, 50.0);
    let field = StretchField::from_sheet(&sheet);
    let model = ResistanceModel::default();
    let t = trace((0..11).collect());
    let r = estimate_trace_resistance(&t, &field, &model).unwrap();
    assert!((r - 0.12).abs() < 1e-12);

    let mut doubled = field.clone();
    doubled.edge_stretch.iter_mut().for_each(|l| *l = 2.0);
    let r2 = estimate_trace_resistance(&t, &doubled, &model).unwrap();
    assert!((r2 - 0.48).abs() < 1e-12);
}

#[test]
fn missing_stretch_is_reported() {
    let field = StretchField::from_sheet(&flat_sheet(4, 30.0));
    let model = ResistanceModel::default();
    let err = path_resistance(&[0, 5], &field, &model).unwrap_err();
    assert!(matches!(err, AnalysisError::MissingStretch { from: 0, to: 5 }));
    let err = path_resistance(&[3, 4], &field, &model).unwrap_err();
    assert!(matches!(err, AnalysisError::MissingStretch { .. }));
    let err = path_resistance(&[15, 16], &field, &model).unwrap_err();
    assert!(matches!(err, AnalysisError::MissingStretch { .. }));
}

#[test]
fn resistance_model_rejects_nonpositive() {
    assert!(ResistanceModel::new(0.0).is_none());
    assert!(ResistanceModel::new(-1.0).is_none());
    assert!(ResistanceModel::new(f64::NAN).is_none());
    assert_eq!(ResistanceModel::new(0.024), Some(ResistanceModel::default()));
}

#[test]
fn face_mean_stretch_averages_edges() {
    let mut sheet = flat_sheet(2, 10.0);
    sheet.positions[1].x += 2.0;
    sheet.positions[3].x += 2.0;
    let field = StretchField::from_sheet(&sheet);
    let mean = field.face_mean_stretch();
    assert_eq!(mean.len(), 1);
    assert!((mean[0] - (1.2 + 1.2 + 1.0 + 1.0) / 4.0).abs() < 1e-12);
}

#[test]
fn segment_lengths() {
    let sheet = flat_sheet(5, 40.0);
    assert!((Segment::Edge(0).formed_length(&sheet).unwrap() - 10.0).abs() < 1e-12);
    assert!((Segment::Path(vec![0, 1, 6, 11]).formed_length(&sheet).unwrap() - 30.0).abs() < 1e-12);
    assert!(Segment::Path(vec![0, 2]).formed_length(&sheet).is_none());
    assert!(Segment::Path(vec![0]).formed_length(&sheet).is_none());
    assert!(Segment::Edge(sheet.edge_count()).formed_length(&sheet).is_none());
}

#[test]
fn stretch_field_json_round_trip() {
    let field = StretchField::from_sheet(&flat_sheet(3, 20.0));
    let json = serde_json::to_string(&field).unwrap();
    let back: StretchField = serde_json::from_str(&json).unwrap();
    assert_eq!(back, field);
    let seg = serde_json::to_value(Segment::Path(vec![0, 1])).unwrap();
    assert_eq!(seg, serde_json::json!({"path": [0, 1]}));
}

#[test]
fn calibration_rejects_bad_input() {
    let params = SheetParams::square(5, 100.0);
    let config = SimConfig::default();
    let mold = MoldMesh::empty();
    let opts = CalibrationOptions::default();
    assert!(matches!(
        calibrate_modulus(&mold, &config, &params, &[], &opts),
        Err(AnalysisError::NoMeasurements)
    ));
    let bad_edge = [Measurement { segment: Segment::Edge(1000), length_mm: 1.0 }];
    assert!(matches!(
        calibrate_modulus(&mold, &config, &params, &bad_edge, &opts),
        Err(AnalysisError::InvalidMeasurement { index: 0, .. })
    ));
    let bad_len = [Measurement { segment: Segment::Edge(0), length_mm: -1.0 }];
    assert!(matches!(
        calibrate_modulus(&mold, &config, &params, &bad_len, &opts),
        Err(AnalysisError::InvalidMeasurement { index: 0, .. })
    ));
    let bad_opts = CalibrationOptions { lower: 2.0, ..opts };
    let ok = [Measurement { segment: Segment::Edge(0), length_mm: 25.0 }];
    assert!(matches!(
        calibrate_modulus(&mold, &config, &params, &ok, &bad_opts),
        Err(AnalysisError::InvalidOptions(_))
    ));
}

#[test]
fn flat_bed_fit_is_unidentifiable() {
    let params = SheetParams::square(5, 100.0);
    let sheet = flat_sheet(5, 100.0);
    let measured = [Measurement { segment: Segment::Edge(0), length_mm: sheet.rest_length(0) }];
    let report = calibrate_modulus(&MoldMesh::empty(), &SimConfig::default(), &params, &measured, &CalibrationOptions::default())
        .unwrap();
    assert!(report.unidentifiable);
    assert!(!report.non_improving);
    assert_eq!(report.residuals_mm.len(), 1);
    assert_eq!(report.multiplier, 1.0);
}

#[test]
fn failing_simulation_is_propagated() {
    let params = SheetParams::square(5, 100.0);
    let config = SimConfig { clamp_height_mm: 10.0, ..Default::default() };
    let mold = crate::fixtures::box_mold(30.0, 30.0, 15.0);
    let measured = [Measurement { segment: Segment::Edge(0), length_mm: 25.0 }];
    let err = calibrate_modulus(&mold, &config, &params, &measured, &CalibrationOptions::default()).unwrap_err();
    assert!(matches!(
        err,
        AnalysisError::SimulationFailure { source: SimError::MoldTallerThanClampTravel { .. }, .. }
    ));
}

#[test]
fn rigid_motion_keeps_stretch() {
    let mut sheet = flat_sheet(4, 30.0);
    sheet.positions[5].z += 3.0;
    let before = StretchField::from_sheet(&sheet);
    let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    for p in &mut sheet.positions {
        *p = rot * *p + Vec3::new(5.0, -7.0, 11.0);
    }
    let after = StretchField::from_sheet(&sheet);
    for (a, b) in before.edge_stretch.iter().zip(&after.edge_stretch) {
        assert!((a - b).abs() < 1e-12);
    }
}
