use super::*;
use crate::fixtures;

#[test]
fn spring_force_examples() {
    assert_eq!(spring_force(0.01, 0.01, 229.6e6, 1e-5).unwrap(), 0.0);
    let f = spring_force(0.01, 0.011, 229.6e6, 1e-5).unwrap();
    assert!((f - 229.6).abs() < 1e-9);
    let f2 = spring_force(0.01, 0.011, 229.6e6, 2e-5).unwrap();
    assert!((f2 - 2.0 * f).abs() < 1e-9);
    assert!(matches!(spring_force(0.0, 0.01, 1.0, 1.0), Err(SimError::ZeroRestLength)));
}

#[test]
fn default_stiffness_matches_ea_over_l() {
    let c = SimConfig::default();
    // Square pitch: A = t * L, so k = E t regardless of L.
    let k = c.stiffness_n_per_mm(10.0, 10.0);
    assert!((k - 229.6).abs() < 1e-9);
    let c = SimConfig {
        cross_section_area_m2: Some(1e-5),
        ..SimConfig::default()
    };
    assert!((c.stiffness_n_per_mm(10.0, 3.0) - 229.6).abs() < 1e-9);
}

#[test]
fn config_validation() {
    assert!(SimConfig::default().validate().is_ok());
    for bad in [
        SimConfig { young_modulus_pa: 0.0, ..Default::default() },
        SimConfig { sheet_mass_kg: -1.0, ..Default::default() },
        SimConfig { damping: 0.0, ..Default::default() },
        SimConfig { damping: 1.5, ..Default::default() },
        SimConfig { convergence_tol: 0.0, ..Default::default() },
    ] {
        assert!(matches!(bad.validate(), Err(SimError::InvalidConfig(_))));
    }
}

#[test]
fn zero_gravity_heat_is_identity() {
    let config = SimConfig { gravity_mps2: 0.0, ..Default::default() };
    let sheet = build_sheet(7, 7, 130.0, 130.0, 40.0).unwrap();
    let (out, report) = stage_heat(sheet.clone(), &config).unwrap();
    assert!(report.converged);
    assert_eq!(out.positions, sheet.positions);
}

fn center_energy(p: &Vec3, config: &SimConfig) -> f64 {
    let h = 65.0;
    let k = config.young_modulus_pa * 1e-3 * 1e-3;
    let w = config.sheet_mass_kg * config.gravity_mps2 / 9.0;
    let anchors = [(-h, 0.0), (h, 0.0), (0.0, -h), (0.0, h)];
    anchors
        .iter()
        .map(|&(x, y)| {
            let l = (p - Vec3::new(x, y, config.clamp_height_mm)).norm();
            0.5 * k * (l - h) * (l - h)
        })
        .sum::<f64>()
        + w * p.z
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn three_by_three_sag_matches_energy_minimum() {
    let config = SimConfig::default();
    let sheet = build_sheet(3, 3, 130.0, 130.0, config.clamp_height_mm).unwrap();
    let (out, report) = stage_heat(sheet, &config).unwrap();
    assert!(report.converged);

    let mut p = Vec3::new(0.0, 0.0, config.clamp_height_mm);
    for _ in 0..50 {
        for axis in 0..3 {
            let best = golden_min(
                |t| {
                    let mut q = p;
                    q[axis] = t;
                    center_energy(&q, &config)
                },
                p[axis] - 5.0,
                p[axis] + 5.0,
            );
            p[axis] = best;
        }
    }
    let got = out.positions[4];
    assert!((got - p).norm() < 1e-3, "solver {got:?} vs oracle {p:?}");
    assert!(got.z < config.clamp_height_mm);
    assert!(got.x.abs() < 1e-12 && got.y.abs() < 1e-12);
}

#[test]
fn sag_is_symmetric() {
    let config = SimConfig::default();
    let sheet = build_sheet(9, 9, 130.0, 130.0, config.clamp_height_mm).unwrap();
    let (out, _) = stage_heat(sheet, &config).unwrap();
    // Sweep order breaks exact symmetry at the level of the tolerance.
    let center = out.positions[out.vertex(4, 4)];
    assert!(center.x.abs() < 1e-4 && center.y.abs() < 1e-4);
    let min_z = out.positions.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    assert!(center.z - min_z < 1e-4);
    for j in 0..9 {
        for i in 0..9 {
            let a = out.positions[out.vertex(i, j)];
            let b = out.positions[out.vertex(8 - i, j)];
            assert!((a.z - b.z).abs() < 1e-4, "{i} {j} {}", a.z - b.z);
        }
    }
}

#[test]
fn press_without_mold_lands_on_bed() {
    let config = SimConfig::default();
    let sheet = build_sheet(9, 9, 130.0, 130.0, config.clamp_height_mm).unwrap();
    let (sheet, _) = stage_heat(sheet, &config).unwrap();
    let (sheet, report) = stage_press(sheet, &MoldMesh::empty(), &config).unwrap();
    assert!(report.converged);
    assert!(sheet.positions.iter().all(|p| p.z.abs() <= config.contact_tol_mm));
    for v in 0..sheet.vertex_count() {
        if sheet.is_boundary(v) {
            assert_eq!(sheet.vertex_state[v], VertexState::ClampedEdge);
            assert_eq!(sheet.positions[v].z, 0.0);
        }
    }
}

#[test]
fn mold_taller_than_clamp_is_rejected() {
    let config = SimConfig { clamp_height_mm: 10.0, ..Default::default() };
    let err = simulate(&fixtures::box_mold(30.0, 30.0, 15.0), &config, &SheetParams::square(5, 130.0)).unwrap_err();
    assert!(matches!(err, SimError::MoldTallerThanClampTravel { .. }));
}

#[test]
fn flat_bed_vacuum_ends_on_bed() {
    let config = SimConfig::default();
    let formed = simulate(&MoldMesh::empty(), &config, &SheetParams::square(11, 130.0)).unwrap();
    assert!(formed.sheet.positions.iter().all(|p| p.z == 0.0));
    assert!(formed.unreached.is_empty());
    assert_eq!(formed.stage_log.len(), 3);
}
