use formcast_core::analysis::{calibrate_modulus, CalibrationOptions, Measurement, Segment};
use formcast_core::fixtures;
use formcast_core::simulator::{simulate, SheetParams, SimConfig};

#[test]
fn self_consistent_measurements_fit_the_starting_modulus() {
    let mold = fixtures::trial_frustum();
    let params = SheetParams::square(20, 130.0);
    let config = SimConfig::default();
    let formed = simulate(&mold, &config, &params).unwrap();
    let sheet = &formed.sheet;
    let row: Vec<usize> = (2..18).map(|i| sheet.vertex(i, 10)).collect();
    let measurements = vec![
        Measurement { segment: Segment::Path(row.clone()), length_mm: Segment::Path(row).formed_length(sheet).unwrap() },
        Measurement { segment: Segment::Edge(3), length_mm: sheet.formed_length(3) },
    ];
    let options = CalibrationOptions::default();
    let a = calibrate_modulus(&mold, &config, &params, &measurements, &options).unwrap();
    assert!((a.multiplier - 1.0).abs() <= 0.02, "{}", a.multiplier);
    assert!(a.residuals_mm.iter().all(|r| r.abs() < 1e-3), "{:?}", a.residuals_mm);
    assert!(!a.non_improving && !a.unidentifiable);

    // The best objective never rises along the search.
    assert!(a.trace.windows(2).all(|w| w[1].best_objective <= w[0].best_objective));
    assert_eq!(a.trace.last().unwrap().best_objective, a.objective);

    let b = calibrate_modulus(&mold, &config, &params, &measurements, &options).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
