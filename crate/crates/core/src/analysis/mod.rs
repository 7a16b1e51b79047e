//! Stretch metrics, trace resistance estimates and modulus calibration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Trace;
use crate::geometry::{grid_edge_between, triangle_area, EdgeId, MoldMesh, SheetMesh};
use crate::simulator::{simulate, FormedSheet, SheetParams, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no stretch value for the step {from} -> {to}")]
    MissingStretch { from: usize, to: usize },
    #[error("calibration needs at least one measurement")]
    NoMeasurements,
    #[error("invalid measurement {index}: {reason}")]
    InvalidMeasurement { index: usize, reason: String },
    #[error("invalid calibration options: {0}")]
    InvalidOptions(String),
    #[error("simulation failed at modulus multiplier {multiplier}: {source}")]
    SimulationFailure {
        multiplier: f64,
        #[source]
        source: SimError,
    },
}

/// Per-edge and per-face stretch of a formed sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchField {
    pub nx: usize,
    pub ny: usize,
    /// Formed over rest length, indexed like the sheet edges.
    pub edge_stretch: Vec<f64>,
    pub rest_lengths_mm: Vec<f64>,
    /// Formed over rest area per quad.
    pub face_area_ratio: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl StretchField {
    pub fn from_sheet(sheet: &SheetMesh) -> Self {
        let rest_lengths_mm: Vec<f64> = (0..sheet.edge_count()).map(|e| sheet.rest_length(e)).collect();
        let edge_stretch: Vec<f64> = (0..sheet.edge_count())
            .map(|e| sheet.formed_length(e) / rest_lengths_mm[e])
            .collect();
        let face_area_ratio = (0..sheet.face_count())
            .map(|f| {
                let tris = sheet.face_triangles(f);
                let rest: f64 = tris
                    .iter()
                    .map(|t| {
                        let [a, b, c] = t.map(|v| sheet.rest_position3(v));
                        triangle_area(&a, &b, &c)
                    })
                    .sum();
                sheet.formed_face_area(f) / rest
            })
            .collect();
        let min = edge_stretch.iter().copied().fold(f64::INFINITY, f64::min);
        let max = edge_stretch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = edge_stretch.iter().sum::<f64>() / edge_stretch.len() as f64;
        Self {
            nx: sheet.nx(),
            ny: sheet.ny(),
            edge_stretch,
            rest_lengths_mm,
            face_area_ratio,
            min,
            max,
            mean,
        }
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<EdgeId> {
        grid_edge_between(self.nx, self.ny, a, b).filter(|&e| e < self.edge_stretch.len())
    }

    /// Mean edge stretch around each quad, for per-face display.
    pub fn face_mean_stretch(&self) -> Vec<f64> {
        let fx = self.nx - 1;
        (0..fx * (self.ny - 1))
            .map(|f| {
                let a = (f / fx) * self.nx + f % fx;
                let edges = [(a, a + 1), (a + self.nx, a + self.nx + 1), (a, a + self.nx), (a + 1, a + self.nx + 1)];
                edges
                    .iter()
                    .filter_map(|&(u, v)| self.edge_between(u, v))
                    .map(|e| self.edge_stretch[e])
                    .sum::<f64>()
                    / 4.0
            })
            .collect()
    }
}

pub fn compute_stretch(formed: &FormedSheet) -> StretchField {
    StretchField::from_sheet(&formed.sheet)
}

/// Resistance of a printed conductor under stretch.
///
/// Treats the conductor as incompressible: an edge stretched by `λ` gets
/// `λ` times longer and `λ` times thinner in cross-section, so its
/// resistance scales with `λ²`. This is a model, not a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceModel {
    /// As-printed resistance per centimeter of trace.
    pub base_linear_resistivity_ohm_per_cm: f64,
}

impl ResistanceModel {
    pub const EXPONENT: i32 = 2;

    pub fn new(base_linear_resistivity_ohm_per_cm: f64) -> Option<Self> {
        (base_linear_resistivity_ohm_per_cm > 0.0 && base_linear_resistivity_ohm_per_cm.is_finite())
            .then_some(Self { base_linear_resistivity_ohm_per_cm })
    }
}

impl Default for ResistanceModel {
    fn default() -> Self {
        Self {
            base_linear_resistivity_ohm_per_cm: 0.024,
        }
    }
}

/// Resistance in ohms along a vertex path on the grid.
pub fn path_resistance(path: &[usize], stretch: &StretchField, model: &ResistanceModel) -> Result<f64, AnalysisError> {
    path.windows(2).try_fold(0.0, |acc, w| {
        let e = stretch
            .edge_between(w[0], w[1])
            .ok_or(AnalysisError::MissingStretch { from: w[0], to: w[1] })?;
        let lambda = stretch.edge_stretch[e];
        let rest_cm = stretch.rest_lengths_mm[e] / 10.0;
        Ok(acc + model.base_linear_resistivity_ohm_per_cm * lambda.powi(ResistanceModel::EXPONENT) * rest_cm)
    })
}

pub fn estimate_trace_resistance(trace: &Trace, stretch: &StretchField, model: &ResistanceModel) -> Result<f64, AnalysisError> {
    path_resistance(&trace.path, stretch, model)
}

/// A measurable length on the formed sheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Edge(EdgeId),
    /// Grid path through the listed vertices; its length is the sum of
    /// its edges.
    Path(Vec<usize>),
}

impl Segment {
    pub fn formed_length(&self, sheet: &SheetMesh) -> Option<f64> {
        match self {
            Segment::Edge(e) => (*e < sheet.edge_count()).then(|| sheet.formed_length(*e)),
            Segment::Path(path) => {
                if path.len() < 2 {
                    return None;
                }
                path.windows(2)
                    .map(|w| sheet.edge_between(w[0], w[1]).map(|e| sheet.formed_length(e)))
                    .sum()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub segment: Segment,
    pub length_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Search bracket on the modulus multiplier.
    pub lower: f64,
    pub upper: f64,
    /// Golden-section stops once the bracket is this narrow in log10 units.
    pub tolerance_log10: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            lower: 0.1,
            upper: 10.0,
            tolerance_log10: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub multiplier: f64,
    pub objective: f64,
    /// Best multiplier and objective seen so far, including this step.
    pub best_multiplier: f64,
    pub best_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub multiplier: f64,
    pub young_modulus_pa: f64,
    /// Simulated minus measured length per input measurement, mm.
    pub residuals_mm: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub trace: Vec<CalibrationStep>,
    /// Every evaluated multiplier gave the same objective.
    pub unidentifiable: bool,
    /// No candidate improved on the starting modulus.
    pub non_improving: bool,
}

/// Fits a scalar multiplier on the Young's modulus so simulated segment
/// lengths match measured ones in the least-squares sense.
///
/// Starts from the configured modulus, then runs a golden-section search
/// over the multiplier in log space. The reported fit is the best
/// evaluated multiplier, so its residuals come from a real simulation.
pub fn calibrate_modulus(
    mold: &MoldMesh,
    config: &SimConfig,
    params: &SheetParams,
    measurements: &[Measurement],
    options: &CalibrationOptions,
) -> Result<CalibrationReport, AnalysisError> {
    if measurements.is_empty() {
        return Err(AnalysisError::NoMeasurements);
    }
    if !(options.lower > 0.0 && options.lower <= 1.0 && options.upper >= 1.0 && options.upper.is_finite()) {
        return Err(AnalysisError::InvalidOptions("bracket must be positive and contain 1".into()));
    }
    if !(options.tolerance_log10 > 0.0) {
        return Err(AnalysisError::InvalidOptions("tolerance must be positive".into()));
    }
    let edge_count = (params.nx - 1) * params.ny + params.nx * (params.ny - 1);
    for (index, m) in measurements.iter().enumerate() {
        let valid = match &m.segment {
            Segment::Edge(e) => *e < edge_count,
            Segment::Path(p) => {
                p.len() >= 2 && p.windows(2).all(|w| grid_edge_between(params.nx, params.ny, w[0], w[1]).is_some())
            }
        };
        if !valid {
            return Err(AnalysisError::InvalidMeasurement {
                index,
                reason: "segment does not lie on the sheet grid".into(),
            });
        }
        if !(m.length_mm.is_finite() && m.length_mm > 0.0) {
            return Err(AnalysisError::InvalidMeasurement {
                index,
                reason: format!("length {} mm is not positive", m.length_mm),
            });
        }
    }

    let evaluate = |t: f64| -> Result<(f64, Vec<f64>), AnalysisError> {
        let multiplier = 10f64.powf(t);
        let candidate = SimConfig {
            young_modulus_pa: config.young_modulus_pa * multiplier,
            ..config.clone()
        };
        let formed = simulate(mold, &candidate, params)
            .map_err(|source| AnalysisError::SimulationFailure { multiplier, source })?;
        let residuals: Vec<f64> = measurements
            .iter()
            .map(|m| m.segment.formed_length(&formed.sheet).expect("validated segment") - m.length_mm)
            .collect();
        Ok((residuals.iter().map(|r| r * r).sum(), residuals))
    };

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (options.lower.log10(), options.upper.log10());
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (initial, at_c, at_d) = std::thread::scope(|s| {
        let hc = s.spawn(|| evaluate(c));
        let hd = s.spawn(|| evaluate(d));
        let initial = evaluate(0.0);
        (initial, hc.join().expect("worker panicked"), hd.join().expect("worker panicked"))
    });
    let initial = initial?;
    let (mut fc, rc) = at_c?;
    let (mut fd, rd) = at_d?;

    let initial_objective = initial.0;
    let mut best = (0.0, initial.0, initial.1.clone());
    let mut trace = Vec::new();
    let mut record = |t: f64, f: f64, residuals: Vec<f64>, best: &mut (f64, f64, Vec<f64>)| {
        if f < best.1 {
            *best = (t, f, residuals);
        }
        trace.push(CalibrationStep {
            multiplier: 10f64.powf(t),
            objective: f,
            best_multiplier: 10f64.powf(best.0),
            best_objective: best.1,
        });
    };
    record(0.0, initial.0, initial.1, &mut best);
    record(c, fc, rc, &mut best);
    record(d, fd, rd, &mut best);

    while b - a > options.tolerance_log10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            let (f, r) = evaluate(c)?;
            fc = f;
            record(c, f, r, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            let (f, r) = evaluate(d)?;
            fd = f;
            record(d, f, r, &mut best);
        }
    }

    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.objective), hi.max(s.objective)));
    let unidentifiable = hi - lo <= 1e-12 * hi.abs().max(1.0);
    let non_improving = !unidentifiable && initial_objective > 0.0 && best.1 >= initial_objective;
    let multiplier = 10f64.powf(best.0);
    Ok(CalibrationReport {
        multiplier,
        young_modulus_pa: config.young_modulus_pa * multiplier,
        residuals_mm: best.2,
        objective: best.1,
        initial_objective,
        trace,
        unidentifiable,
        non_improving,
    })
}

#[cfg(test)]
mod tests;
