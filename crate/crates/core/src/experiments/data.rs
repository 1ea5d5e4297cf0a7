use serde::Serialize;

use crate::calibration::CalibrationSet;
use crate::Point;

/// A query point with its observed score and, when known, the quantities
/// needed to draw and check an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestPoint {
    pub id: u64,
    pub location: Option<Point>,
    /// `|y_true - y_hat|`.
    pub score: f64,
    pub y_true: Option<f64>,
    pub y_hat: Option<f64>,
    /// Known noise scale at the location (synthetic data only).
    pub noise_amplitude: Option<f64>,
}

impl TestPoint {
    /// Interval center and the value it should contain. Without predictions
    /// the interval is centered at zero and checked against the score.
    pub fn center_and_truth(&self) -> (f64, f64) {
        match (self.y_hat, self.y_true) {
            (Some(hat), Some(truth)) => (hat, truth),
            _ => (0.0, self.score),
        }
    }
}

/// Calibration pool plus held-out test points.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub calibration: CalibrationSet,
    pub test: Vec<TestPoint>,
    /// Noise amplitudes of the calibration records, aligned with
    /// `calibration.records()`, when known.
    pub calibration_amplitudes: Option<Vec<f64>>,
}

impl Dataset {
    pub fn has_locations(&self) -> bool {
        self.calibration
            .records()
            .iter()
            .all(|r| r.location.is_some())
            && self.test.iter().all(|t| t.location.is_some())
    }
}
