//! Calibration records and the two deterministic threshold rules.
//!
//! Scores are sorted once by `(score, id)`; ties keep id order so that
//! permuting the input records never changes a downstream threshold.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WbcpError};
use crate::Point;

/// Slack used when comparing cumulative weights against a quantile level.
/// Cumulative sums of normalized weights carry rounding error of this order.
pub const CUMULATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub id: u64,
    /// Nonconformity score, `|y - y_hat|` for regression.
    pub score: f64,
    pub location: Option<Point>,
}

impl CalibrationRecord {
    pub fn new(id: u64, score: f64) -> Self {
        Self {
            id,
            score,
            location: None,
        }
    }

    pub fn at(id: u64, score: f64, location: Point) -> Self {
        Self {
            id,
            score,
            location: Some(location),
        }
    }
}

/// A validated, non-empty pool of calibration scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    records: Vec<CalibrationRecord>,
}

impl CalibrationSet {
    pub fn new(records: Vec<CalibrationRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(WbcpError::InvalidInput(
                "calibration set must contain at least one record".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !r.score.is_finite() || r.score < 0.0 {
                return Err(WbcpError::InvalidInput(format!(
                    "record {}: score must be finite and nonnegative, got {}",
                    r.id, r.score
                )));
            }
            if let Some([x, y]) = r.location {
                if !x.is_finite() || !y.is_finite() {
                    return Err(WbcpError::InvalidInput(format!(
                        "record {}: non-finite location",
                        r.id
                    )));
                }
            }
            if !seen.insert(r.id) {
                return Err(WbcpError::InvalidInput(format!("duplicate id {}", r.id)));
            }
        }
        Ok(Self { records })
    }

    /// Builds a set from bare scores with ids `0..n`.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        Self::new(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| CalibrationRecord::new(i as u64, s))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CalibrationRecord] {
        &self.records
    }

    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }

    /// All locations, or `MissingLocations` naming the first record without one.
    pub fn locations(&self) -> Result<Vec<Point>> {
        self.records
            .iter()
            .map(|r| r.location.ok_or(WbcpError::MissingLocations { id: r.id }))
            .collect()
    }

    /// Permutation sorting records by `(score, id)`.
    pub fn sort_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&self.records[a], &self.records[b]);
            ra.score.total_cmp(&rb.score).then(ra.id.cmp(&rb.id))
        });
        order
    }
}

/// Miscoverage level `alpha` in `(0, 1)`; the quantile level is `q = 1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileLevel {
    alpha: f64,
}

impl QuantileLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(WbcpError::InvalidInput(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        1.0 - self.alpha
    }
}

/// Scores in ascending order with their normalized weights and running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedCalibration {
    scores: Vec<f64>,
    ids: Vec<u64>,
    /// `order[i]` is the input position of the i-th smallest score.
    order: Vec<usize>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SortedCalibration {
    /// Sorts `cal` by `(score, id)` and attaches `weights` (given in record
    /// order), normalized to sum to one.
    pub fn new(cal: &CalibrationSet, weights: &[f64]) -> Result<Self> {
        Self::with_order(cal, &cal.sort_order(), weights)
    }

    /// As [`SortedCalibration::new`] with a precomputed sort order, so one
    /// ordering can be shared by many weight profiles.
    pub fn with_order(cal: &CalibrationSet, order: &[usize], weights: &[f64]) -> Result<Self> {
        let n = cal.len();
        if weights.len() != n || order.len() != n {
            return Err(WbcpError::InvalidInput(format!(
                "expected {n} weights, got {}",
                weights.len()
            )));
        }
        let mut total = 0.0;
        for &w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(WbcpError::InvalidInput(format!(
                    "weights must be finite and nonnegative, got {w}"
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(WbcpError::WeightDegeneracy("all weights are zero".into()));
        }
        let records = cal.records();
        let scores = order.iter().map(|&i| records[i].score).collect();
        let ids = order.iter().map(|&i| records[i].id).collect();
        let weights: Vec<f64> = order.iter().map(|&i| weights[i] / total).collect();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        // p_n is one by definition; drop the rounding residue.
        cumulative[n - 1] = 1.0;
        Ok(Self {
            scores,
            ids,
            order: order.to_vec(),
            weights,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Zero-based index of the first cumulative weight reaching `q`.
    pub fn crossing_index(&self, q: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&p| p >= q - CUMULATIVE_TOLERANCE)
            .unwrap_or(self.len() - 1)
    }

    /// Largest gap between consecutive sorted scores (zero for `n = 1`).
    pub fn max_spacing(&self) -> f64 {
        self.scores
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Sorts scores by `(score, id)` and normalizes `weights` into cumulative form.
pub fn sort_with_weights(cal: &CalibrationSet, weights: &[f64]) -> Result<SortedCalibration> {
    SortedCalibration::new(cal, weights)
}

/// `ceil(x)` that ignores rounding residue just above an integer.
pub(crate) fn ceil_index(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Split-conformal threshold: the `ceil((1 - alpha)(n + 1))`-th smallest score,
/// or `+inf` when that rank exceeds `n`.
pub fn standard_quantile(cal: &CalibrationSet, level: QuantileLevel) -> f64 {
    let n = cal.len();
    let rank = ceil_index(level.q() * (n as f64 + 1.0)).max(1);
    if rank > n {
        return f64::INFINITY;
    }
    let mut scores = cal.scores();
    scores.sort_by(f64::total_cmp);
    scores[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedQuantile {
    pub threshold: f64,
    /// Zero-based position of `k*` in score-sorted order.
    pub index: usize,
}

/// Weighted split-conformal threshold `rho_(k*)`, `k* = min{j : p_j >= q}`.
pub fn weighted_quantile(sc: &SortedCalibration, q: f64) -> WeightedQuantile {
    let index = sc.crossing_index(q);
    WeightedQuantile {
        threshold: sc.scores[index],
        index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn sorts_and_normalizes_uniform() {
        let cal = CalibrationSet::from_scores(&[3.0, 1.0, 2.0]).unwrap();
        let sc = sort_with_weights(&cal, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(sc.scores(), &[1.0, 2.0, 3.0]);
        for &w in sc.weights() {
            assert!(approx(w, 1.0 / 3.0));
        }
    }

    #[test]
    fn ties_are_broken_by_id() {
        let cal = CalibrationSet::new(vec![
            CalibrationRecord::new(1, 1.0),
            CalibrationRecord::new(0, 1.0),
        ])
        .unwrap();
        // weights given in record order: id1 -> 3, id0 -> 1
        let sc = sort_with_weights(&cal, &[3.0, 1.0]).unwrap();
        assert_eq!(sc.ids(), &[0, 1]);
        assert!(approx(sc.weights()[0], 0.25));
        assert!(approx(sc.weights()[1], 0.75));
    }

    #[test]
    fn weights_follow_the_sort() {
        let cal = CalibrationSet::from_scores(&[5.0, 2.0, 9.0]).unwrap();
        let sc = sort_with_weights(&cal, &[2.0, 6.0, 2.0]).unwrap();
        assert_eq!(sc.scores(), &[2.0, 5.0, 9.0]);
        assert!(approx(sc.weights()[0], 0.6));
        assert!(approx(sc.weights()[1], 0.2));
        assert!(approx(sc.weights()[2], 0.2));
        assert_eq!(*sc.cumulative().last().unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cal = CalibrationSet::from_scores(&[1.0, 2.0]).unwrap();
        assert!(matches!(
            sort_with_weights(&cal, &[0.0, 0.0]),
            Err(WbcpError::WeightDegeneracy(_))
        ));
        assert!(matches!(
            sort_with_weights(&cal, &[f64::NAN, 1.0]),
            Err(WbcpError::InvalidInput(_))
        ));
        assert!(matches!(
            sort_with_weights(&cal, &[1.0]),
            Err(WbcpError::InvalidInput(_))
        ));
        assert!(CalibrationSet::from_scores(&[f64::NAN]).is_err());
        assert!(CalibrationSet::from_scores(&[-1.0]).is_err());
        assert!(CalibrationSet::from_scores(&[]).is_err());
        assert!(CalibrationSet::new(vec![
            CalibrationRecord::new(3, 1.0),
            CalibrationRecord::new(3, 2.0)
        ])
        .is_err());
        assert!(QuantileLevel::new(0.0).is_err());
        assert!(QuantileLevel::new(1.0).is_err());
    }

    #[test]
    fn standard_quantile_index_rule() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let cal = CalibrationSet::from_scores(&scores).unwrap();
        let lvl = QuantileLevel::new(0.1).unwrap();
        assert_eq!(standard_quantile(&cal, lvl), 10.0);

        let one = CalibrationSet::from_scores(&[4.5]).unwrap();
        assert_eq!(
            standard_quantile(&one, QuantileLevel::new(0.5).unwrap()),
            4.5
        );

        let five = CalibrationSet::from_scores(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(standard_quantile(&five, lvl), f64::INFINITY);
    }

    #[test]
    fn weighted_quantile_walks_cumulative_sum() {
        let cal = CalibrationSet::from_scores(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let uniform = sort_with_weights(&cal, &[1.0; 4]).unwrap();
        let wq = weighted_quantile(&uniform, 0.9);
        assert_eq!((wq.threshold, wq.index), (4.0, 3));

        let skewed = sort_with_weights(&cal, &[0.7, 0.1, 0.1, 0.1]).unwrap();
        let wq = weighted_quantile(&skewed, 0.9);
        assert_eq!((wq.threshold, wq.index), (3.0, 2));

        let one = CalibrationSet::from_scores(&[2.5]).unwrap();
        let sc = sort_with_weights(&one, &[0.3]).unwrap();
        assert_eq!(weighted_quantile(&sc, 0.01).threshold, 2.5);
        assert_eq!(weighted_quantile(&sc, 0.99).threshold, 2.5);
    }

    fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..100.0, 1..60)
    }

    proptest! {
        #[test]
        fn uniform_weights_pick_the_ceil_qn_order_statistic(
            scores in scores_strategy(),
            alpha_milli in 1u32..999,
        ) {
            let alpha = f64::from(alpha_milli) / 1000.0;
            let n = scores.len();
            let cal = CalibrationSet::from_scores(&scores).unwrap();
            let sc = sort_with_weights(&cal, &vec![1.0; n]).unwrap();
            let q = 1.0 - alpha;
            let rank = ceil_index(q * n as f64).max(1);
            prop_assert_eq!(weighted_quantile(&sc, q).threshold, sc.scores()[rank - 1]);

            let level = QuantileLevel::new(alpha).unwrap();
            if ceil_index(q * (n as f64 + 1.0)) == rank {
                prop_assert_eq!(standard_quantile(&cal, level), weighted_quantile(&sc, q).threshold);
            }
        }

        #[test]
        fn weighted_quantile_is_monotone_in_q(
            scores in scores_strategy(),
            seed_weights in prop::collection::vec(0.01f64..5.0, 60),
            q1 in 0.01f64..0.99,
            q2 in 0.01f64..0.99,
        ) {
            let n = scores.len();
            let cal = CalibrationSet::from_scores(&scores).unwrap();
            let sc = sort_with_weights(&cal, &seed_weights[..n]).unwrap();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(weighted_quantile(&sc, lo).threshold <= weighted_quantile(&sc, hi).threshold);
        }

        #[test]
        fn quantiles_are_scale_equivariant_and_weight_scale_invariant(
            scores in scores_strategy(),
            seed_weights in prop::collection::vec(0.01f64..5.0, 60),
            c in 0.1f64..10.0,
            alpha_milli in 1u32..999,
        ) {
            let n = scores.len();
            let q = 1.0 - f64::from(alpha_milli) / 1000.0;
            let w = &seed_weights[..n];
            let cal = CalibrationSet::from_scores(&scores).unwrap();
            let base = weighted_quantile(&sort_with_weights(&cal, w).unwrap(), q);

            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            let cal_c = CalibrationSet::from_scores(&scaled).unwrap();
            let wq_c = weighted_quantile(&sort_with_weights(&cal_c, w).unwrap(), q);
            prop_assert_eq!(wq_c.index, base.index);
            prop_assert!((wq_c.threshold - c * base.threshold).abs() <= 1e-9 * (1.0 + c * base.threshold));

            let level = QuantileLevel::new(1.0 - q).unwrap();
            let sq = standard_quantile(&cal, level);
            let sq_c = standard_quantile(&cal_c, level);
            if sq.is_finite() {
                prop_assert!((sq_c - c * sq).abs() <= 1e-9 * (1.0 + c * sq));
            } else {
                prop_assert!(sq_c.is_infinite());
            }

            let w_scaled: Vec<f64> = w.iter().map(|x| x * 7.0).collect();
            let wq_w = weighted_quantile(&sort_with_weights(&cal, &w_scaled).unwrap(), q);
            prop_assert_eq!(wq_w, base);
        }

        #[test]
        fn permuting_tied_records_keeps_threshold(
            n_ties in 2usize..10,
            rotate in 0usize..10,
            q in 0.05f64..0.95,
        ) {
            let mut recs: Vec<CalibrationRecord> = (0..n_ties as u64)
                .map(|i| CalibrationRecord::new(i, 1.0))
                .chain((0..5).map(|i| CalibrationRecord::new(100 + i, f64::from(i as u32) + 0.5)))
                .collect();
            let weights: Vec<f64> = recs.iter().map(|r| 1.0 + r.id as f64).collect();
            let cal = CalibrationSet::new(recs.clone()).unwrap();
            let base = weighted_quantile(&sort_with_weights(&cal, &weights).unwrap(), q);

            let k = rotate % recs.len();
            recs.rotate_left(k);
            let mut w2 = weights.clone();
            w2.rotate_left(k);
            let cal2 = CalibrationSet::new(recs).unwrap();
            let sc2 = sort_with_weights(&cal2, &w2).unwrap();
            prop_assert_eq!(weighted_quantile(&sc2, q), base);
        }
    }
}
