//! Importance weights for one test query.
//!
//! Spatial weights use the Gaussian kernel `exp(-d^2 / (2 h^2))` with either a
//! fixed bandwidth or one scaled from the median distance to the `k` nearest
//! calibration points. Every profile carries its Kish effective sample size.

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationSet;
use crate::error::{Result, WbcpError};
use crate::Point;

/// Normalized weights below this are dropped before building Dirichlet
/// parameters; Gamma variates with vanishing shape carry no mass.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

/// Default `h_min` as a fraction of the calibration bounding-box diagonal.
pub const DEFAULT_H_MIN_FRACTION: f64 = 1e-6;

/// Kish effective sample size `(sum w)^2 / sum w^2`.
///
/// Exactly equal positive weights return their count exactly.
pub fn kish_neff(raw: &[f64]) -> Result<f64> {
    let mut max = 0.0f64;
    for &w in raw {
        if !w.is_finite() || w < 0.0 {
            return Err(WbcpError::InvalidInput(format!(
                "weights must be finite and nonnegative, got {w}"
            )));
        }
        max = max.max(w);
    }
    if max <= 0.0 {
        return Err(WbcpError::WeightDegeneracy("all weights are zero".into()));
    }
    let positive = raw.iter().filter(|&&w| w > 0.0).count();
    if raw.iter().all(|&w| w == 0.0 || w == max) {
        return Ok(positive as f64);
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &w in raw {
        let x = w / max;
        s1 += x;
        s2 += x * x;
    }
    Ok((s1 * s1 / s2).clamp(1.0, positive as f64))
}

/// Raw weights, their normalization and `n_eff` for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    raw: Vec<f64>,
    normalized: Vec<f64>,
    neff: f64,
    uniform: bool,
}

impl WeightProfile {
    /// Normalizes `raw`, prunes entries below [`PRUNE_THRESHOLD`] and
    /// renormalizes. `n_eff` is computed on the pruned weights.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        kish_neff(&raw)?;
        let total: f64 = raw.iter().sum();
        let mut normalized: Vec<f64> = raw
            .iter()
            .map(|&w| {
                let x = w / total;
                if x < PRUNE_THRESHOLD {
                    0.0
                } else {
                    x
                }
            })
            .collect();
        let max = normalized.iter().copied().fold(0.0, f64::max);
        let uniform = normalized.iter().all(|&w| w == 0.0 || w == max);
        let neff = kish_neff(&normalized)?;
        if uniform {
            let share = 1.0 / neff;
            for w in normalized.iter_mut().filter(|w| **w > 0.0) {
                *w = share;
            }
        } else {
            let kept: f64 = normalized.iter().sum();
            for w in &mut normalized {
                *w /= kept;
            }
        }
        Ok(Self {
            raw,
            normalized,
            neff,
            uniform,
        })
    }

    /// Equal weights on `n` points: `n_eff = n`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_raw(vec![1.0; n])
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn neff(&self) -> f64 {
        self.neff
    }

    /// True when every retained weight is exactly equal.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed {
        h: f64,
    },
    Adaptive {
        h0: f64,
        k: usize,
        /// Floor on the local bandwidth; `None` means
        /// [`DEFAULT_H_MIN_FRACTION`] of the calibration bounding-box diagonal.
        h_min: Option<f64>,
    },
}

/// Gaussian kernel configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed { h },
        }
    }

    pub fn adaptive(h0: f64, k: usize) -> Self {
        Self {
            bandwidth: Bandwidth::Adaptive { h0, k, h_min: None },
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let ok = match self.bandwidth {
            Bandwidth::Fixed { h } => h > 0.0 && h.is_finite(),
            Bandwidth::Adaptive { h0, k, h_min } => {
                h0 > 0.0
                    && h0.is_finite()
                    && k >= 1
                    && k <= n
                    && h_min.is_none_or(|m| m > 0.0 && m.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(WbcpError::InvalidInput(format!(
                "invalid kernel configuration {self:?} for {n} calibration points"
            )))
        }
    }

    /// Bandwidth at `test`, resolving the adaptive rule if configured.
    pub fn bandwidth_at(&self, test: Point, locs: &[Point]) -> f64 {
        match self.bandwidth {
            Bandwidth::Fixed { h } => h,
            Bandwidth::Adaptive { h0, k, h_min } => {
                let floor = h_min.unwrap_or_else(|| DEFAULT_H_MIN_FRACTION * bbox_diagonal(locs));
                adaptive_bandwidth(test, locs, h0, k, floor)
            }
        }
    }
}

#[inline]
fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

pub fn distance(a: Point, b: Point) -> f64 {
    dist2(a, b).sqrt()
}

pub fn bbox_diagonal(locs: &[Point]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in locs {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if locs.is_empty() {
        return 0.0;
    }
    distance(lo, hi)
}

/// `w_i = exp(-|s - s_i|^2 / (2 h^2))`.
pub fn gaussian_kernel_weights(test: Point, locs: &[Point], h: f64) -> Vec<f64> {
    let scale = 1.0 / (2.0 * h * h);
    locs.iter()
        .map(|&p| (-dist2(test, p) * scale).exp())
        .collect()
}

/// `max(h_min, h0 * median of the k smallest distances)`, lower median for
/// even `k`.
pub fn adaptive_bandwidth(test: Point, locs: &[Point], h0: f64, k: usize, h_min: f64) -> f64 {
    let k = k.clamp(1, locs.len().max(1));
    let mut d: Vec<f64> = locs.iter().map(|&p| distance(test, p)).collect();
    if d.is_empty() {
        return h_min;
    }
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    let nearest = &mut d[..k];
    let mid = (k - 1) / 2;
    let (_, median, _) = nearest.select_nth_unstable_by(mid, f64::total_cmp);
    (h0 * *median).max(h_min)
}

/// Kernel weights at `test` over calibration locations `locs`.
///
/// The weights are computed relative to the nearest point
/// (`exp(-(d_i^2 - d_min^2) / (2 h^2))`), which leaves the normalized weights
/// unchanged but keeps the nearest weight at 1 when `h` is far below every
/// distance.
pub fn kernel_profile(test: Point, locs: &[Point], cfg: &KernelConfig) -> Result<WeightProfile> {
    cfg.validate(locs.len())?;
    if !(test[0].is_finite() && test[1].is_finite()) {
        return Err(WbcpError::InvalidInput(
            "test location is not finite".into(),
        ));
    }
    let h = cfg.bandwidth_at(test, locs);
    let d2: Vec<f64> = locs.iter().map(|&p| dist2(test, p)).collect();
    let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = 1.0 / (2.0 * h * h);
    let raw = d2.iter().map(|&x| (-(x - d2_min) * scale).exp()).collect();
    WeightProfile::from_raw(raw)
}

/// Kernel weight profile for `test` against the locations in `calib`.
pub fn profile_from_kernel(
    test: Point,
    calib: &CalibrationSet,
    cfg: &KernelConfig,
) -> Result<WeightProfile> {
    let locs = calib.locations()?;
    kernel_profile(test, &locs, cfg)
}

/// Design-effect deflation `n_eff / (1 + (k_eff - 1) r_bar)` for correlated
/// residuals. Reported as a diagnostic only.
pub fn design_effect_adjustment(neff: f64, k_eff: f64, r_bar: f64) -> f64 {
    neff / (1.0 + (k_eff - 1.0) * r_bar)
}
