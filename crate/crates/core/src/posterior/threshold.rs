use serde::Serialize;

use super::dirichlet::DirichletParams;
use crate::calibration::{ceil_index, weighted_quantile, CalibrationSet, SortedCalibration};
use crate::error::{Result, WbcpError};
use crate::rng::rng_from_seed;
use crate::stats::{mean, sample_std};
use crate::weights::WeightProfile;

/// Posterior percentiles reported per point unless configured otherwise.
pub const DEFAULT_HPD_LEVELS: [f64; 6] = [0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

/// Monte Carlo posterior over the conformal threshold for one weight profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdPosterior {
    /// Threshold draws in generation order. Each is one of the calibration
    /// scores.
    pub samples: Vec<f64>,
    /// Score-sorted position of each draw's crossing index `K`.
    pub indices: Vec<usize>,
    pub mean: f64,
    /// Sample standard deviation with the `M - 1` divisor.
    pub sigma_post: f64,
    pub neff: f64,
    /// Deterministic weighted-CP threshold for the same profile.
    pub wcp_threshold: f64,
    pub wcp_index: usize,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl ThresholdPosterior {
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    /// The `ceil(beta * M)`-th smallest draw.
    pub fn hpd(&self, beta: f64) -> f64 {
        self.sorted[hpd_index(beta, self.sorted.len())]
    }

    pub fn hpd_levels(&self, betas: &[f64]) -> Vec<(f64, f64)> {
        betas.iter().map(|&b| (b, self.hpd(b))).collect()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }
}

/// Zero-based position of the `ceil(beta * m)`-th order statistic.
pub fn hpd_index(beta: f64, m: usize) -> usize {
    ceil_index(beta * m as f64).clamp(1, m.max(1)) - 1
}

pub fn hpd_threshold(tp: &ThresholdPosterior, beta: f64) -> f64 {
    tp.hpd(beta)
}

fn validate(q: f64, m: usize) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(WbcpError::InvalidInput(format!(
            "q must lie in (0, 1), got {q}"
        )));
    }
    if m == 0 {
        return Err(WbcpError::InvalidInput(
            "need at least one Monte Carlo sample".into(),
        ));
    }
    Ok(())
}

fn run(
    sc: &SortedCalibration,
    params: &DirichletParams,
    neff: f64,
    q: f64,
    m: usize,
    seed: u64,
) -> ThresholdPosterior {
    let sampler = params.sampler();
    let support = params.support();
    let scores = sc.scores();
    let last = support.len() - 1;
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; support.len()];
    let mut samples = Vec::with_capacity(m);
    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        let total = sampler.draw_unnormalized(&mut rng, &mut buf);
        let target = q * total;
        let mut acc = 0.0;
        // the final partial sum is the total, so the walk always ends
        let mut k = last;
        for (j, &g) in buf.iter().enumerate() {
            acc += g;
            if acc >= target {
                k = j;
                break;
            }
        }
        let pos = support[k];
        indices.push(pos);
        samples.push(scores[pos]);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let wq = weighted_quantile(sc, q);
    ThresholdPosterior {
        mean: mean(&samples),
        sigma_post: sample_std(&samples),
        samples,
        indices,
        neff,
        wcp_threshold: wq.threshold,
        wcp_index: wq.index,
        sorted,
    }
}

/// Threshold posterior under `Dir(n_eff * w_(1), ..., n_eff * w_(n))`.
///
/// For each of `m` draws the threshold is the first sorted score whose
/// cumulative drawn mass reaches `q`. Bitwise reproducible for fixed inputs
/// and `seed`.
pub fn threshold_posterior(
    sc: &SortedCalibration,
    profile: &WeightProfile,
    q: f64,
    m: usize,
    seed: u64,
) -> Result<ThresholdPosterior> {
    validate(q, m)?;
    let params = DirichletParams::from_profile(sc, profile)?;
    Ok(run(sc, &params, profile.neff(), q, m, seed))
}

/// As [`threshold_posterior`] with an explicit Dirichlet concentration `c`
/// in place of `n_eff`.
pub fn threshold_posterior_with_concentration(
    sc: &SortedCalibration,
    concentration: f64,
    q: f64,
    m: usize,
    seed: u64,
) -> Result<ThresholdPosterior> {
    validate(q, m)?;
    let params = DirichletParams::with_concentration(sc, concentration)?;
    Ok(run(sc, &params, concentration, q, m, seed))
}

/// The i.i.d. special case: uniform weights, `Dir(1, ..., 1)`.
pub fn bqcp_threshold(
    cal: &CalibrationSet,
    q: f64,
    m: usize,
    seed: u64,
) -> Result<ThresholdPosterior> {
    let profile = WeightProfile::uniform(cal.len())?;
    let sc = SortedCalibration::new(cal, profile.normalized())?;
    threshold_posterior(&sc, &profile, q, m, seed)
}

/// Symmetric interval `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }

    pub fn is_whole_line(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }
}

pub fn prediction_interval(center: f64, half_width: f64) -> Interval {
    if half_width == f64::INFINITY {
        return Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        };
    }
    Interval {
        lo: center - half_width,
        hi: center + half_width,
    }
}
