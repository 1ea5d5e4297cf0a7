//! The six-method benchmark harness: standard split CP, BQ-CP, and the fixed-
//! and adaptive-bandwidth geographic methods in their frequentist and
//! Bayesian forms.

mod data;
mod io;

use rayon::prelude::*;
use serde::Serialize;

pub use data::{Dataset, TestPoint};
pub use io::{
    emit_report, ingest_csv, write_synthetic_csv, ReportFiles, CSV_COLUMNS, SUMMARY_COLUMNS,
};

use crate::calibration::{
    standard_quantile, weighted_quantile, CalibrationSet, QuantileLevel, SortedCalibration,
};
use crate::error::{Result, WbcpError};
use crate::posterior::{
    bqcp_threshold, prediction_interval, threshold_posterior, Interval, ThresholdPosterior,
    DEFAULT_HPD_LEVELS,
};
use crate::rng::mix_seed;
use crate::stats::{mean, pearson};
use crate::weights::{kernel_profile, KernelConfig, WeightProfile};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method")]
pub enum MethodVariant {
    StandardCP,
    BQCP { beta: f64 },
    GeoCP { h: f64 },
    GeoBCP { h: f64, beta: f64 },
    AdaGeoCP { h0: f64, k: usize },
    AdaGeoBCP { h0: f64, k: usize, beta: f64 },
}

impl MethodVariant {
    pub const NAMES: [&'static str; 6] = [
        "StandardCP",
        "BQCP",
        "GeoCP",
        "GeoBCP",
        "AdaGeoCP",
        "AdaGeoBCP",
    ];

    /// All six methods in report order.
    pub fn all(cfg: &ExperimentConfig) -> Vec<Self> {
        Self::NAMES
            .iter()
            .map(|n| Self::from_name(n, cfg).expect("known name"))
            .collect()
    }

    /// Case-insensitive lookup; `-` and `_` are ignored.
    pub fn from_name(name: &str, cfg: &ExperimentConfig) -> Option<Self> {
        let key: String = name
            .chars()
            .filter(|c| *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        let (h, h0, k, beta) = (cfg.bandwidth, cfg.h0, cfg.k_neighbors, cfg.beta);
        Some(match key.as_str() {
            "standardcp" | "standard" | "cp" => Self::StandardCP,
            "bqcp" => Self::BQCP { beta },
            "geocp" => Self::GeoCP { h },
            "geobcp" => Self::GeoBCP { h, beta },
            "adageocp" => Self::AdaGeoCP { h0, k },
            "adageobcp" => Self::AdaGeoBCP { h0, k, beta },
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        Self::NAMES[self.rank()]
    }

    /// Position in the report order.
    pub fn rank(&self) -> usize {
        match self {
            Self::StandardCP => 0,
            Self::BQCP { .. } => 1,
            Self::GeoCP { .. } => 2,
            Self::GeoBCP { .. } => 3,
            Self::AdaGeoCP { .. } => 4,
            Self::AdaGeoBCP { .. } => 5,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            Self::BQCP { beta } | Self::GeoBCP { beta, .. } | Self::AdaGeoBCP { beta, .. } => {
                Some(beta)
            }
            _ => None,
        }
    }

    pub fn is_bayesian(&self) -> bool {
        self.beta().is_some()
    }

    pub fn kernel(&self) -> Option<KernelConfig> {
        match *self {
            Self::GeoCP { h } | Self::GeoBCP { h, .. } => Some(KernelConfig::fixed(h)),
            Self::AdaGeoCP { h0, k } | Self::AdaGeoBCP { h0, k, .. } => {
                Some(KernelConfig::adaptive(h0, k))
            }
            _ => None,
        }
    }

    pub fn is_geographic(&self) -> bool {
        self.kernel().is_some()
    }

    fn validate(&self) -> Result<()> {
        if let Some(beta) = self.beta() {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(WbcpError::InvalidInput(format!(
                    "beta must lie in (0, 1], got {beta}"
                )));
            }
        }
        let ok = match *self {
            Self::GeoCP { h } | Self::GeoBCP { h, .. } => h > 0.0 && h.is_finite(),
            Self::AdaGeoCP { h0, k } | Self::AdaGeoBCP { h0, k, .. } => {
                h0 > 0.0 && h0.is_finite() && k >= 1
            }
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(WbcpError::InvalidInput(format!(
                "invalid parameters for {self:?}"
            )))
        }
    }

    /// RNG stream of the method; independent of `beta` so that runs at
    /// different `beta` share posterior draws.
    fn seed(&self, master: u64) -> u64 {
        mix_seed(master, 0x5EED_0000 + self.rank() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mc_samples: usize,
    /// Fixed kernel bandwidth of the geographic methods.
    pub bandwidth: f64,
    /// Adaptive bandwidth scale.
    pub h0: f64,
    /// Neighbors in the adaptive bandwidth median.
    pub k_neighbors: usize,
    pub seed: u64,
    pub hpd_levels: Vec<f64>,
    /// Test-point ids whose posterior draws are kept for the sample dump.
    pub sample_ids: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.9,
            mc_samples: 1000,
            bandwidth: 1.0,
            h0: 1.0,
            k_neighbors: 5,
            seed: 42,
            hpd_levels: DEFAULT_HPD_LEVELS.to_vec(),
            sample_ids: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn level(&self) -> Result<QuantileLevel> {
        QuantileLevel::new(self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        self.level()?;
        if self.mc_samples == 0 {
            return Err(WbcpError::InvalidInput(
                "mc_samples must be positive".into(),
            ));
        }
        if let Some(b) = self.hpd_levels.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(WbcpError::InvalidInput(format!(
                "HPD level {b} outside (0, 1]"
            )));
        }
        Ok(())
    }
}

/// Seed of the posterior for one test point.
pub fn point_seed(variant: &MethodVariant, master: u64, id: u64) -> u64 {
    mix_seed(variant.seed(master), id)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub id: u64,
    pub location: Option<Point>,
    /// Interval half-width; infinite when the method cannot bound the score.
    pub half_width: f64,
    pub interval: Interval,
    pub covered: bool,
    pub neff: Option<f64>,
    pub sigma_post: Option<f64>,
    /// Weighted-CP threshold of the point's profile.
    pub wcp_threshold: Option<f64>,
    /// `(beta, threshold)` for the configured HPD levels.
    pub hpd: Vec<(f64, f64)>,
    pub noise_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub coverage: f64,
    pub mean_width: f64,
    pub mean_neff: Option<f64>,
    pub mean_sigma_post: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantRun {
    pub variant: MethodVariant,
    pub summary: SummaryRow,
    pub points: Vec<PointResult>,
}

impl VariantRun {
    pub fn sigma_posts(&self) -> Option<Vec<f64>> {
        self.points.iter().map(|p| p.sigma_post).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.half_width).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaNoiseCorrelation {
    pub method: String,
    pub pearson_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub calibration_size: usize,
    pub test_size: usize,
    pub runs: Vec<VariantRun>,
    /// Per geographic Bayesian method, when noise amplitudes are known.
    pub sigma_noise: Vec<SigmaNoiseCorrelation>,
}

impl ExperimentReport {
    pub fn summary(&self) -> Vec<&SummaryRow> {
        self.runs.iter().map(|r| &r.summary).collect()
    }

    pub fn run(&self, name: &str) -> Option<&VariantRun> {
        self.runs
            .iter()
            .find(|r| r.variant.name().eq_ignore_ascii_case(name))
    }
}

/// Fraction of `truths` inside their intervals.
pub fn coverage(intervals: &[Interval], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(WbcpError::InvalidInput(format!(
            "{} intervals but {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    if intervals.is_empty() {
        return Err(WbcpError::InvalidInput("no intervals".into()));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(i, &y)| i.contains(y))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Pearson correlation between per-point posterior spread and noise scale.
pub fn sigma_noise_correlation(sigma_post: &[f64], amplitudes: &[f64]) -> Result<f64> {
    pearson(sigma_post, amplitudes)
}

/// Weighted calibration for a kernel query.
pub fn weighted_calibration(
    cal: &CalibrationSet,
    order: &[usize],
    locations: &[Point],
    at: Point,
    kernel: &KernelConfig,
) -> Result<(SortedCalibration, WeightProfile)> {
    let profile = kernel_profile(at, locations, kernel)?;
    let sc = SortedCalibration::with_order(cal, order, profile.normalized())?;
    Ok((sc, profile))
}

/// Threshold and diagnostics of one method at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub half_width: f64,
    pub neff: Option<f64>,
    pub wcp_threshold: Option<f64>,
    pub posterior: Option<ThresholdPosterior>,
}

/// Shared per-run state.
struct Prepared<'a> {
    cal: &'a CalibrationSet,
    order: Vec<usize>,
    locations: Option<Vec<Point>>,
    level: QuantileLevel,
    m: usize,
    global: Option<PointEstimate>,
}

impl<'a> Prepared<'a> {
    fn new(
        variant: &MethodVariant,
        cal: &'a CalibrationSet,
        cfg: &ExperimentConfig,
    ) -> Result<Self> {
        let level = cfg.level()?;
        let locations = if let Some(kernel) = variant.kernel() {
            kernel.validate(cal.len())?;
            Some(cal.locations()?)
        } else {
            None
        };
        let mut prepared = Self {
            cal,
            order: cal.sort_order(),
            locations,
            level,
            m: cfg.mc_samples,
            global: None,
        };
        prepared.global = match *variant {
            MethodVariant::StandardCP => Some(PointEstimate {
                half_width: standard_quantile(cal, level),
                neff: None,
                wcp_threshold: None,
                posterior: None,
            }),
            MethodVariant::BQCP { beta } => {
                let tp = bqcp_threshold(cal, level.q(), cfg.mc_samples, variant.seed(cfg.seed))?;
                Some(PointEstimate {
                    half_width: tp.hpd(beta),
                    neff: Some(tp.neff),
                    wcp_threshold: Some(tp.wcp_threshold),
                    posterior: Some(tp),
                })
            }
            _ => None,
        };
        Ok(prepared)
    }

    fn estimate(
        &self,
        variant: &MethodVariant,
        at: Option<Point>,
        seed: u64,
    ) -> Result<PointEstimate> {
        if let Some(g) = &self.global {
            return Ok(g.clone());
        }
        let kernel = variant.kernel().expect("geographic variant");
        let locations = self.locations.as_deref().expect("locations resolved");
        let at = at.ok_or_else(|| {
            WbcpError::InvalidInput(format!("{} needs test point locations", variant.name()))
        })?;
        let (sc, profile) = weighted_calibration(self.cal, &self.order, locations, at, &kernel)?;
        match variant.beta() {
            None => {
                let wq = weighted_quantile(&sc, self.level.q());
                Ok(PointEstimate {
                    half_width: wq.threshold,
                    neff: Some(profile.neff()),
                    wcp_threshold: Some(wq.threshold),
                    posterior: None,
                })
            }
            Some(beta) => {
                let tp = threshold_posterior(&sc, &profile, self.level.q(), self.m, seed)?;
                Ok(PointEstimate {
                    half_width: tp.hpd(beta),
                    neff: Some(tp.neff),
                    wcp_threshold: Some(tp.wcp_threshold),
                    posterior: Some(tp),
                })
            }
        }
    }
}

/// Estimate for a single location, as used by the per-point prediction path.
pub fn estimate_at(
    variant: &MethodVariant,
    cal: &CalibrationSet,
    at: Option<Point>,
    id: u64,
    cfg: &ExperimentConfig,
) -> Result<PointEstimate> {
    variant.validate()?;
    cfg.validate()?;
    let prepared = Prepared::new(variant, cal, cfg)?;
    prepared.estimate(variant, at, point_seed(variant, cfg.seed, id))
}

/// Runs one method over every test point, in parallel, in point order.
pub fn run_variant(
    variant: &MethodVariant,
    data: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<VariantRun> {
    variant.validate()?;
    cfg.validate()?;
    if data.test.is_empty() {
        return Err(WbcpError::InvalidInput("dataset has no test points".into()));
    }
    if variant.is_geographic() {
        if let Some(t) = data.test.iter().find(|t| t.location.is_none()) {
            return Err(WbcpError::MissingLocations { id: t.id });
        }
    }
    let prepared = Prepared::new(variant, &data.calibration, cfg)?;
    let points: Vec<PointResult> = data
        .test
        .par_iter()
        .map(|t| {
            let est =
                prepared.estimate(variant, t.location, point_seed(variant, cfg.seed, t.id))?;
            let (center, truth) = t.center_and_truth();
            let interval = prediction_interval(center, est.half_width);
            let keep = cfg.sample_ids.contains(&t.id);
            Ok(PointResult {
                id: t.id,
                location: t.location,
                half_width: est.half_width,
                interval,
                covered: interval.contains(truth),
                neff: est.neff,
                sigma_post: est.posterior.as_ref().map(|p| p.sigma_post),
                wcp_threshold: est.wcp_threshold,
                hpd: est
                    .posterior
                    .as_ref()
                    .map(|p| p.hpd_levels(&cfg.hpd_levels))
                    .unwrap_or_default(),
                noise_amplitude: t.noise_amplitude,
                samples: est.posterior.filter(|_| keep).map(|p| p.samples),
            })
        })
        .collect::<Result<_>>()?;
    let summary = summarize(variant, &points);
    Ok(VariantRun {
        variant: *variant,
        summary,
        points,
    })
}

fn summarize(variant: &MethodVariant, points: &[PointResult]) -> SummaryRow {
    let covered = points.iter().filter(|p| p.covered).count();
    let bayes = variant.is_bayesian();
    let collect = |f: fn(&PointResult) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = points.iter().map(f).collect();
        v.map(|v| mean(&v)).filter(|_| bayes)
    };
    SummaryRow {
        method: variant.name().to_string(),
        coverage: covered as f64 / points.len() as f64,
        mean_width: mean(&points.iter().map(|p| p.half_width).collect::<Vec<_>>()),
        mean_neff: collect(|p| p.neff),
        mean_sigma_post: collect(|p| p.sigma_post),
    }
}

/// Runs the given methods in report order.
pub fn run_experiment(
    data: &Dataset,
    variants: &[MethodVariant],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let mut variants = variants.to_vec();
    variants.sort_by_key(|v| v.rank());
    variants.dedup_by_key(|v| v.rank());
    let runs = variants
        .iter()
        .map(|v| run_variant(v, data, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut sigma_noise = Vec::new();
    for run in runs
        .iter()
        .filter(|r| r.variant.is_geographic() && r.variant.is_bayesian())
    {
        let amps: Option<Vec<f64>> = run.points.iter().map(|p| p.noise_amplitude).collect();
        if let (Some(amps), Some(sig)) = (amps, run.sigma_posts()) {
            if let Ok(r) = sigma_noise_correlation(&sig, &amps) {
                sigma_noise.push(SigmaNoiseCorrelation {
                    method: run.variant.name().to_string(),
                    pearson_r: r,
                });
            }
        }
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        calibration_size: data.calibration.len(),
        test_size: data.test.len(),
        runs,
        sigma_noise,
    })
}
