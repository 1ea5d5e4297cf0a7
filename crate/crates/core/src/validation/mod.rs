//! Empirical checks of the calibration, concentration, dominance and
//! conditional-coverage guarantees, plus the limit and adaptive-bandwidth
//! properties. Each check is deterministic per seed and reports the measured
//! statistic next to its threshold.

mod checks;

use rayon::prelude::*;
use serde::Serialize;

pub use checks::{
    check_adaptive_regularization, check_concentration, check_conditional_coverage,
    check_dominance_construction, check_limits, check_tail_bound, check_variance_matching,
    concentration_bound, tail_bound,
};

use crate::error::{Result, WbcpError};
pub use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Variance,
    Concentration,
    Limits,
    Coverage,
    Dominance,
    Tail,
    Adaptive,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        Self::Variance,
        Self::Concentration,
        Self::Limits,
        Self::Coverage,
        Self::Dominance,
        Self::Tail,
        Self::Adaptive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Variance => "variance",
            Self::Concentration => "concentration",
            Self::Limits => "limits",
            Self::Coverage => "coverage",
            Self::Dominance => "dominance",
            Self::Tail => "tail",
            Self::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                WbcpError::InvalidInput(format!(
                    "unknown check `{s}`; expected one of {}",
                    Self::ALL.map(|c| c.as_str()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceConfig {
    pub n: usize,
    pub q: f64,
    pub mc_samples: usize,
    /// Relative tolerance on `Var(S_k*)`.
    pub tolerance: f64,
    pub ks_profiles: usize,
    pub ks_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationConfig {
    pub n: usize,
    pub q: f64,
    pub targets: Vec<f64>,
    pub locations: Vec<[f64; 2]>,
    pub mc_samples: usize,
    pub slope_range: (f64, f64),
    pub constant: f64,
    /// Tighter constant that is reported, not enforced.
    pub tight_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitsConfig {
    pub n: usize,
    pub q: f64,
    pub mc_samples: usize,
    pub wide_factor: f64,
    pub narrow_factor: f64,
    pub alpha_tolerance: f64,
    pub neff_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageConfig {
    pub replicates: usize,
    pub n: usize,
    pub n_large: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mc_samples: usize,
    pub tolerance: f64,
    pub median_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceConfig {
    pub instances: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailConfig {
    pub seeds: usize,
    pub q: f64,
    pub mc_samples: usize,
    pub multiples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveConfig {
    pub n: usize,
    pub grid: usize,
    pub h0: f64,
    pub k: usize,
    pub min_neff: f64,
    pub spike_ratio: f64,
    pub fixed_h: f64,
    pub remote_point: [f64; 2],
}

/// Sizes, tolerances and the seed of every check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub seed: u64,
    pub variance: VarianceConfig,
    pub concentration: ConcentrationConfig,
    pub limits: LimitsConfig,
    pub coverage: CoverageConfig,
    pub dominance: DominanceConfig,
    pub tail: TailConfig,
    pub adaptive: AdaptiveConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            variance: VarianceConfig {
                n: 50,
                q: 0.9,
                mc_samples: 200_000,
                tolerance: 0.02,
                ks_profiles: 3,
                ks_samples: 50_000,
            },
            concentration: ConcentrationConfig {
                n: 3000,
                q: 0.9,
                targets: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
                locations: vec![
                    [4.0, 4.0],
                    [8.0, 4.0],
                    [4.0, 8.0],
                    [8.0, 8.0],
                    [6.0, 6.0],
                    [10.0, 10.0],
                ],
                mc_samples: 2000,
                slope_range: (-0.65, -0.35),
                constant: 8.0,
                tight_constant: 2.0,
            },
            limits: LimitsConfig {
                n: 200,
                q: 0.9,
                mc_samples: 1000,
                wide_factor: 1e6,
                narrow_factor: 1e-3,
                alpha_tolerance: 1e-6,
                neff_tolerance: 1e-6,
            },
            coverage: CoverageConfig {
                replicates: 400,
                n: 100,
                n_large: 400,
                alpha: 0.1,
                beta: 0.9,
                mc_samples: 1000,
                tolerance: 0.02,
                median_tolerance: 0.015,
            },
            dominance: DominanceConfig {
                instances: 20,
                alpha: 0.1,
                beta: 0.9,
                mc_samples: 1000,
            },
            tail: TailConfig {
                seeds: 10,
                q: 0.9,
                mc_samples: 20_000,
                multiples: vec![2.0, 3.0],
            },
            adaptive: AdaptiveConfig {
                n: 1500,
                grid: 50,
                h0: 1.0,
                k: 25,
                min_neff: 2.0,
                spike_ratio: 10.0,
                fixed_h: 0.5,
                remote_point: [30.0, 30.0],
            },
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    /// Headline measured value.
    pub statistic: f64,
    /// Value the statistic is compared against.
    pub threshold: f64,
    pub pass: bool,
    /// Non-failing observations worth surfacing.
    pub flags: Vec<String>,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckReport>,
}

pub fn run_check(name: CheckName, cfg: &OracleConfig) -> Result<CheckReport> {
    match name {
        CheckName::Variance => check_variance_matching(cfg),
        CheckName::Concentration => check_concentration(cfg),
        CheckName::Limits => check_limits(cfg),
        CheckName::Coverage => check_conditional_coverage(cfg),
        CheckName::Dominance => check_dominance_construction(cfg),
        CheckName::Tail => check_tail_bound(cfg),
        CheckName::Adaptive => check_adaptive_regularization(cfg),
    }
}

/// Runs the selected checks (all when `only` is empty) in suite order.
pub fn run_suite(cfg: &OracleConfig, only: &[CheckName]) -> Result<SuiteReport> {
    let names: Vec<CheckName> = CheckName::ALL
        .into_iter()
        .filter(|c| only.is_empty() || only.contains(c))
        .collect();
    let checks = names
        .par_iter()
        .map(|&c| run_check(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        seed: cfg.seed,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}
