//! Weighted Bayesian conformal prediction.
//!
//! Split conformal prediction turns a set of calibration nonconformity scores
//! into a single interval half-width. This crate replaces that point estimate
//! with a posterior: importance weights are mapped onto a Dirichlet over the
//! quantile spacings, concentrated by the Kish effective sample size, and the
//! induced distribution over the threshold is summarized by an HPD quantile,
//! its posterior standard deviation and `n_eff`.
//!
//! Module map:
//! - [`calibration`]: score records, stable sorting, the deterministic split
//!   and weighted quantile rules.
//! - [`weights`]: Gaussian spatial kernels, adaptive bandwidth, Kish `n_eff`.
//! - [`posterior`]: Dirichlet sampling, threshold posteriors, HPD selection
//!   and the stochastic loss upper bound.
//! - [`synthetic`]: the spatial benchmark generator (GRF noise, Moran's I).
//! - [`experiments`]: the six-method benchmark harness and report files.
//! - [`validation`]: empirical checks of the theoretical guarantees.

pub mod calibration;
pub mod error;
pub mod experiments;
pub mod posterior;
pub mod rng;
pub mod stats;
pub mod synthetic;
pub mod validation;
pub mod weights;

pub use calibration::{
    sort_with_weights, standard_quantile, weighted_quantile, CalibrationRecord, CalibrationSet,
    QuantileLevel, SortedCalibration, WeightedQuantile,
};
pub use error::{Result, WbcpError};
pub use posterior::{
    bqcp_threshold, hpd_threshold, prediction_interval, threshold_posterior, DirichletParams,
    Interval, ThresholdPosterior,
};
pub use weights::{kish_neff, KernelConfig, WeightProfile};

/// Two-dimensional location in the coordinate units of the input data.
pub type Point = [f64; 2];
