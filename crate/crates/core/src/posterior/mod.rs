//! Dirichlet posteriors over conformal thresholds.
//!
//! The normalized weights of a profile, in score-sorted order, scaled by its
//! `n_eff`, are the concentration parameters of a Dirichlet over quantile
//! spacings. Each Dirichlet draw yields a threshold (the first sorted score at
//! which the cumulative drawn mass reaches `q`); the collection of draws is the
//! threshold posterior.

mod dirichlet;
mod gamma;
mod loss_bound;
mod threshold;

pub use dirichlet::{sample_dirichlet, DirichletParams, DirichletSampler};
pub use gamma::BoostedGamma;
pub use loss_bound::{
    loss_upper_bound, risk_control_probability, risk_controlled_threshold, LossBoundModel,
    RiskControlledThreshold,
};
pub use threshold::{
    bqcp_threshold, hpd_index, hpd_threshold, prediction_interval, threshold_posterior,
    threshold_posterior_with_concentration, Interval, ThresholdPosterior, DEFAULT_HPD_LEVELS,
};
