//! The stochastic upper bound `L+ = sum_i U_i l_(i)` on expected loss, with
//! `U ~ Dir(alpha_1, ..., alpha_n, alpha_{n+1})` and `l_(n+1) = B`.

use super::dirichlet::DirichletParams;
use super::threshold::hpd_index;
use crate::error::{Result, WbcpError};
use crate::rng::rng_from_seed;
use crate::weights::WeightProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct LossBoundModel {
    /// `l_(1) <= ... <= l_(n)` followed by the bound `B`.
    losses: Vec<f64>,
    params: DirichletParams,
}

impl LossBoundModel {
    /// `sorted_losses` and `alphas` are aligned; `extra_alpha` is the weight
    /// of the bound component.
    pub fn new(
        sorted_losses: Vec<f64>,
        alphas: Vec<f64>,
        upper_bound: f64,
        extra_alpha: f64,
    ) -> Result<Self> {
        if sorted_losses.len() != alphas.len() {
            return Err(WbcpError::InvalidInput(format!(
                "{} losses but {} Dirichlet parameters",
                sorted_losses.len(),
                alphas.len()
            )));
        }
        if sorted_losses.iter().any(|l| !l.is_finite()) || !upper_bound.is_finite() {
            return Err(WbcpError::InvalidInput("losses must be finite".into()));
        }
        if sorted_losses.windows(2).any(|w| w[0] > w[1]) {
            return Err(WbcpError::InvalidInput(
                "losses must be sorted ascending".into(),
            ));
        }
        if let Some(&max_loss) = sorted_losses.last() {
            if upper_bound < max_loss {
                return Err(WbcpError::BoundViolation {
                    bound: upper_bound,
                    max_loss,
                });
            }
        }
        let mut alphas = alphas;
        alphas.push(extra_alpha);
        let params = DirichletParams::new(alphas)?;
        let mut losses = sorted_losses;
        losses.push(upper_bound);
        Ok(Self { losses, params })
    }

    /// Sorts `losses` (record order, aligned with `profile`) and builds the
    /// `(n + 1)`-component model with `alpha_i = n_eff * w_i`. Zero-weight
    /// records are dropped. `extra_alpha` defaults to `n_eff / (n + 1)`.
    pub fn from_profile(
        losses: &[f64],
        profile: &WeightProfile,
        upper_bound: f64,
        extra_alpha: Option<f64>,
    ) -> Result<Self> {
        if losses.len() != profile.len() {
            return Err(WbcpError::InvalidInput(format!(
                "{} losses but profile has {} weights",
                losses.len(),
                profile.len()
            )));
        }
        let neff = profile.neff();
        let mut pairs: Vec<(f64, f64)> = losses
            .iter()
            .zip(profile.normalized())
            .filter(|(_, &w)| w > 0.0)
            .map(|(&l, &w)| (l, if profile.is_uniform() { 1.0 } else { neff * w }))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let extra = extra_alpha.unwrap_or(neff / (losses.len() as f64 + 1.0));
        let (sorted, alphas) = pairs.into_iter().unzip();
        Self::new(sorted, alphas, upper_bound, extra)
    }

    /// Losses including the trailing bound.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn upper_bound(&self) -> f64 {
        *self.losses.last().expect("bound component")
    }

    pub fn alphas(&self) -> &[f64] {
        self.params.alphas()
    }

    /// `sum_i alpha_i l_(i) / alpha_0`.
    pub fn expected_bound(&self) -> f64 {
        self.losses
            .iter()
            .zip(self.params.alphas())
            .map(|(l, a)| l * a)
            .sum::<f64>()
            / self.params.alpha0()
    }

    /// Same parameters with different losses, for coupled comparisons.
    pub fn with_losses(&self, sorted_losses: Vec<f64>, upper_bound: f64) -> Result<Self> {
        let n = self.losses.len() - 1;
        let alphas = self.params.alphas();
        Self::new(sorted_losses, alphas[..n].to_vec(), upper_bound, alphas[n])
    }
}

/// `m` draws of `L+`. The Dirichlet stream depends only on the parameters and
/// `seed`, so models sharing parameters are coupled draw by draw.
pub fn loss_upper_bound(model: &LossBoundModel, m: usize, seed: u64) -> Vec<f64> {
    let sampler = model.params.sampler();
    let lo = model.losses[0];
    let hi = model.upper_bound();
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; model.losses.len()];
    (0..m)
        .map(|_| {
            let total = sampler.draw_unnormalized(&mut rng, &mut buf);
            let acc: f64 = buf.iter().zip(&model.losses).map(|(u, l)| u * l).sum();
            (acc / total).clamp(lo, hi)
        })
        .collect()
}

/// Fraction of `L+` draws at or below `alpha`.
pub fn risk_control_probability(samples: &[f64], alpha: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&l| l <= alpha).count() as f64 / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskControlledThreshold {
    /// Smallest candidate threshold with `Pr(L+ <= alpha) >= beta`, `None`
    /// when even the largest score misses it.
    pub threshold: Option<f64>,
    /// `Pr(L+ <= alpha)` at the returned threshold (or at the largest score).
    pub probability: f64,
}

/// Miscoverage losses `1[score > lambda]` for each score.
fn miscoverage(scores: &[f64], lambda: f64) -> Vec<f64> {
    scores
        .iter()
        .map(|&s| if s > lambda { 1.0 } else { 0.0 })
        .collect()
}

/// Searches the sorted score grid for the smallest `lambda` whose miscoverage
/// bound satisfies `Pr(L+(lambda) <= alpha) >= beta`, all candidates sharing
/// one Dirichlet stream.
pub fn risk_controlled_threshold(
    scores: &[f64],
    profile: &WeightProfile,
    alpha: f64,
    beta: f64,
    m: usize,
    seed: u64,
) -> Result<RiskControlledThreshold> {
    let mut grid: Vec<f64> = scores.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let probability_at = |lambda: f64| -> Result<f64> {
        let model = LossBoundModel::from_profile(&miscoverage(scores, lambda), profile, 1.0, None)?;
        Ok(risk_control_probability(
            &loss_upper_bound(&model, m, seed),
            alpha,
        ))
    };
    let need = (hpd_index(beta, m) + 1) as f64 / m as f64;
    let top = probability_at(*grid.last().expect("non-empty scores"))?;
    if top < need {
        return Ok(RiskControlledThreshold {
            threshold: None,
            probability: top,
        });
    }
    // the probability is monotone in lambda under the shared stream
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    let mut best = top;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let p = probability_at(grid[mid])?;
        if p >= need {
            hi = mid;
            best = p;
        } else {
            lo = mid + 1;
        }
    }
    if hi == grid.len() - 1 {
        best = top;
    }
    Ok(RiskControlledThreshold {
        threshold: Some(grid[hi]),
        probability: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, sample_std};

    #[test]
    fn constant_losses_give_a_constant_bound() {
        let model = LossBoundModel::new(vec![0.3; 5], vec![1.0; 5], 0.3, 0.8).unwrap();
        assert!(loss_upper_bound(&model, 200, 1).iter().all(|&l| l == 0.3));
    }

    #[test]
    fn mean_matches_alpha_weighted_losses() {
        let losses = vec![0.0, 0.1, 0.4, 0.4, 0.9];
        let alphas = vec![0.5, 2.0, 1.0, 3.0, 0.7];
        let model = LossBoundModel::new(losses, alphas, 1.0, 0.6).unwrap();
        let m = 100_000;
        let s = loss_upper_bound(&model, m, 3);
        let se = sample_std(&s) / (m as f64).sqrt();
        assert!((mean(&s) - model.expected_bound()).abs() < 3.0 * se);
        assert!(s.iter().all(|&l| (0.0..=1.0).contains(&l)));
    }

    #[test]
    fn single_loss_reduces_to_beta_mean() {
        let (a1, a2) = (2.0, 3.0);
        let model = LossBoundModel::new(vec![0.0], vec![a1], 1.0, a2).unwrap();
        let m = 100_000;
        let s = loss_upper_bound(&model, m, 8);
        let expected = a2 / (a1 + a2);
        let sd = (a1 * a2 / ((a1 + a2).powi(2) * (a1 + a2 + 1.0))).sqrt();
        assert!((mean(&s) - expected).abs() < 3.0 * sd / (m as f64).sqrt());
    }

    #[test]
    fn bound_below_max_loss_is_rejected() {
        assert!(matches!(
            LossBoundModel::new(vec![0.1, 0.5], vec![1.0, 1.0], 0.4, 1.0),
            Err(WbcpError::BoundViolation { .. })
        ));
        assert!(LossBoundModel::new(vec![0.5, 0.1], vec![1.0, 1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn probability_edges() {
        assert_eq!(risk_control_probability(&[0.01, 0.02], 0.1), 1.0);
        assert_eq!(risk_control_probability(&[0.5, 0.7], 0.1), 0.0);
    }

    #[test]
    fn default_extra_alpha_is_neff_over_n_plus_one() {
        let profile = WeightProfile::from_raw(vec![1.0, 2.0, 3.0]).unwrap();
        let model = LossBoundModel::from_profile(&[0.2, 0.0, 0.1], &profile, 1.0, None).unwrap();
        assert_eq!(model.losses(), &[0.0, 0.1, 0.2, 1.0]);
        let extra = *model.alphas().last().unwrap();
        assert!((extra - profile.neff() / 4.0).abs() < 1e-12);
        let total: f64 = model.alphas()[..3].iter().sum();
        assert!((total - profile.neff()).abs() < 1e-9 * profile.neff());
    }

    #[test]
    fn risk_threshold_meets_beta_by_construction() {
        let scores: Vec<f64> = (0..150)
            .map(|i| f64::from(i % 37) * 0.13 + f64::from(i) * 0.001)
            .collect();
        let profile =
            WeightProfile::from_raw((0..150).map(|i| 0.5 + f64::from(i % 5)).collect()).unwrap();
        let r = risk_controlled_threshold(&scores, &profile, 0.1, 0.9, 1000, 12).unwrap();
        let lambda = r.threshold.expect("feasible");
        let model =
            LossBoundModel::from_profile(&miscoverage(&scores, lambda), &profile, 1.0, None)
                .unwrap();
        let p = risk_control_probability(&loss_upper_bound(&model, 1000, 12), 0.1);
        assert_eq!(p, r.probability);
        assert!(p >= 0.9);
        // the next smaller candidate fails
        let mut grid = scores.clone();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let pos = grid.iter().position(|&g| g == lambda).unwrap();
        if pos > 0 {
            let model = LossBoundModel::from_profile(
                &miscoverage(&scores, grid[pos - 1]),
                &profile,
                1.0,
                None,
            )
            .unwrap();
            assert!(risk_control_probability(&loss_upper_bound(&model, 1000, 12), 0.1) < 0.9);
        }
    }
}
