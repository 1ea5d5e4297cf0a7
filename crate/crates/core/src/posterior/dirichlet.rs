use rand::Rng;

use super::gamma::BoostedGamma;
use crate::calibration::SortedCalibration;
use crate::error::{Result, WbcpError};
use crate::rng::rng_from_seed;
use crate::weights::WeightProfile;

/// Dirichlet concentration parameters over the score-sorted calibration
/// points that carry weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    /// Position in score-sorted order of each component.
    support: Vec<usize>,
    alphas: Vec<f64>,
    alpha0: f64,
}

impl DirichletParams {
    /// Parameters over all components, in the given order.
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(WbcpError::InvalidInput(
                "Dirichlet needs at least one component".into(),
            ));
        }
        if let Some(bad) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(WbcpError::InvalidInput(format!(
                "Dirichlet parameters must be positive, got {bad}"
            )));
        }
        let alpha0 = alphas.iter().sum();
        Ok(Self {
            support: (0..alphas.len()).collect(),
            alphas,
            alpha0,
        })
    }

    /// `alpha_i = c * w_(i)` over the positive sorted weights of `sc`.
    pub fn with_concentration(sc: &SortedCalibration, concentration: f64) -> Result<Self> {
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(WbcpError::InvalidInput(format!(
                "concentration must be positive, got {concentration}"
            )));
        }
        let mut support = Vec::new();
        let mut alphas = Vec::new();
        for (i, &w) in sc.weights().iter().enumerate() {
            if w > 0.0 {
                support.push(i);
                alphas.push(concentration * w);
            }
        }
        if support.is_empty() {
            return Err(WbcpError::WeightDegeneracy("no positive weights".into()));
        }
        let alpha0 = alphas.iter().sum();
        Ok(Self {
            support,
            alphas,
            alpha0,
        })
    }

    /// `alpha_i = n_eff * w_(i)`; a uniform profile gives exactly
    /// `Dir(1, ..., 1)`.
    pub fn from_profile(sc: &SortedCalibration, profile: &WeightProfile) -> Result<Self> {
        if profile.len() != sc.len() {
            return Err(WbcpError::InvalidInput(format!(
                "profile has {} weights but calibration has {} scores",
                profile.len(),
                sc.len()
            )));
        }
        if profile.is_uniform() {
            let support: Vec<usize> = sc
                .weights()
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, _)| i)
                .collect();
            let alphas = vec![1.0; support.len()];
            let alpha0 = support.len() as f64;
            return Ok(Self {
                support,
                alphas,
                alpha0,
            });
        }
        Self::with_concentration(sc, profile.neff())
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    /// Score-sorted position of each component.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn sampler(&self) -> DirichletSampler {
        DirichletSampler {
            gammas: self.alphas.iter().map(|&a| BoostedGamma::new(a)).collect(),
        }
    }
}

/// Draws unnormalized Gamma vectors for a fixed parameter set.
#[derive(Debug, Clone)]
pub struct DirichletSampler {
    gammas: Vec<BoostedGamma>,
}

impl DirichletSampler {
    /// Fills `out` with independent `Gamma(alpha_i)` draws and returns their
    /// sum. Dividing by the sum gives a Dirichlet draw.
    #[inline]
    pub fn draw_unnormalized<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (slot, g) in out.iter_mut().zip(&self.gammas) {
            let x = g.sample(rng);
            *slot = x;
            total += x;
        }
        total
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut v = vec![0.0; self.gammas.len()];
        let total = self.draw_unnormalized(rng, &mut v);
        for x in &mut v {
            *x /= total;
        }
        v
    }
}

/// `m` Dirichlet draws from the stream seeded by `seed`.
pub fn sample_dirichlet(params: &DirichletParams, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let sampler = params.sampler();
    let mut rng = rng_from_seed(seed);
    (0..m).map(|_| sampler.draw(&mut rng)).collect()
}
