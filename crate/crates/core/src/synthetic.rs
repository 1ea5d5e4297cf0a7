//! The synthetic spatial benchmark: clustered locations on `[0, 20]^2`, a
//! smooth true surface, and Gaussian-random-field noise whose amplitude
//! depends on the quadrant.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::calibration::{CalibrationRecord, CalibrationSet};
use crate::error::{Result, WbcpError};
use crate::experiments::{Dataset, TestPoint};
use crate::rng::stream_rng;
use crate::weights::distance;
use crate::Point;

pub const DOMAIN_SIZE: f64 = 20.0;
pub const DENSE_SIZE: f64 = 12.0;
pub const GRF_JITTER: f64 = 1e-8;
pub const MORAN_NEIGHBORS: usize = 8;

const LOCATION_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticConfig {
    pub n: usize,
    /// GRF length scale.
    pub ell: f64,
    pub dense_fraction: f64,
    /// Share of points assigned to calibration.
    pub split_fraction: f64,
    pub seed: u64,
    /// Replace the GRF draw by zeros.
    pub zero_noise: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            ell: 2.0,
            dense_fraction: 0.7,
            split_fraction: 0.5,
            seed: 42,
            zero_noise: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(WbcpError::InvalidInput(
                "synthetic n must be at least 2".into(),
            ));
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return Err(WbcpError::InvalidInput(format!(
                "ell must be positive, got {}",
                self.ell
            )));
        }
        if !(self.dense_fraction > 0.0 && self.dense_fraction <= 1.0) {
            return Err(WbcpError::InvalidInput(format!(
                "dense_fraction must lie in (0, 1], got {}",
                self.dense_fraction
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(WbcpError::InvalidInput(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }

    pub fn dense_count(&self) -> usize {
        ((self.dense_fraction * self.n as f64 + 1e-9).floor() as usize).min(self.n)
    }

    pub fn calibration_count(&self) -> usize {
        ((self.split_fraction * self.n as f64).round() as usize).clamp(1, self.n - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub locations: Vec<Point>,
    pub truth: Vec<f64>,
    pub predictions: Vec<f64>,
    /// Unit-variance GRF draw.
    pub noise: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub scores: Vec<f64>,
    pub is_calibration: Vec<bool>,
    /// Moran's I of the GRF draw, `None` when the field is constant.
    pub morans_i: Option<f64>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Record ids are generation indices.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut records = Vec::new();
        let mut cal_amps = Vec::new();
        let mut test = Vec::new();
        for i in 0..self.len() {
            if self.is_calibration[i] {
                records.push(CalibrationRecord::at(
                    i as u64,
                    self.scores[i],
                    self.locations[i],
                ));
                cal_amps.push(self.amplitudes[i]);
            } else {
                test.push(TestPoint {
                    id: i as u64,
                    location: Some(self.locations[i]),
                    score: self.scores[i],
                    y_true: Some(self.truth[i]),
                    y_hat: Some(self.predictions[i]),
                    noise_amplitude: Some(self.amplitudes[i]),
                });
            }
        }
        Ok(Dataset {
            calibration: CalibrationSet::new(records)?,
            test,
            calibration_amplitudes: Some(cal_amps),
        })
    }
}

/// `floor(dense_fraction * n)` points uniform on the dense square, the rest
/// uniform on the whole domain.
pub fn sample_locations(cfg: &SyntheticConfig) -> Vec<Point> {
    let mut rng = stream_rng(cfg.seed, LOCATION_STREAM);
    let dense = cfg.dense_count();
    (0..cfg.n)
        .map(|i| {
            let side = if i < dense { DENSE_SIZE } else { DOMAIN_SIZE };
            [rng.random::<f64>() * side, rng.random::<f64>() * side]
        })
        .collect()
}

pub fn true_function(s: Point) -> f64 {
    (s[0] / 3.0).sin() + s[1].cos() + 0.1 * s[0]
}

pub fn noise_amplitude(s: Point) -> f64 {
    if s[0] < 10.0 && s[1] < 10.0 {
        0.5
    } else if s[0] > 10.0 && s[1] > 10.0 {
        2.0
    } else {
        1.0
    }
}

/// One zero-mean GRF draw with covariance `exp(-d^2 / (2 ell^2))`.
/// Coincident locations share a single value.
pub fn sample_grf(locations: &[Point], ell: f64, seed: u64) -> Result<Vec<f64>> {
    let mut site_of = Vec::with_capacity(locations.len());
    let mut sites: Vec<Point> = Vec::new();
    let mut seen: HashMap<[u64; 2], usize> = HashMap::new();
    for p in locations {
        let key = [p[0].to_bits(), p[1].to_bits()];
        let idx = *seen.entry(key).or_insert_with(|| {
            sites.push(*p);
            sites.len() - 1
        });
        site_of.push(idx);
    }
    let m = sites.len();
    let two_l2 = 2.0 * ell * ell;
    let cov = DMatrix::from_fn(m, m, |i, j| {
        let d = distance(sites[i], sites[j]);
        (-d * d / two_l2).exp() + if i == j { GRF_JITTER } else { 0.0 }
    });
    let chol = cov.cholesky().ok_or(WbcpError::FactorizationFailure {
        size: m,
        jitter: GRF_JITTER,
    })?;
    let mut rng = stream_rng(seed, NOISE_STREAM);
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let field = chol.l() * z;
    Ok(site_of.into_iter().map(|i| field[i]).collect())
}

pub fn generate_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let locations = sample_locations(cfg);
    let noise = if cfg.zero_noise {
        vec![0.0; cfg.n]
    } else {
        sample_grf(&locations, cfg.ell, cfg.seed)?
    };
    let truth: Vec<f64> = locations.iter().map(|&s| true_function(s)).collect();
    let amplitudes: Vec<f64> = locations.iter().map(|&s| noise_amplitude(s)).collect();
    let predictions = truth
        .iter()
        .zip(&amplitudes)
        .zip(&noise)
        .map(|((y, a), e)| y + a * e)
        .collect();
    let scores = amplitudes
        .iter()
        .zip(&noise)
        .map(|(a, e)| a * e.abs())
        .collect();

    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(&mut stream_rng(cfg.seed, SPLIT_STREAM));
    let mut is_calibration = vec![false; cfg.n];
    for &i in &order[..cfg.calibration_count()] {
        is_calibration[i] = true;
    }
    let morans_i = match morans_i(&noise, &locations, MORAN_NEIGHBORS) {
        Ok(v) => Some(v),
        Err(WbcpError::ConstantField) => None,
        Err(e) => return Err(e),
    };
    Ok(SyntheticDataset {
        config: cfg.clone(),
        locations,
        truth,
        predictions,
        noise,
        amplitudes,
        scores,
        is_calibration,
        morans_i,
    })
}

/// Moran's I with its moments under the normality null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoransI {
    pub value: f64,
    pub expected: f64,
    pub variance: f64,
}

/// Indices of the `k` nearest other points, ties broken by index.
fn nearest_neighbors(locations: &[Point], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = locations
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &p)| (distance(locations[i], p), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.into_iter().map(|(_, j)| j).collect()
}

/// Moran's I under row-standardized binary `k`-nearest-neighbor weights.
pub fn morans_i_test(values: &[f64], locations: &[Point], k: usize) -> Result<MoransI> {
    let n = values.len();
    if n < 3 || locations.len() != n {
        return Err(WbcpError::InvalidInput(
            "Moran's I needs at least 3 values with one location each".into(),
        ));
    }
    if k == 0 || k >= n {
        return Err(WbcpError::InvalidInput(format!(
            "k must lie in [1, {}], got {k}",
            n - 1
        )));
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - m).collect();
    let ss: f64 = z.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(WbcpError::ConstantField);
    }
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| nearest_neighbors(locations, i, k)).collect();
    let w = 1.0 / k as f64;
    let cross: f64 = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| z[i] * nb.iter().map(|&j| z[j]).sum::<f64>() * w)
        .sum();
    let nf = n as f64;
    let value = cross / ss;

    let mut in_degree = vec![0usize; n];
    let mut s1 = 0.0;
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            in_degree[j] += 1;
            let mutual = neighbors[j].contains(&i);
            // mutual pairs are visited twice, one-sided pairs once
            s1 += if mutual {
                0.5 * (2.0 * w).powi(2)
            } else {
                w * w
            };
        }
    }
    let s2: f64 = in_degree
        .iter()
        .map(|&d| (1.0 + d as f64 * w).powi(2))
        .sum();
    let s0 = nf;
    let expected = -1.0 / (nf - 1.0);
    let variance = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0)
        - expected * expected;
    Ok(MoransI {
        value,
        expected,
        variance,
    })
}

pub fn morans_i(values: &[f64], locations: &[Point], k: usize) -> Result<f64> {
    morans_i_test(values, locations, k).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::median;

    fn small(n: usize) -> SyntheticConfig {
        SyntheticConfig {
            n,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn location_counts_follow_the_dense_fraction() {
        let cfg = small(10);
        assert_eq!(cfg.dense_count(), 7);
        let locs = sample_locations(&cfg);
        assert!(locs[..7].iter().all(|p| p[0] <= 12.0 && p[1] <= 12.0));
        assert!(locs
            .iter()
            .all(|p| (0.0..=20.0).contains(&p[0]) && (0.0..=20.0).contains(&p[1])));
        let all_dense = SyntheticConfig {
            dense_fraction: 1.0,
            ..small(50)
        };
        assert!(sample_locations(&all_dense)
            .iter()
            .all(|p| p[0] <= 12.0 && p[1] <= 12.0));
    }

    #[test]
    fn true_function_values() {
        use std::f64::consts::PI;
        assert!((true_function([0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(true_function([0.0, PI]), -1.0);
        assert!((true_function([3.0 * PI, 0.0]) - (1.0 + 0.3 * PI)).abs() < 1e-12);
        assert!((true_function([3.0 * PI, 0.0]) - 1.9425).abs() < 1e-4);
    }

    #[test]
    fn amplitude_branches_and_boundaries() {
        assert_eq!(noise_amplitude([5.0, 5.0]), 0.5);
        assert_eq!(noise_amplitude([15.0, 15.0]), 2.0);
        assert_eq!(noise_amplitude([15.0, 5.0]), 1.0);
        assert_eq!(noise_amplitude([10.0, 5.0]), 1.0);
        assert_eq!(noise_amplitude([10.0, 15.0]), 1.0);
        assert_eq!(noise_amplitude([12.0, 10.0]), 1.0);
    }

    #[test]
    fn coincident_sites_share_values() {
        let locs = [[1.0, 1.0], [1.0, 1.0], [3.0, 2.0]];
        for seed in 0..20 {
            let e = sample_grf(&locs, 1.0, seed).unwrap();
            assert_eq!(e[0], e[1]);
        }
    }

    #[test]
    fn grf_stencil_covariance_matches_the_kernel() {
        let ell = 1.5;
        let stencil = [[5.0, 5.0], [6.5, 5.0], [5.0, 6.5], [3.5, 5.0], [5.0, 2.0]];
        let reps = 2000;
        let draws: Vec<Vec<f64>> = (0..reps)
            .map(|r| sample_grf(&stencil, ell, 1000 + r).unwrap())
            .collect();
        for a in 0..5 {
            for b in 0..5 {
                let cov = draws.iter().map(|d| d[a] * d[b]).sum::<f64>() / reps as f64;
                let d = distance(stencil[a], stencil[b]);
                let target = (-d * d / (2.0 * ell * ell)).exp();
                assert!((cov - target).abs() < 0.08, "({a},{b}) {cov} vs {target}");
            }
        }
        // correlation at distance ell
        let (x, y): (Vec<f64>, Vec<f64>) = draws.iter().map(|d| (d[0], d[1])).unzip();
        let r = crate::stats::pearson(&x, &y).unwrap();
        assert!((r - (-0.5f64).exp()).abs() < 0.05, "r = {r}");
        // zero mean at a fixed site
        let se = 1.0 / (reps as f64).sqrt();
        assert!(crate::stats::mean(&x).abs() < 3.0 * se);
    }

    #[test]
    fn zero_noise_gives_zero_scores() {
        let cfg = SyntheticConfig {
            zero_noise: true,
            ..small(200)
        };
        let d = generate_dataset(&cfg).unwrap();
        assert!(d.scores.iter().all(|&s| s == 0.0));
        assert_eq!(d.morans_i, None);
    }

    #[test]
    fn scores_follow_the_amplitude_map() {
        let d = generate_dataset(&small(1200)).unwrap();
        for i in 0..d.len() {
            assert_eq!(d.scores[i], d.amplitudes[i] * d.noise[i].abs());
            assert!(d.scores[i] >= 0.0);
        }
        let pick = |a: f64| -> Vec<f64> {
            (0..d.len())
                .filter(|&i| d.amplitudes[i] == a)
                .map(|i| d.scores[i])
                .collect()
        };
        let (low, high) = (pick(0.5), pick(2.0));
        assert!(median(&low) < median(&high));
        // Mann-Whitney: share of (low, high) pairs with low < high
        let wins = low
            .iter()
            .map(|l| high.iter().filter(|&&h| *l < h).count())
            .sum::<usize>() as f64;
        assert!(wins / (low.len() * high.len()) as f64 > 0.6);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let cfg = small(300);
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.is_calibration.iter().filter(|&&c| c).count(), 150);
        let ds = a.to_dataset().unwrap();
        assert_eq!(ds.calibration.len(), 150);
        assert_eq!(ds.test.len(), 150);
    }

    #[test]
    fn morans_i_null_and_gradient() {
        let mut rng = rng_from_seed(5);
        let n = 1500;
        let locs: Vec<Point> = (0..n)
            .map(|_| [rng.random::<f64>() * 20.0, rng.random::<f64>() * 20.0])
            .collect();
        let vals: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let t = morans_i_test(&vals, &locs, 8).unwrap();
        assert!((t.expected + 1.0 / (n as f64 - 1.0)).abs() < 1e-15);
        assert!(
            (t.value - t.expected).abs() < 3.0 * t.variance.sqrt(),
            "{t:?}"
        );
        let gradient: Vec<f64> = locs.iter().map(|p| p[0]).collect();
        assert!(morans_i(&gradient, &locs, 8).unwrap() > 0.8);
        assert!(matches!(
            morans_i(&[1.0; 5], &locs[..5], 2),
            Err(WbcpError::ConstantField)
        ));
    }

    #[test]
    fn morans_i_rises_with_length_scale() {
        let cfg = small(800);
        let locs = sample_locations(&cfg);
        let values: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&ell| morans_i(&sample_grf(&locs, ell, 9).unwrap(), &locs, 8).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
    }
}
