use rand::Rng;
use rayon::prelude::*;
use serde_json::json;
use statrs::distribution::{Beta, ContinuousCDF};

use super::{CheckReport, OracleConfig};
use crate::calibration::{weighted_quantile, CalibrationRecord, CalibrationSet, SortedCalibration};
use crate::error::{Result, WbcpError};
use crate::posterior::{
    bqcp_threshold, loss_upper_bound, risk_control_probability, risk_controlled_threshold,
    threshold_posterior, DirichletParams, LossBoundModel,
};
use crate::rng::{rng_from_seed, stream_rng, WbcpRng};
use crate::stats::{
    ks_critical_1pct, ks_statistic, mean, median, normal_quantile, ols, sample_variance,
};
use crate::synthetic::{sample_locations, SyntheticConfig};
use crate::weights::{bbox_diagonal, distance, kernel_profile, KernelConfig, WeightProfile};
use crate::Point;

const VARIANCE_STREAM: u64 = 101;
const CONCENTRATION_STREAM: u64 = 102;
const LIMITS_STREAM: u64 = 103;
const COVERAGE_STREAM: u64 = 104;
const DOMINANCE_STREAM: u64 = 105;
const TAIL_STREAM: u64 = 106;

fn exp_draw(rng: &mut WbcpRng) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Scores uniform on `[0, 10)` with weights uniform on `[0.1, 1)`.
fn random_instance(
    rng: &mut WbcpRng,
    n: usize,
) -> Result<(CalibrationSet, WeightProfile, SortedCalibration)> {
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
    let raw: Vec<f64> = (0..n).map(|_| 0.1 + 0.9 * rng.random::<f64>()).collect();
    let cal = CalibrationSet::from_scores(&scores)?;
    let profile = WeightProfile::from_raw(raw)?;
    let sc = SortedCalibration::new(&cal, profile.normalized())?;
    Ok((cal, profile, sc))
}

/// `m` draws of the prefix mass `S_j` (sorted position `j`).
fn prefix_mass_draws(params: &DirichletParams, j: usize, m: usize, seed: u64) -> Vec<f64> {
    let sampler = params.sampler();
    let upto = params.support().iter().take_while(|&&p| p <= j).count();
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; params.len()];
    (0..m)
        .map(|_| {
            let total = sampler.draw_unnormalized(&mut rng, &mut buf);
            buf[..upto].iter().sum::<f64>() / total
        })
        .collect()
}

/// Minimum normalized weight over sorted positions `k* - 1 ..= k* + 1`.
fn boundary_weight(sc: &SortedCalibration, k: usize) -> f64 {
    let lo = k.saturating_sub(1);
    let hi = (k + 1).min(sc.len() - 1);
    sc.weights()[lo..=hi]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Right side of the concentration bound on `sigma_post^2`, with
/// `q* = max(q(1 - q), 1/4)` entering as `q*(1 - q*)`.
pub fn concentration_bound(
    constant: f64,
    q: f64,
    neff: f64,
    max_spacing: f64,
    min_weight: f64,
) -> f64 {
    let qs = (q * (1.0 - q)).max(0.25);
    constant * qs * (1.0 - qs) / neff * (max_spacing / min_weight).powi(2)
}

/// `2 exp(-(n_eff w^2 / (2 q (1 - q))) floor(t / spacing)^2)`.
pub fn tail_bound(neff: f64, min_weight: f64, q: f64, max_spacing: f64, t: f64) -> f64 {
    let steps = (t / max_spacing).floor();
    2.0 * (-(neff * min_weight * min_weight / (2.0 * q * (1.0 - q))) * steps * steps).exp()
}

pub fn check_variance_matching(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.variance;
    let mut rng = stream_rng(cfg.seed, VARIANCE_STREAM);
    let (_, profile, sc) = random_instance(&mut rng, c.n)?;
    let neff = profile.neff();
    let wq = weighted_quantile(&sc, c.q);
    // S_n is identically 1; step back if the crossing is the last score
    let j = if sc.cumulative()[wq.index] >= 1.0 {
        wq.index - 1
    } else {
        wq.index
    };
    let p = sc.cumulative()[j];
    let closed = p * (1.0 - p) / (neff + 1.0);

    let probe = |concentration: f64, stream: u64| -> Result<f64> {
        let params = DirichletParams::with_concentration(&sc, concentration)?;
        let draws = prefix_mass_draws(
            &params,
            j,
            c.mc_samples,
            crate::rng::mix_seed(cfg.seed, stream),
        );
        Ok(sample_variance(&draws))
    };
    let var = probe(neff, 1)?;
    let var_half = probe(neff / 2.0, 2)?;
    let var_double = probe(2.0 * neff, 3)?;
    let rel = |v: f64| (v / closed - 1.0).abs();
    let matched = rel(var) <= c.tolerance;
    let probes_fail = rel(var_half) > c.tolerance && rel(var_double) > c.tolerance;

    let mut ks = Vec::new();
    for i in 0..c.ks_profiles {
        let (_, prof, sc_i) = random_instance(&mut rng, c.n)?;
        let ne = prof.neff();
        let j = rng.random_range(0..sc_i.len() - 1);
        let pj = sc_i.cumulative()[j];
        let params = DirichletParams::with_concentration(&sc_i, ne)?;
        let draws = prefix_mass_draws(
            &params,
            j,
            c.ks_samples,
            crate::rng::mix_seed(cfg.seed, 10 + i as u64),
        );
        let beta = Beta::new(ne * pj, ne * (1.0 - pj))
            .map_err(|e| WbcpError::InvalidInput(format!("Beta marginal: {e}")))?;
        let d = ks_statistic(&draws, |x| beta.cdf(x));
        let crit = ks_critical_1pct(draws.len());
        ks.push(
            json!({"neff": ne, "j": j, "p_j": pj, "ks": d, "critical": crit, "pass": d <= crit}),
        );
    }
    let ks_pass = ks.iter().all(|r| r["pass"] == json!(true));

    Ok(CheckReport {
        name: "variance".into(),
        statistic: rel(var),
        threshold: c.tolerance,
        pass: matched && probes_fail && ks_pass,
        flags: Vec::new(),
        details: json!({
            "neff": neff,
            "j": j,
            "p_j": p,
            "closed_form": closed,
            "mc_variance": var,
            "relative_error": rel(var),
            "probe_half_neff": {"mc_variance": var_half, "relative_error": rel(var_half)},
            "probe_double_neff": {"mc_variance": var_double, "relative_error": rel(var_double)},
            "probes_outside_tolerance": probes_fail,
            "beta_marginal_ks": ks,
        }),
    })
}

/// Bandwidth giving `n_eff` close to `target` at `at`, by bisection on
/// `log h`.
fn bandwidth_for_neff(at: Point, locs: &[Point], target: f64) -> Result<(f64, WeightProfile)> {
    let (mut lo, mut hi) = ((1e-4f64).ln(), (1e4f64).ln());
    let mut best = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let h = mid.exp();
        let profile = kernel_profile(at, locs, &KernelConfig::fixed(h))?;
        let ne = profile.neff();
        let done = (ne / target - 1.0).abs() < 1e-3;
        if ne < target {
            lo = mid;
        } else {
            hi = mid;
        }
        best = Some((h, profile));
        if done {
            break;
        }
    }
    Ok(best.expect("bisection ran"))
}

pub fn check_concentration(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.concentration;
    let locs = sample_locations(&SyntheticConfig {
        n: c.n,
        seed: cfg.seed,
        ..SyntheticConfig::default()
    });
    let mut rng = stream_rng(cfg.seed, CONCENTRATION_STREAM);
    let scores: Vec<f64> = (0..c.n).map(|_| exp_draw(&mut rng)).collect();
    let records = (0..c.n)
        .map(|i| CalibrationRecord::at(i as u64, scores[i], locs[i]))
        .collect();
    let cal = CalibrationSet::new(records)?;
    let order = cal.sort_order();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let max_spacing = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

    let mut targets = c.targets.clone();
    targets.push(200.0);
    let jobs: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|t| (0..c.locations.len()).map(move |l| (t, l)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(t, l)| -> Result<(f64, f64, f64, f64)> {
            let at = c.locations[l];
            let (h, profile) = bandwidth_for_neff(at, &locs, targets[t])?;
            let sc = SortedCalibration::with_order(&cal, &order, profile.normalized())?;
            let seed = crate::rng::mix_seed(cfg.seed, (t * 1000 + l) as u64);
            let tp = threshold_posterior(&sc, &profile, c.q, c.mc_samples, seed)?;
            let wbar = boundary_weight(&sc, tp.wcp_index);
            Ok((profile.neff(), tp.sigma_post, wbar, h))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_target = |t: usize| -> Vec<&(f64, f64, f64, f64)> {
        jobs.iter()
            .zip(&results)
            .filter(|((tt, _), _)| *tt == t)
            .map(|(_, r)| r)
            .collect()
    };
    let mut log_neff = Vec::new();
    let mut log_sigma = Vec::new();
    let mut rows = Vec::new();
    for (t, target) in c.targets.iter().enumerate() {
        let rs = per_target(t);
        let ln: f64 = mean(&rs.iter().map(|r| r.0.ln()).collect::<Vec<_>>());
        let ls: f64 = mean(&rs.iter().map(|r| r.1.ln()).collect::<Vec<_>>());
        log_neff.push(ln);
        log_sigma.push(ls);
        rows.push(
            json!({"target": target, "mean_neff": ln.exp(), "geometric_mean_sigma_post": ls.exp()}),
        );
    }
    let fit = ols(&log_neff, &log_sigma)?;
    let slope_ok = fit.slope >= c.slope_range.0 && fit.slope <= c.slope_range.1;

    let mut bound_ok = true;
    let mut tight_ok = true;
    let mut worst_ratio: f64 = 0.0;
    for &(neff, sigma, wbar, _) in &results {
        let b = concentration_bound(c.constant, c.q, neff, max_spacing, wbar);
        let bt = concentration_bound(c.tight_constant, c.q, neff, max_spacing, wbar);
        worst_ratio = worst_ratio.max(sigma * sigma / b);
        bound_ok &= sigma * sigma <= b;
        tight_ok &= sigma * sigma <= bt;
    }
    let s100 = mean(
        &per_target(targets.iter().position(|&x| x == 100.0).unwrap_or(2))
            .iter()
            .map(|r| r.1)
            .collect::<Vec<_>>(),
    );
    let s200 = mean(
        &per_target(targets.len() - 1)
            .iter()
            .map(|r| r.1)
            .collect::<Vec<_>>(),
    );
    let mut flags = Vec::new();
    if tight_ok {
        flags.push(format!("bound also holds with C = {}", c.tight_constant));
    }
    Ok(CheckReport {
        name: "concentration".into(),
        statistic: fit.slope,
        threshold: -0.5,
        pass: slope_ok && bound_ok,
        flags,
        details: json!({
            "slope": fit.slope,
            "slope_se": fit.slope_se,
            "slope_range": [c.slope_range.0, c.slope_range.1],
            "levels": rows,
            "max_spacing": max_spacing,
            "bound_constant": c.constant,
            "bound_holds": bound_ok,
            "tight_constant": c.tight_constant,
            "tight_bound_holds": tight_ok,
            "max_sigma2_over_bound": worst_ratio,
            "sigma_ratio_200_over_100": s200 / s100,
        }),
    })
}

pub fn check_limits(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.limits;
    let mut rng = stream_rng(cfg.seed, LIMITS_STREAM);
    let locs: Vec<Point> = (0..c.n)
        .map(|_| [rng.random::<f64>() * 20.0, rng.random::<f64>() * 20.0])
        .collect();
    let records = (0..c.n)
        .map(|i| CalibrationRecord::at(i as u64, exp_draw(&mut rng), locs[i]))
        .collect();
    let cal = CalibrationSet::new(records)?;
    let at = [rng.random::<f64>() * 20.0, rng.random::<f64>() * 20.0];
    let seed = crate::rng::mix_seed(cfg.seed, LIMITS_STREAM);

    // uniform limit
    let h_wide = c.wide_factor * bbox_diagonal(&locs);
    let wide = kernel_profile(at, &locs, &KernelConfig::fixed(h_wide))?;
    let sc_wide = SortedCalibration::new(&cal, wide.normalized())?;
    let params = DirichletParams::from_profile(&sc_wide, &wide)?;
    let max_alpha_dev = params
        .alphas()
        .iter()
        .map(|a| (a - 1.0).abs())
        .fold(0.0, f64::max);
    let tp_wide = threshold_posterior(&sc_wide, &wide, c.q, c.mc_samples, seed)?;
    let tp_bq = bqcp_threshold(&cal, c.q, c.mc_samples, seed)?;
    let identical = tp_wide.samples == tp_bq.samples;
    let uniform_ok = max_alpha_dev <= c.alpha_tolerance && identical;

    // singular limit
    let mut d: Vec<(f64, usize)> = locs
        .iter()
        .enumerate()
        .map(|(i, &p)| (distance(at, p), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gap = d[1].0 - d[0].0;
    let nearest = d[0].1;
    let h_narrow = c.narrow_factor * gap;
    let narrow = kernel_profile(at, &locs, &KernelConfig::fixed(h_narrow))?;
    let sc_narrow = SortedCalibration::new(&cal, narrow.normalized())?;
    let tp_narrow = threshold_posterior(&sc_narrow, &narrow, c.q, c.mc_samples, seed)?;
    let target = cal.records()[nearest].score;
    let point_mass = tp_narrow.samples.iter().all(|&s| s == target) && tp_narrow.sigma_post == 0.0;
    let singular_ok = narrow.neff() <= 1.0 + c.neff_tolerance && point_mass;

    // intermediate bandwidth on three points
    let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
    let mid = kernel_profile([0.3, 0.4], &tri, &KernelConfig::fixed(1.0))?.neff();
    let mid_ok = mid > 1.0 && mid < 3.0;

    Ok(CheckReport {
        name: "limits".into(),
        statistic: max_alpha_dev.max(narrow.neff() - 1.0),
        threshold: c.alpha_tolerance.min(c.neff_tolerance),
        pass: uniform_ok && singular_ok && mid_ok,
        flags: Vec::new(),
        details: json!({
            "wide_bandwidth": h_wide,
            "max_alpha_deviation": max_alpha_dev,
            "seed_identical_to_bqcp": identical,
            "narrow_bandwidth": h_narrow,
            "narrow_neff": narrow.neff(),
            "nearest_score": target,
            "point_mass": point_mass,
            "three_point_neff": mid,
        }),
    })
}

/// Mean true miscoverage `exp(-lambda)` of the `beta` thresholds over
/// replicate Exp(1) calibration sets of size `n`.
fn replicate_miscoverage(
    cfg: &OracleConfig,
    n: usize,
    betas: &[f64],
    stream: u64,
) -> Result<Vec<f64>> {
    let c = &cfg.coverage;
    let q = 1.0 - c.alpha;
    let per_rep = (0..c.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = stream_rng(crate::rng::mix_seed(cfg.seed, stream), r as u64);
            let scores: Vec<f64> = (0..n).map(|_| exp_draw(&mut rng)).collect();
            let cal = CalibrationSet::from_scores(&scores)?;
            let tp = bqcp_threshold(&cal, q, c.mc_samples, rng.random())?;
            Ok(betas.iter().map(|&b| (-tp.hpd(b)).exp()).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..betas.len())
        .map(|i| mean(&per_rep.iter().map(|v| v[i]).collect::<Vec<_>>()))
        .collect())
}

pub fn check_conditional_coverage(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.coverage;
    let q = 1.0 - c.alpha;
    let predicted =
        |beta: f64, neff: f64| c.alpha - normal_quantile(beta) * (q * (1.0 - q) / neff).sqrt();
    let small = replicate_miscoverage(cfg, c.n, &[c.beta, 0.5], COVERAGE_STREAM)?;
    let large = replicate_miscoverage(cfg, c.n_large, &[c.beta], COVERAGE_STREAM + 1)?;
    let pred = predicted(c.beta, c.n as f64);
    let err = (small[0] - pred).abs();
    let median_err = (small[1] - c.alpha).abs();
    let shift_small = c.alpha - small[0];
    let shift_large = c.alpha - large[0];
    Ok(CheckReport {
        name: "coverage".into(),
        statistic: err,
        threshold: c.tolerance,
        pass: err <= c.tolerance && median_err <= c.median_tolerance,
        flags: Vec::new(),
        details: json!({
            "replicates": c.replicates,
            "neff": c.n,
            "beta": c.beta,
            "predicted_miscoverage": pred,
            "empirical_miscoverage": small[0],
            "median_miscoverage": small[1],
            "median_error": median_err,
            "median_tolerance": c.median_tolerance,
            "neff_large": c.n_large,
            "predicted_miscoverage_large": predicted(c.beta, c.n_large as f64),
            "empirical_miscoverage_large": large[0],
            "empirical_shift_ratio": shift_large / shift_small,
        }),
    })
}

pub fn check_dominance_construction(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.dominance;
    let mut rng = stream_rng(cfg.seed, DOMINANCE_STREAM);
    let mut rows = Vec::new();
    let mut all_ok = true;
    let mut min_margin = f64::INFINITY;
    for i in 0..c.instances {
        let n = rng.random_range(30..=200);
        let (cal, profile, _) = random_instance(&mut rng, n)?;
        let seed = rng.random::<u64>();
        let scores = cal.scores();
        let r = risk_controlled_threshold(&scores, &profile, c.alpha, c.beta, c.mc_samples, seed)?;
        let construction = r.threshold.is_some() && r.probability >= c.beta;
        min_margin = min_margin.min(r.probability - c.beta);

        // generic losses in [0, 1) for the range and coupling properties
        let losses: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.8).collect();
        let model = LossBoundModel::from_profile(&losses, &profile, 1.0, None)?;
        let base = loss_upper_bound(&model, c.mc_samples, seed);
        let lo = model.losses()[0];
        let in_range = base.iter().all(|&l| l >= lo && l <= 1.0);
        let bump_at = rng.random_range(0..n);
        let mut bumped: Vec<f64> = model.losses()[..n].to_vec();
        for l in &mut bumped[bump_at..] {
            *l += 0.05;
        }
        let up = loss_upper_bound(&model.with_losses(bumped, 1.0)?, c.mc_samples, seed);
        let monotone = base.iter().zip(&up).all(|(a, b)| b >= a);
        let max_loss = model.losses()[n - 1];
        let tight = loss_upper_bound(
            &model.with_losses(model.losses()[..n].to_vec(), max_loss)?,
            c.mc_samples,
            seed,
        );
        let shrinks = base.iter().zip(&tight).all(|(a, b)| b <= a);

        let ok = construction && in_range && monotone && shrinks;
        all_ok &= ok;
        rows.push(json!({
            "instance": i,
            "n": n,
            "neff": profile.neff(),
            "threshold": r.threshold,
            "probability": r.probability,
            "in_range": in_range,
            "monotone_coupling": monotone,
            "bound_shrinks": shrinks,
            "pass": ok,
        }));
    }
    // constant losses: the bound's CDF is a step at the constant
    let constant = LossBoundModel::new(vec![0.3; 10], vec![1.0; 10], 0.3, 0.5)?;
    let draws = loss_upper_bound(&constant, c.mc_samples, cfg.seed);
    let step = risk_control_probability(&draws, 0.3) == 1.0
        && risk_control_probability(&draws, 0.2999) == 0.0;
    Ok(CheckReport {
        name: "dominance".into(),
        statistic: min_margin,
        threshold: 0.0,
        pass: all_ok && step,
        flags: Vec::new(),
        details: json!({"alpha": c.alpha, "beta": c.beta, "instances": rows, "constant_losses_step": step}),
    })
}

pub fn check_tail_bound(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.tail;
    let mut rows = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..c.seeds {
        let mut rng = stream_rng(crate::rng::mix_seed(cfg.seed, TAIL_STREAM), s as u64);
        let n = rng.random_range(5..=40);
        let (_, profile, sc) = random_instance(&mut rng, n)?;
        let tp = threshold_posterior(&sc, &profile, c.q, c.mc_samples, rng.random())?;
        let spacing = sc.max_spacing();
        let wbar = boundary_weight(&sc, tp.wcp_index);
        for &mult in &c.multiples {
            let t = mult * spacing;
            let freq = tp
                .samples
                .iter()
                .filter(|&&l| (l - tp.wcp_threshold).abs() > t)
                .count() as f64
                / tp.samples.len() as f64;
            let bound = tail_bound(profile.neff(), wbar, c.q, spacing, t);
            worst = worst.max(freq - bound.min(1.0));
            rows.push(json!({
                "seed_index": s,
                "n": n,
                "neff": profile.neff(),
                "min_boundary_weight": wbar,
                "max_spacing": spacing,
                "t": t,
                "frequency": freq,
                "bound": bound,
                "vacuous": bound >= 1.0,
                "pass": freq <= bound,
            }));
        }
    }
    Ok(CheckReport {
        name: "tail".into(),
        statistic: worst,
        threshold: 0.0,
        pass: worst <= 0.0,
        flags: Vec::new(),
        details: json!({"q": c.q, "cases": rows}),
    })
}

pub fn check_adaptive_regularization(cfg: &OracleConfig) -> Result<CheckReport> {
    let c = &cfg.adaptive;
    let locs = sample_locations(&SyntheticConfig {
        n: c.n,
        seed: cfg.seed,
        ..SyntheticConfig::default()
    });
    let kernel = KernelConfig::adaptive(c.h0, c.k);
    let step = 20.0 / c.grid as f64;
    let cells: Vec<Point> = (0..c.grid * c.grid)
        .map(|i| {
            [
                ((i % c.grid) as f64 + 0.5) * step,
                ((i / c.grid) as f64 + 0.5) * step,
            ]
        })
        .collect();
    let neff = cells
        .par_iter()
        .map(|&p| kernel_profile(p, &locs, &kernel).map(|w| w.neff()))
        .collect::<Result<Vec<f64>>>()?;
    let min_neff = neff.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ratios = Vec::new();
    let mut steepest = (0.0, [0.0, 0.0]);
    for row in 0..c.grid {
        for col in 0..c.grid {
            let i = row * c.grid + col;
            let right = (col + 1 < c.grid).then_some(i + 1);
            let up = (row + 1 < c.grid).then_some(i + c.grid);
            for j in right.into_iter().chain(up) {
                let r = (neff[j] - neff[i]).abs() / step;
                if r > steepest.0 {
                    let a = cells[i];
                    let b = cells[j];
                    steepest = (r, [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                }
                ratios.push(r);
            }
        }
    }
    let med = median(&ratios);
    let max_ratio = steepest.0;
    let spike = if med > 0.0 {
        max_ratio / med
    } else {
        f64::INFINITY
    };

    let remote_fixed =
        kernel_profile(c.remote_point, &locs, &KernelConfig::fixed(c.fixed_h))?.neff();
    let remote_adaptive = kernel_profile(c.remote_point, &locs, &kernel)?.neff();
    let counterexample = remote_fixed < c.min_neff && remote_adaptive >= c.min_neff;

    let spread = |k: usize| -> f64 {
        let cfg_k = KernelConfig::adaptive(c.h0, k);
        let hs: Vec<f64> = cells
            .iter()
            .map(|&p| cfg_k.bandwidth_at(p, &locs))
            .collect();
        let (lo, hi) = hs
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        hi / lo
    };
    let spread_k = spread(c.k);
    let spread_all = spread(locs.len());

    Ok(CheckReport {
        name: "adaptive".into(),
        statistic: min_neff,
        threshold: c.min_neff,
        pass: min_neff >= c.min_neff && spike <= c.spike_ratio && counterexample,
        flags: Vec::new(),
        details: json!({
            "grid": c.grid,
            "h0": c.h0,
            "k": c.k,
            "min_neff": min_neff,
            "max_neff": neff.iter().copied().fold(0.0, f64::max),
            "median_difference_ratio": med,
            "max_difference_ratio": max_ratio,
            "steepest_location": steepest.1,
            "spike_ratio": spike,
            "spike_limit": c.spike_ratio,
            "remote_point": c.remote_point,
            "remote_neff_fixed": remote_fixed,
            "remote_neff_adaptive": remote_adaptive,
            "bandwidth_spread_k": spread_k,
            "bandwidth_spread_all": spread_all,
        }),
    })
}
