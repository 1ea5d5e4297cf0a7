use proptest::prelude::*;
use wbcp::posterior::{loss_upper_bound, LossBoundModel};
use wbcp::{
    bqcp_threshold, threshold_posterior, CalibrationRecord, CalibrationSet, SortedCalibration,
    WeightProfile,
};

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..5.0, n),
            prop::collection::vec(0.05f64..1.0, n),
        )
    })
}

fn posterior(scores: &[f64], weights: &[f64], q: f64, seed: u64) -> wbcp::ThresholdPosterior {
    let cal = CalibrationSet::from_scores(scores).unwrap();
    let profile = WeightProfile::from_raw(weights.to_vec()).unwrap();
    let sc = SortedCalibration::new(&cal, profile.normalized()).unwrap();
    threshold_posterior(&sc, &profile, q, 300, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_are_order_statistics((scores, weights) in instance(), q in 0.05f64..0.99, seed: u64) {
        let tp = posterior(&scores, &weights, q, seed);
        prop_assert!(tp.samples.iter().all(|s| scores.contains(s)));
    }

    #[test]
    fn hpd_is_monotone_and_tops_out_at_the_max((scores, weights) in instance(), seed: u64) {
        let tp = posterior(&scores, &weights, 0.9, seed);
        let betas = [0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0];
        let h: Vec<f64> = betas.iter().map(|&b| tp.hpd(b)).collect();
        prop_assert!(h.windows(2).all(|w| w[0] <= w[1]));
        let max = tp.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(tp.hpd(1.0), max);
    }

    #[test]
    fn record_order_does_not_change_the_posterior(
        (scores, weights) in instance(),
        seed: u64,
        rot in 0usize..40,
    ) {
        let n = scores.len();
        let records: Vec<CalibrationRecord> = (0..n)
            .map(|i| CalibrationRecord::new(i as u64, scores[i]))
            .collect();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let a = CalibrationSet::new(records.clone()).unwrap();
        let b = CalibrationSet::new(perm.iter().map(|&i| records[i].clone()).collect()).unwrap();
        let wa = WeightProfile::from_raw(weights.clone()).unwrap();
        let wb = WeightProfile::from_raw(perm.iter().map(|&i| weights[i]).collect()).unwrap();
        let ta = threshold_posterior(&SortedCalibration::new(&a, wa.normalized()).unwrap(), &wa, 0.9, 200, seed).unwrap();
        let tb = threshold_posterior(&SortedCalibration::new(&b, wb.normalized()).unwrap(), &wb, 0.9, 200, seed).unwrap();
        prop_assert_eq!(ta.samples, tb.samples);
    }

    #[test]
    fn uniform_profile_reproduces_bqcp(scores in prop::collection::vec(0.0f64..5.0, 1..40), seed: u64) {
        let n = scores.len();
        let tp = posterior(&scores, &vec![0.7; n], 0.9, seed);
        let bq = bqcp_threshold(&CalibrationSet::from_scores(&scores).unwrap(), 0.9, 300, seed).unwrap();
        prop_assert_eq!(tp.samples, bq.samples);
    }

    #[test]
    fn loss_bound_is_monotone_in_losses(
        (losses, weights) in instance(),
        bump in 0.0f64..0.5,
        seed: u64,
    ) {
        let profile = WeightProfile::from_raw(weights).unwrap();
        let losses: Vec<f64> = losses.iter().map(|l| l / 10.0).collect();
        let model = LossBoundModel::from_profile(&losses, &profile, 1.0, None).unwrap();
        let n = model.losses().len() - 1;
        let base = loss_upper_bound(&model, 200, seed);
        let lo = model.losses()[0];
        prop_assert!(base.iter().all(|&l| l >= lo && l <= 1.0));
        let raised: Vec<f64> = model.losses()[..n].iter().map(|l| l + bump).collect();
        let up = loss_upper_bound(&model.with_losses(raised, 1.0).unwrap(), 200, seed);
        prop_assert!(base.iter().zip(&up).all(|(a, b)| b >= a));
    }
}
