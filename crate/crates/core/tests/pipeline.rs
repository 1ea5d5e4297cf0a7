use wbcp::experiments::{
    emit_report, ingest_csv, run_experiment, run_variant, write_synthetic_csv, ExperimentConfig,
    MethodVariant,
};
use wbcp::synthetic::{generate_dataset, SyntheticConfig};

fn small(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        n: 600,
        seed,
        ..SyntheticConfig::default()
    }
}

#[test]
fn higher_beta_never_lowers_coverage() {
    let mut violations = 0;
    for seed in 0..10 {
        let data = generate_dataset(&small(seed))
            .unwrap()
            .to_dataset()
            .unwrap();
        let cfg = ExperimentConfig {
            mc_samples: 300,
            seed,
            ..Default::default()
        };
        let at = |beta: f64| {
            run_variant(&MethodVariant::GeoBCP { h: 1.0, beta }, &data, &cfg)
                .unwrap()
                .summary
                .coverage
        };
        if at(0.9) < at(0.5) {
            violations += 1;
        }
    }
    assert!(
        violations <= 1,
        "{violations} seeds with lower coverage at beta 0.9"
    );
}

#[test]
fn posterior_median_tracks_weighted_cp() {
    let data = generate_dataset(&small(42)).unwrap().to_dataset().unwrap();
    let cfg = ExperimentConfig {
        hpd_levels: vec![0.5],
        ..Default::default()
    };
    let run = run_variant(&MethodVariant::GeoBCP { h: 1.0, beta: 0.9 }, &data, &cfg).unwrap();
    let mut scores = data.calibration.scores();
    scores.sort_by(f64::total_cmp);
    let spacing = scores.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let close = run
        .points
        .iter()
        .filter(|p| (p.hpd[0].1 - p.wcp_threshold.unwrap()).abs() <= spacing)
        .count();
    assert!(
        close as f64 >= 0.95 * run.points.len() as f64,
        "{close} of {}",
        run.points.len()
    );
}

#[test]
fn bayesian_widths_dominate_their_counterparts() {
    let data = generate_dataset(&small(3)).unwrap().to_dataset().unwrap();
    let cfg = ExperimentConfig {
        mc_samples: 300,
        ..Default::default()
    };
    let report = run_experiment(&data, &MethodVariant::all(&cfg), &cfg).unwrap();
    let w = |m: &str| report.run(m).unwrap().summary.mean_width;
    assert!(w("BQCP") >= w("StandardCP"));
    assert!(w("GeoBCP") >= w("GeoCP"));
    assert!(w("AdaGeoBCP") >= w("AdaGeoCP"));
    assert_eq!(report.summary().len(), 6);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let data = generate_dataset(&small(9)).unwrap().to_dataset().unwrap();
    let cfg = ExperimentConfig {
        mc_samples: 200,
        sample_ids: vec![1, 2, 5],
        ..Default::default()
    };
    let variants = MethodVariant::all(&cfg);
    let with = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| run_experiment(&data, &variants, &cfg).unwrap())
    };
    let one = with(1);
    let many = with(6);
    assert_eq!(one, many);

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    emit_report(&one, dirs[0].path()).unwrap();
    emit_report(&many, dirs[1].path()).unwrap();
    for name in [
        "summary.csv",
        "summary.json",
        "points_GeoBCP.csv",
        "samples.csv",
    ] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn csv_round_trip_reproduces_the_experiment() {
    let synth = generate_dataset(&small(11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.csv");
    write_synthetic_csv(&synth, &path).unwrap();
    let from_file = ingest_csv(&path).unwrap();
    let direct = synth.to_dataset().unwrap();
    let cfg = ExperimentConfig {
        mc_samples: 200,
        ..Default::default()
    };
    let v = [
        MethodVariant::GeoBCP { h: 1.0, beta: 0.9 },
        MethodVariant::StandardCP,
    ];
    let a = run_experiment(&direct, &v, &cfg).unwrap();
    let b = run_experiment(&from_file, &v, &cfg).unwrap();
    assert_eq!(a.summary(), b.summary());
}
