use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use streetrank_core::domain::io::Corpus;
use streetrank_core::domain::{BoundingBox, OutcomeCode};
use streetrank_core::featurize::{haversine_m, FeatureConfig, FeatureContext};
use streetrank_core::synthgen::{
    generate_corpus, manual_baselines, monthly_alert_counts, simulate_manual_baseline, GenError, GeneratorConfig,
};

fn small() -> GeneratorConfig {
    GeneratorConfig {
        base_monthly_volume: 400,
        start_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
        end_date: NaiveDate::from_ymd_opt(2018, 3, 31).unwrap(),
        ..GeneratorConfig::default()
    }
}

#[test]
fn default_corpus_is_byte_identical_across_runs() {
    let cfg = GeneratorConfig::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let manifests: Vec<_> = dirs.iter().map(|d| generate_corpus(&cfg).unwrap().write_dir(d.path()).unwrap()).collect();
    assert_eq!(manifests[0], manifests[1]);
    for name in ["alerts.csv", "outcomes.csv", "hotspots.csv", "weather.csv", "manifest.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let m = &manifests[0];
    assert!((45_000..65_000).contains(&m.alerts), "{}", m.alerts);
    assert_eq!(m.monthly_alerts.len(), 15);
}

#[test]
fn default_corpus_calibration_and_structure() {
    let c = generate_corpus(&GeneratorConfig::default()).unwrap();
    let base = manual_baselines(&c.data.alerts, &c.data.outcomes);
    assert_eq!(base.len(), 15);
    let mean = base.iter().map(|b| b.found_rate.unwrap()).sum::<f64>() / base.len() as f64;
    assert!((0.20..=0.30).contains(&mean), "mean monthly found rate {mean}");

    // one outcome per alert, each mapping to a label pair
    assert_eq!(c.data.outcomes.len(), c.data.alerts.len());
    for o in &c.data.outcomes {
        let l = o.outcome_code.labels();
        assert!(l.positive.is_null() || l.referral);
    }

    // hidden signal: found alerts were easier than not-found ones
    let q: HashMap<&str, f64> = c.latent.iter().map(|l| (l.alert_id.as_str(), l.q)).collect();
    let mean_q = |code: OutcomeCode| {
        let v: Vec<f64> =
            c.data.outcomes.iter().filter(|o| o.outcome_code == code).map(|o| q[o.alert_id.as_str()]).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean_q(OutcomeCode::PersonFound) > mean_q(OutcomeCode::PersonNotFound));

    // injected duplicates respect the 500 m / 7 day rule
    let by_id: HashMap<&str, _> = c.data.alerts.iter().map(|a| (a.id.as_str(), a)).collect();
    assert!(!c.duplicates.is_empty());
    for (dup, src) in &c.duplicates {
        let (d, s) = (by_id[dup.as_str()], by_id[src.as_str()]);
        assert!(haversine_m(d.point(), s.point()) <= 500.0);
        assert!(s.created_at < d.created_at && d.created_at - s.created_at <= Duration::days(7));
    }
    for a in &c.data.alerts {
        assert!(c.config.region.contains(a.latitude, a.longitude));
    }
}

#[test]
fn stationary_volumes_pass_dispersion_test() {
    let cfg = GeneratorConfig {
        seasonal_amplitude: 0.0,
        growth_rate: 0.0,
        base_monthly_volume: 1500,
        ..GeneratorConfig::default()
    };
    let c = generate_corpus(&cfg).unwrap();
    let counts: Vec<f64> = monthly_alert_counts(&c.data.alerts).values().map(|&n| n as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|n| (n - mean).powi(2) / mean).sum();
    // 99.9th percentile of chi-square with 14 degrees of freedom
    assert!(chi2 < 36.12, "chi2 {chi2} counts {counts:?}");
    assert!((mean - 1500.0).abs() < 50.0);
}

#[test]
fn growth_and_winter_bump_shape_volumes() {
    let c = generate_corpus(&GeneratorConfig { seasonal_amplitude: 0.0, ..GeneratorConfig::default() }).unwrap();
    let counts: Vec<usize> = monthly_alert_counts(&c.data.alerts).into_values().collect();
    assert!(counts[14] as f64 > 1.3 * counts[0] as f64);
    let w =
        generate_corpus(&GeneratorConfig { growth_rate: 0.0, seasonal_amplitude: 0.8, ..GeneratorConfig::default() })
            .unwrap();
    let m = monthly_alert_counts(&w.data.alerts);
    let jan = m[&NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()];
    let jul = m[&NaiveDate::from_ymd_opt(2018, 7, 1).unwrap()];
    assert!(jan as f64 > 1.5 * jul as f64);
}

#[test]
fn written_corpus_reads_back_unchanged() {
    let c = generate_corpus(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    c.write_dir(dir.path()).unwrap();
    let (back, rejected) = Corpus::read_dir(dir.path(), Some(&c.config.region)).unwrap();
    assert!(rejected.is_empty());
    assert_eq!(back.alerts, c.data.alerts);
    assert_eq!(back.outcomes, c.data.outcomes);
    assert_eq!(back.hotspots, c.data.hotspots);
    assert_eq!(back.weather, c.data.weather);
    assert!(dir.path().join("hidden/latent_quality.csv").exists());
}

#[test]
fn injected_duplicates_are_flagged_by_features() {
    let c = generate_corpus(&small()).unwrap();
    let ctx = FeatureContext::new(&c.data, FeatureConfig::default()).unwrap();
    let dups: Vec<_> = c.data.alerts.iter().filter(|a| c.duplicates.iter().any(|(d, _)| *d == a.id)).cloned().collect();
    assert!(!dups.is_empty());
    let base = ctx.compute(&dups).unwrap();
    for i in 0..base.n_rows() {
        assert_eq!(base.value(i, "duplicate"), Some(1.0));
    }
}

#[test]
fn baseline_months() {
    let c = generate_corpus(&small()).unwrap();
    let feb = simulate_manual_baseline(&c.data.alerts, &c.data.outcomes, NaiveDate::from_ymd_opt(2018, 2, 14).unwrap())
        .unwrap();
    assert_eq!(feb.month, NaiveDate::from_ymd_opt(2018, 2, 1).unwrap());
    assert!(feb.referral_count > 0 && feb.found_count <= feb.referral_count);
    let none = simulate_manual_baseline(&c.data.alerts, &c.data.outcomes, NaiveDate::from_ymd_opt(2019, 6, 1).unwrap());
    assert!(matches!(none, Err(GenError::EmptyMonth(_))));
    // alerts but no outcomes: zero referrals, rate absent
    let empty = simulate_manual_baseline(&c.data.alerts, &[], NaiveDate::from_ymd_opt(2018, 2, 1).unwrap()).unwrap();
    assert_eq!((empty.referral_count, empty.found_rate), (0, None));
}

#[test]
fn invalid_configurations_are_rejected() {
    let swapped = GeneratorConfig {
        start_date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
        end_date: NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(),
        ..small()
    };
    assert!(matches!(generate_corpus(&swapped), Err(GenError::Config(_))));
    let flat =
        GeneratorConfig { region: BoundingBox { min_lat: 51.0, max_lat: 51.0, min_lon: 0.0, max_lon: 1.0 }, ..small() };
    assert!(matches!(generate_corpus(&flat), Err(GenError::EmptyRegion)));
    let huge = GeneratorConfig { base_monthly_volume: u64::MAX, ..small() };
    assert!(matches!(generate_corpus(&huge), Err(GenError::Infeasible(_))));
    let rate = GeneratorConfig { duplicate_rate: 1.5, ..small() };
    assert!(generate_corpus(&rate).is_err());
}
