use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streetrank_core::domain::{AgeBand, Gender, Positive};
use streetrank_core::evaluate::{
    bias_slices, metrics_at_k, quadrant_report, Demographics, Quadrant, QuadrantAlert, ScoredAlert,
};

fn ts(minutes: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_546_300_800 + minutes * 60, 0).unwrap()
}

fn label(code: u8) -> Positive {
    match code % 3 {
        0 => Positive::Yes,
        1 => Positive::No,
        _ => Positive::Null,
    }
}

fn random_pool(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredAlert> {
    (0..n)
        .map(|i| ScoredAlert {
            id: format!("id{:02}", (i * 7) % 31),
            created_at: ts(rng.random_range(0..4)),
            score: rng.random_range(0..5) as f64 / 4.0,
            label: label(rng.random_range(0..3)),
        })
        .collect()
}

/// Top-k membership straight from the ordering rule: an alert is in the top k
/// iff fewer than k alerts beat it.
fn oracle(alerts: &[ScoredAlert], k: usize) -> (Option<f64>, Option<f64>, Option<f64>, usize) {
    let beats = |a: &ScoredAlert, b: &ScoredAlert| {
        a.score > b.score
            || (a.score == b.score && a.created_at < b.created_at)
            || (a.score == b.score && a.created_at == b.created_at && a.id < b.id)
    };
    let k_used = k.min(alerts.len());
    let top: Vec<&ScoredAlert> =
        alerts.iter().filter(|b| alerts.iter().filter(|a| beats(a, b)).count() < k_used).collect();
    assert_eq!(top.len(), k_used);
    let yes = top.iter().filter(|a| a.label == Positive::Yes).count();
    let no = top.iter().filter(|a| a.label == Positive::No).count();
    let null = top.len() - yes - no;
    let all_yes = alerts.iter().filter(|a| a.label == Positive::Yes).count();
    let precision = (yes + no > 0).then(|| yes as f64 / (yes + no) as f64);
    let recall = (all_yes > 0).then(|| yes as f64 / all_yes as f64);
    let found_rate = (k_used > 0).then(|| yes as f64 / k_used as f64);
    (precision, recall, found_rate, null)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_brute_force(seed in any::<u64>(), n in 0usize..=20, k in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, n);
        let m = metrics_at_k(&pool, k).unwrap();
        let (p, r, f, nulls) = oracle(&pool, k);
        prop_assert_eq!(m.precision, p);
        prop_assert_eq!(m.recall, r);
        prop_assert_eq!(m.found_rate, f);
        prop_assert_eq!(m.null_count, nulls);
        prop_assert!(m.null_count <= k);
    }

    #[test]
    fn metrics_depend_only_on_order(seed in any::<u64>(), n in 1usize..=20, k in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, n);
        let transformed: Vec<ScoredAlert> = pool
            .iter()
            .map(|a| ScoredAlert { score: (3.0 * a.score).exp() - 7.0, ..a.clone() })
            .collect();
        prop_assert_eq!(metrics_at_k(&pool, k).unwrap(), metrics_at_k(&transformed, k).unwrap());
    }
}

#[test]
fn constant_scores_with_random_tiebreak_match_pool_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 200;
    let labels: Vec<Positive> =
        (0..n).map(|i| if i % 5 == 0 { Positive::Yes } else { label(1 + (i % 2) as u8) }).collect();
    let pool_fraction = labels.iter().filter(|&&l| l == Positive::Yes).count() as f64 / n as f64;
    for k in [10, 50, 150] {
        let mut total = 0.0;
        for _ in 0..1000 {
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut rng);
            let pool: Vec<ScoredAlert> = (0..n)
                .map(|i| ScoredAlert { id: format!("{:04}", ids[i]), created_at: ts(0), score: 0.5, label: labels[i] })
                .collect();
            total += metrics_at_k(&pool, k).unwrap().found_rate.unwrap();
        }
        let mean = total / 1000.0;
        assert!((mean - pool_fraction).abs() < 0.02, "k={k} mean {mean} vs {pool_fraction}");
    }
}

#[test]
fn quadrant_thresholds_reproduce_baseline_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(1..200);
        let alerts: Vec<QuadrantAlert> = (0..n)
            .map(|i| QuadrantAlert {
                id: format!("a{i}"),
                created_at: ts(rng.random_range(0..10)),
                po_score: rng.random_range(0..20) as f64 / 19.0,
                referral_score: rng.random_range(0..20) as f64 / 19.0,
                referred: rng.random_bool(0.5),
                positive: label(rng.random_range(0..3)),
                gender: Gender::ALL[rng.random_range(0..4)],
                age_band: AgeBand::ALL[rng.random_range(0..7)],
                word_count: rng.random_range(0..30),
            })
            .collect();
        let n_ref = rng.random_range(0..=n);
        let n_found = rng.random_range(0..=n);
        let r = quadrant_report(&alerts, n_ref, n_found).unwrap();
        let above = r.count(Quadrant::TopLeft) + r.count(Quadrant::TopRight);
        let right = r.count(Quadrant::TopRight) + r.count(Quadrant::BottomRight);
        assert_eq!(above, n_ref);
        assert_eq!(right, n_found);
        assert_eq!(Quadrant::ALL.iter().map(|&q| r.count(q)).sum::<usize>(), n);
        if let Some(h) = r.horizontal_threshold {
            // every point strictly above the threshold value is counted above
            let strictly = alerts.iter().filter(|a| a.referral_score > h).count();
            assert!(strictly <= n_ref);
        }
    }
}

#[test]
fn uniform_scores_give_representation_near_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 400;
    let demo: Vec<Demographics> = (0..n)
        .map(|i| Demographics {
            gender: if i % 3 == 0 { Gender::Female } else { Gender::Male },
            age_band: AgeBand::Missing,
        })
        .collect();
    let mut sum = 0.0;
    for _ in 0..1000 {
        let pool: Vec<ScoredAlert> = (0..n)
            .map(|i| ScoredAlert {
                id: format!("{i:04}"),
                created_at: ts(0),
                score: rng.random(),
                label: Positive::Null,
            })
            .collect();
        let rows = bias_slices(&pool, &demo, 100).unwrap();
        sum += rows.iter().find(|r| r.group == "Female").unwrap().representation_ratio.unwrap();
    }
    let mean = sum / 1000.0;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}
