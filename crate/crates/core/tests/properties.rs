mod common;

use mobility_report::emd::transport_cost;
use mobility_report::eval::{location_error_with, od_flow_error, radius_of_gyration_error};
use mobility_report::mechanisms::{dp_five_number_summary, noisy_counts, PrivacyBudget};
use mobility_report::{
    allocate_budget, bound_contribution, generate_report, serialize_json, ContributionBound, FiveNumberSummary,
    MeasureId, PrivacyMode, ReportConfig, SensitivityBasis,
};
use proptest::prelude::*;

use common::*;

fn masses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n).prop_map(|mut v| {
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        v
    })
}

/// Points on a line plus an offset per point, so distances are a metric
/// but not a trivial one.
fn metric(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), n)
}

fn euclid(p: &[(f64, f64)]) -> impl Fn(usize, usize) -> f64 + '_ {
    move |i, j| ((p[i].0 - p[j].0).powi(2) + (p[i].1 - p[j].1).powi(2)).sqrt()
}

fn summary() -> impl Strategy<Value = FiveNumberSummary> {
    prop::array::uniform5(-1e3f64..1e5).prop_map(|mut a| {
        a.sort_by(f64::total_cmp);
        FiveNumberSummary::from_array(a)
    })
}

proptest! {
    #[test]
    fn od_error_is_bounded(a in prop::collection::vec(-5.0f64..50.0, 1..60), seed in any::<u64>()) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 60)) & 3) as f64 - 1.0).collect();
        if let Ok(e) = od_flow_error(&a, &b) {
            prop_assert!((0.0..=2.0).contains(&e));
        }
    }

    #[test]
    fn gyration_error_is_bounded(a in summary(), b in summary()) {
        let e = radius_of_gyration_error(&a, &b);
        prop_assert!((0.0..=2.0).contains(&e));
        prop_assert_eq!(radius_of_gyration_error(&a, &a), 0.0);
    }

    #[test]
    fn emd_is_symmetric(a in masses(6), b in masses(6), pts in metric(6)) {
        let d = euclid(&pts);
        let ab = location_error_with(&a, &b, &d).unwrap();
        let ba = location_error_with(&b, &a, &d).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(location_error_with(&a, &a, &d).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn emd_obeys_triangle_inequality(a in masses(5), b in masses(5), c in masses(5), pts in metric(5)) {
        let d = euclid(&pts);
        let ab = location_error_with(&a, &b, &d).unwrap();
        let bc = location_error_with(&b, &c, &d).unwrap();
        let ac = location_error_with(&a, &c, &d).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn transport_cost_is_at_most_any_feasible_plan(a in masses(4), b in masses(4), pts in metric(4)) {
        // The independent-coupling plan a_i * b_j is always feasible.
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let a: Vec<f64> = a.iter().map(|x| x / sa).collect();
        let b: Vec<f64> = b.iter().map(|x| x / sb).collect();
        let d = euclid(&pts);
        let plan: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| a[i] * b[j] * d(i, j)).sum();
        prop_assert!(transport_cost(&a, &b, &d) <= plan + 1e-9);
    }

    #[test]
    fn bounding_keeps_a_subset_within_the_cap(counts in prop::collection::vec(1usize..15, 1..20), m in 1u32..6, seed in any::<u64>()) {
        let data = dataset_with_counts(&counts, 2, 2, 0.0, 5, seed);
        let bounded = bound_contribution(&data, ContributionBound::new(m).unwrap(), seed);
        for (user, idx) in bounded.users() {
            prop_assert!(idx.len() <= m as usize);
            let before = data.user_trips(user).unwrap().len();
            prop_assert_eq!(idx.len(), before.min(m as usize));
        }
        for t in bounded.trips() {
            prop_assert!(data.trips().contains(t));
        }
        let again = bound_contribution(&data, ContributionBound::new(m).unwrap(), seed);
        prop_assert_eq!(again.trips(), bounded.trips());
    }

    #[test]
    fn released_counts_are_non_negative_integers(counts in prop::collection::vec(0u64..50, 1..30), eps in 0.01f64..10.0, seed in any::<u64>()) {
        let budget = PrivacyBudget::new(eps, PrivacyMode::UserLevel).unwrap();
        let out = noisy_counts(&counts, SensitivityBasis::PerTrip, budget, ContributionBound::new(3).unwrap(), &mut rng(seed)).unwrap();
        prop_assert_eq!(out.raw.len(), counts.len());
        for (&raw, &shown) in out.raw.iter().zip(&out.display) {
            prop_assert_eq!(shown, raw.max(0.0).round() as u64);
        }
    }

    #[test]
    fn private_summaries_are_monotone_inputs(values in prop::collection::vec(-100.0f64..100.0, 1..40), eps in 0.01f64..5.0, seed in any::<u64>()) {
        let budget = PrivacyBudget::new(eps, PrivacyMode::UserLevel).unwrap();
        let s = dp_five_number_summary(&values, SensitivityBasis::PerUser, budget, ContributionBound::new(2).unwrap(), &mut rng(seed)).unwrap();
        prop_assert!(s.is_monotone());
        for v in s.to_array() {
            prop_assert!(values.contains(&v));
        }
    }

    #[test]
    fn uniform_allocation_spends_exactly_epsilon(eps in 0.01f64..10.0, pick in prop::collection::vec(any::<bool>(), 16)) {
        let measures: Vec<MeasureId> = MeasureId::ALL.iter().zip(&pick).filter(|(_, &p)| p).map(|(&m, _)| m).collect();
        prop_assume!(!measures.is_empty());
        let config = ReportConfig { epsilon: Some(eps), measures, max_trips_per_user: ContributionBound::new(2).unwrap(), ..ReportConfig::default() };
        let shares = allocate_budget(&config).unwrap();
        let total: f64 = shares.values().sum();
        prop_assert!((total - eps).abs() <= 1e-9 * eps);
        prop_assert!(total <= eps * (1.0 + 1e-12));
    }
}

#[test]
fn reports_are_reproducible_and_seed_sensitive() {
    let counts: Vec<usize> = (0..80).map(|u| 1 + u % 6).collect();
    let data = dataset_with_counts(&counts, 3, 3, 0.1, 30, 5);
    let tiles = grid(3, 3);
    let config = ReportConfig {
        epsilon: Some(1.0),
        max_trips_per_user: ContributionBound::new(3).unwrap(),
        seed: 17,
        ..ReportConfig::default()
    };
    let a = serialize_json(&generate_report(&data, &tiles, &config).unwrap());
    let b = serialize_json(&generate_report(&data, &tiles, &config).unwrap());
    assert_eq!(a, b);
    let other = ReportConfig { seed: 18, ..config };
    let c = serialize_json(&generate_report(&data, &tiles, &other).unwrap());
    assert_ne!(a, c);
}
