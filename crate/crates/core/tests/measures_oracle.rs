mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Timelike};
use mobility_report::measures::{MeasureContext, MeasureOptions, MeasureValue};
use mobility_report::{ContributionBound, Dataset, MeasureId};
use proptest::prelude::*;
use rand::seq::SliceRandom;

use common::*;

const ROWS: usize = 3;
const COLS: usize = 4;

fn small_dataset(counts: &[usize], outside: f64, seed: u64) -> Dataset {
    dataset_with_counts(counts, ROWS, COLS, outside, 10, seed)
}

fn vector(ctx: &MeasureContext, id: MeasureId, options: &MeasureOptions) -> Vec<u64> {
    ctx.compute(id, options, ContributionBound::Unbounded).unwrap().value.release_vector()
}

fn dataset_strategy() -> impl Strategy<Value = (Vec<usize>, f64, u64)> {
    (prop::collection::vec(1usize..=8, 1..=12), 0.0f64..0.3, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spatial_measures_match_brute_force((counts, outside, seed) in dataset_strategy()) {
        let data = small_dataset(&counts, outside, seed);
        prop_assume!(data.len() <= 100);
        let tiles = grid(ROWS, COLS);
        let ctx = MeasureContext::new(&data, &tiles);
        let k = ROWS * COLS;

        let mut visits = vec![0u64; k + 1];
        let mut flows = vec![0u64; k * k + 1];
        let mut dest = vec![0u64; k * 12 + 1];
        let mut seen = BTreeSet::new();
        for t in data.trips() {
            let o = cell_of(t.origin.lat, t.origin.lng, ROWS, COLS);
            let d = cell_of(t.destination.lat, t.destination.lng, ROWS, COLS);
            for c in [o, d] {
                visits[c.unwrap_or(k)] += 1;
                seen.extend(c);
            }
            match (o, d) {
                (Some(o), Some(d)) => flows[o * k + d] += 1,
                _ => flows[k * k] += 1,
            }
            let at = t.destination.timestamp;
            match d {
                Some(d) => {
                    let window = ((at.hour() + 22) % 24) / 4;
                    let weekend = at.weekday().number_from_monday() >= 6;
                    dest[(d * 6 + window as usize) * 2 + usize::from(weekend)] += 1;
                }
                None => dest[k * 12] += 1,
            }
        }
        let options = MeasureOptions::default();
        prop_assert_eq!(vector(&ctx, MeasureId::VisitsPerLocation, &options), visits);
        prop_assert_eq!(vector(&ctx, MeasureId::OdFlows, &options), flows);
        prop_assert_eq!(vector(&ctx, MeasureId::VisitsPerDestinationAndTime, &options), dest);
        prop_assert_eq!(vector(&ctx, MeasureId::Locations, &options), vec![seen.len() as u64]);
        prop_assert_eq!(vector(&ctx, MeasureId::Trips, &options), vec![data.len() as u64]);
    }

    #[test]
    fn temporal_and_user_measures_match_brute_force((counts, outside, seed) in dataset_strategy()) {
        let data = small_dataset(&counts, outside, seed);
        prop_assume!(data.len() <= 100);
        let tiles = grid(ROWS, COLS);
        let ctx = MeasureContext::new(&data, &tiles);
        let options = MeasureOptions::default();

        let mut weekday = vec![0u64; 7];
        let mut hour = vec![0u64; 48];
        let mut per_user: BTreeMap<&str, (u64, BTreeSet<usize>)> = BTreeMap::new();
        for t in data.trips() {
            let ts = t.origin.timestamp;
            weekday[ts.weekday().num_days_from_monday() as usize] += 1;
            hour[usize::from(ts.weekday().number_from_monday() >= 6) * 24 + ts.hour() as usize] += 1;
            let e = per_user.entry(t.user_id.as_str()).or_default();
            e.0 += 1;
            for p in [t.origin.coord(), t.destination.coord()] {
                e.1.extend(cell_of(p.0, p.1, ROWS, COLS));
            }
        }
        prop_assert_eq!(vector(&ctx, MeasureId::TripsPerWeekday, &options), weekday);
        prop_assert_eq!(vector(&ctx, MeasureId::TripsPerHour, &options), hour);
        prop_assert_eq!(vector(&ctx, MeasureId::Users, &options), vec![per_user.len() as u64]);

        // Unbounded M: trips_per_user bins are 1..=100, locations 0..=200.
        let mut tpu = vec![0u64; 101];
        let mut lpu = vec![0u64; 202];
        for (n, tiles) in per_user.values() {
            tpu[*n as usize - 1] += 1;
            lpu[tiles.len()] += 1;
        }
        prop_assert_eq!(vector(&ctx, MeasureId::TripsPerUser, &options), tpu);
        prop_assert_eq!(vector(&ctx, MeasureId::LocationsPerUser, &options), lpu);
    }

    #[test]
    fn histogram_totals_account_for_every_item((counts, outside, seed) in dataset_strategy()) {
        let data = small_dataset(&counts, outside, seed);
        let tiles = grid(ROWS, COLS);
        let ctx = MeasureContext::new(&data, &tiles);
        let options = MeasureOptions::default();
        let n = data.len() as u64;
        let users = data.user_count() as u64;
        let total = |id| vector(&ctx, id, &options).iter().sum::<u64>();
        prop_assert_eq!(total(MeasureId::VisitsPerLocation), 2 * n);
        prop_assert_eq!(total(MeasureId::OdFlows), n);
        prop_assert_eq!(total(MeasureId::VisitsPerDestinationAndTime), n);
        for id in [MeasureId::TripsOverTime, MeasureId::TripsPerWeekday, MeasureId::TripsPerHour, MeasureId::TravelTime, MeasureId::JumpLength] {
            prop_assert_eq!(total(id), n, "{}", id);
        }
        prop_assert_eq!(total(MeasureId::TimeBetweenTrips), n - users);
        for id in [MeasureId::TripsPerUser, MeasureId::LocationsPerUser, MeasureId::RadiusOfGyration] {
            prop_assert_eq!(total(id), users, "{}", id);
        }
    }

    #[test]
    fn measures_ignore_trip_order((counts, outside, seed) in dataset_strategy()) {
        let data = small_dataset(&counts, outside, seed);
        let mut shuffled = data.trips().to_vec();
        shuffled.shuffle(&mut rng(seed ^ 1));
        let other = Dataset::from_trips(shuffled);
        let tiles = grid(ROWS, COLS);
        let (a, b) = (MeasureContext::new(&data, &tiles), MeasureContext::new(&other, &tiles));
        let options = MeasureOptions::default();
        for &id in MeasureId::ALL {
            let x = a.compute(id, &options, ContributionBound::Unbounded).unwrap();
            let y = b.compute(id, &options, ContributionBound::Unbounded).unwrap();
            prop_assert_eq!(x.value.release_vector(), y.value.release_vector(), "{}", id);
            if let (Some(mut p), Some(mut q)) = (x.summary_values, y.summary_values) {
                p.sort_by(f64::total_cmp);
                q.sort_by(f64::total_cmp);
                prop_assert_eq!(p.len(), q.len());
                for (u, v) in p.iter().zip(&q) {
                    // Summation order may move the last bit.
                    prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0), "{}: {} vs {}", id, u, v);
                }
            }
        }
    }
}

#[test]
fn trip_leaving_the_grid_is_an_outlier_visit_and_excluded_flow() {
    let mut g = rng(1);
    let inside = point_in(&mut g, 0, 0);
    let outside = point_outside(&mut g);
    let data = Dataset::from_trips(vec![trip("1".into(), "u".into(), epoch(), 10, inside, outside)]);
    let tiles = grid(ROWS, COLS);
    let ctx = MeasureContext::new(&data, &tiles);
    let options = MeasureOptions::default();
    let MeasureValue::Spatial(s) = ctx.compute(MeasureId::VisitsPerLocation, &options, ContributionBound::Unbounded).unwrap().value else {
        panic!("spatial measure");
    };
    assert_eq!(s.counts[0], 1);
    assert_eq!(s.outlier_count, 1);
    let MeasureValue::OdMatrix(od) = ctx.compute(MeasureId::OdFlows, &options, ContributionBound::Unbounded).unwrap().value else {
        panic!("od measure");
    };
    assert_eq!(od.flows.iter().sum::<u64>(), 0);
    assert_eq!(od.excluded_count, 1);
}
