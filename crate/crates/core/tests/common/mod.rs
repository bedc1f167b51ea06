#![allow(dead_code)]

use chrono::{Duration, NaiveDate, NaiveDateTime};
use mobility_report::model::{SpatioTemporalPoint, TripRecord};
use mobility_report::tessellation::load_tessellation;
use mobility_report::{Dataset, Tessellation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAT0: f64 = 40.30;
pub const LNG0: f64 = -3.80;
pub const STEP: f64 = 0.01;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tile_id(row: usize, col: usize) -> String {
    format!("r{row:02}c{col:02}")
}

/// Square cells of `STEP` degrees, row 0 at the south-west corner.
pub fn grid_geojson(rows: usize, cols: usize) -> String {
    let mut features = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (s, w) = (LAT0 + r as f64 * STEP, LNG0 + c as f64 * STEP);
            let (n, e) = (s + STEP, w + STEP);
            features.push(format!(
                r#"{{"type":"Feature","properties":{{"tile_id":"{}"}},"geometry":{{"type":"Polygon","coordinates":[[[{w},{s}],[{e},{s}],[{e},{n}],[{w},{n}],[{w},{s}]]]}}}}"#,
                tile_id(r, c)
            ));
        }
    }
    format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(","))
}

pub fn grid(rows: usize, cols: usize) -> Tessellation {
    load_tessellation(grid_geojson(rows, cols).as_bytes())
        .expect("grid loads")
        .tessellation
}

/// A point well inside cell `(row, col)`; never within 10% of an edge.
pub fn point_in(rng: &mut impl Rng, row: usize, col: usize) -> (f64, f64) {
    (
        LAT0 + (row as f64 + rng.random_range(0.1..0.9)) * STEP,
        LNG0 + (col as f64 + rng.random_range(0.1..0.9)) * STEP,
    )
}

/// A point south of the grid, outside every tile.
pub fn point_outside(rng: &mut impl Rng) -> (f64, f64) {
    (LAT0 - rng.random_range(0.05..0.2), LNG0 + rng.random_range(0.0..0.05))
}

/// The cell a generated point falls in, by arithmetic on the grid.
pub fn cell_of(lat: f64, lng: f64, rows: usize, cols: usize) -> Option<usize> {
    let r = ((lat - LAT0) / STEP).floor();
    let c = ((lng - LNG0) / STEP).floor();
    (r >= 0.0 && c >= 0.0 && (r as usize) < rows && (c as usize) < cols).then(|| r as usize * cols + c as usize)
}

pub fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

pub fn trip(id: String, user: String, t0: NaiveDateTime, minutes: i64, o: (f64, f64), d: (f64, f64)) -> TripRecord {
    let t1 = t0 + Duration::minutes(minutes);
    TripRecord::new(
        id,
        user,
        SpatioTemporalPoint::new(t0, o.0, o.1).unwrap(),
        SpatioTemporalPoint::new(t1, d.0, d.1).unwrap(),
    )
    .unwrap()
}

/// Users with the given trip counts; endpoints uniform over a
/// `rows x cols` grid with a `outside` share of endpoints off the grid,
/// origin times spread over `days` days.
pub fn dataset_with_counts(counts: &[usize], rows: usize, cols: usize, outside: f64, days: i64, seed: u64) -> Dataset {
    let mut g = rng(seed);
    let mut trips = Vec::with_capacity(counts.iter().sum());
    for (u, &n) in counts.iter().enumerate() {
        for k in 0..n {
            let pick = |g: &mut ChaCha8Rng| {
                if g.random_bool(outside) {
                    point_outside(g)
                } else {
                    let (r, c) = (g.random_range(0..rows), g.random_range(0..cols));
                    point_in(g, r, c)
                }
            };
            let o = pick(&mut g);
            let d = pick(&mut g);
            let t0 = epoch() + Duration::seconds(g.random_range(0..days * 86_400));
            let minutes = g.random_range(1..120);
            trips.push(trip(format!("u{u}-{k}"), format!("u{u}"), t0, minutes, o, d));
        }
    }
    Dataset::from_trips(trips)
}

/// 75,208 users and 222,744 trips: three quarters with two trips, one user
/// with twenty, the rest with five or six.
pub fn madrid_counts() -> Vec<usize> {
    let mut counts = vec![2; 56_406];
    counts.push(20);
    let rest = 18_801;
    let extra = 222_744 - 56_406 * 2 - 20 - rest * 5;
    counts.extend((0..rest).map(|k| if k < extra { 6 } else { 5 }));
    counts
}

/// 182 users and 18,670 trips, one of them with 2,153.
pub fn geolife_counts() -> Vec<usize> {
    let mut counts = vec![2_153];
    let rest = 181;
    let base = (18_670 - 2_153) / rest;
    let extra = 18_670 - 2_153 - base * rest;
    counts.extend((0..rest).map(|k| if k < extra { base + 1 } else { base }));
    counts
}

pub fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Great-circle distance on a 6,371 km sphere, written out independently
/// of the library.
pub fn great_circle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 6_371_000.0f64;
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().min(1.0).asin()
}

/// Centre of grid cell `index` in a grid with `cols` columns.
pub fn cell_center(index: usize, cols: usize) -> (f64, f64) {
    let (r, c) = (index / cols, index % cols);
    (LAT0 + (r as f64 + 0.5) * STEP, LNG0 + (c as f64 + 0.5) * STEP)
}

/// A city whose per-user trip counts follow a truncated power law and
/// whose busiest users live in one corner, so activity is right-skewed and
/// correlated with place.
pub fn skewed_city(trips_target: usize, rows: usize, cols: usize, seed: u64) -> Dataset {
    let mut g = rng(seed);
    let mut trips = Vec::with_capacity(trips_target);
    let mut u = 0usize;
    while trips.len() < trips_target {
        let x: f64 = g.random_range(f64::EPSILON..1.0);
        let n = (x.powf(-1.0 / 1.1) as usize).clamp(1, 1_500);
        let heavy = n > 20;
        let home = if heavy {
            (g.random_range(0..rows / 3), g.random_range(0..cols / 3))
        } else {
            (g.random_range(0..rows), g.random_range(0..cols))
        };
        for k in 0..n.min(trips_target - trips.len()) {
            let near = |g: &mut ChaCha8Rng| {
                let r = (home.0 + g.random_range(0..=2)).min(rows - 1);
                let c = (home.1 + g.random_range(0..=2)).min(cols - 1);
                point_in(g, r, c)
            };
            let o = near(&mut g);
            let d = near(&mut g);
            let t0 = epoch() + Duration::seconds(g.random_range(0..60 * 86_400));
            trips.push(trip(format!("c{u}-{k}"), format!("c{u}"), t0, g.random_range(2..90), o, d));
        }
        u += 1;
    }
    Dataset::from_trips(trips)
}
