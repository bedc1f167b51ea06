//! Exact aggregates for every report measure.
//!
//! Nothing in here adds noise. Each measure reduces to a vector of counts
//! (see [`MeasureValue::release_vector`]) and, for some, a list of scalar
//! values that feed a five-number summary.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounding::ContributionBound;
use crate::catalog::MeasureId;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::tessellation::{haversine_distance, Tessellation, TileAssignment};

/// Lower/upper cut-offs and bin width for a numeric histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinConfig {
    pub min: f64,
    pub max: f64,
    pub bin_width: f64,
}

impl BinConfig {
    pub fn new(min: f64, max: f64, bin_width: f64) -> Result<Self> {
        let c = BinConfig { min, max, bin_width };
        c.validate("bins")?;
        Ok(c)
    }

    fn validate(&self, measure: &str) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidBins {
                measure: measure.to_string(),
                reason: reason.to_string(),
            })
        };
        if !(self.min.is_finite() && self.max.is_finite() && self.bin_width.is_finite()) {
            return fail("bounds must be finite");
        }
        if self.max <= self.min {
            return fail("max must be greater than min");
        }
        if self.bin_width <= 0.0 {
            return fail("bin_width must be positive");
        }
        if (self.max - self.min) / self.bin_width > 1e6 {
            return fail("more than a million bins");
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        // Tolerate rounding so that (0, 90, 5) gives 18 bins, not 19.
        (((self.max - self.min) / self.bin_width) - 1e-9).ceil().max(1.0) as usize
    }

    /// `bin_count + 1` ascending edges; the last is exactly `max`.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.bin_count();
        (0..n)
            .map(|k| self.min + k as f64 * self.bin_width)
            .chain(std::iter::once(self.max))
            .collect()
    }

    /// Bins are `[e_k, e_k+1)` except the last, which also holds `max`.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if v.is_nan() || v < self.min || v > self.max {
            return None;
        }
        let k = ((v - self.min) / self.bin_width).floor() as usize;
        Some(k.min(self.bin_count() - 1))
    }
}

/// Shipped cut-offs. Values are in minutes (travel time), meters (jump
/// length, radius of gyration) and hours (time between trips).
pub fn default_bins(measure: MeasureId, bound: ContributionBound) -> Option<BinConfig> {
    let m = bound.limit().map(f64::from).unwrap_or(100.0);
    let (min, max, width) = match measure {
        MeasureId::TravelTime => (0.0, 90.0, 5.0),
        MeasureId::JumpLength => (0.0, 20_000.0, 1_000.0),
        MeasureId::RadiusOfGyration => (0.0, 20_000.0, 1_000.0),
        MeasureId::TimeBetweenTrips => (0.0, 48.0, 2.0),
        MeasureId::TripsPerUser => (1.0, m + 1.0, 1.0),
        MeasureId::LocationsPerUser => (0.0, 2.0 * m + 1.0, 1.0),
        MeasureId::MobilityEntropy => (0.0, 1.0, 0.1),
        _ => return None,
    };
    Some(BinConfig {
        min,
        max,
        bin_width: width,
    })
}

/// Reads a bins file: a JSON object mapping measure ids to
/// `{min, max, bin_width}`.
pub fn load_bins<R: Read>(reader: R) -> Result<BTreeMap<MeasureId, BinConfig>> {
    let raw: BTreeMap<String, BinConfig> = serde_json::from_reader(reader)
        .map_err(|e| Error::Config(format!("bins file: {e}")))?;
    let mut out = BTreeMap::new();
    for (id, cfg) in raw {
        let measure: MeasureId = id.parse()?;
        if default_bins(measure, ContributionBound::Unbounded).is_none() {
            return Err(Error::InvalidBins {
                measure: id,
                reason: "measure has no numeric histogram".into(),
            });
        }
        cfg.validate(&id)?;
        out.insert(measure, cfg);
    }
    Ok(out)
}

/// What the bins of a histogram are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// Numeric ranges; values outside the outer edges are outliers.
    Edges(Vec<f64>),
    /// Time intervals; trips outside the covered range are outliers.
    Intervals(Vec<String>),
    /// A closed set of categories that every item falls into.
    Categories(Vec<String>),
}

impl Bins {
    pub fn len(&self) -> usize {
        match self {
            Bins::Edges(e) => e.len().saturating_sub(1),
            Bins::Intervals(l) | Bins::Categories(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_outliers(&self) -> bool {
        !matches!(self, Bins::Categories(_))
    }

    /// Display label of bin `k`.
    pub fn label(&self, k: usize) -> String {
        match self {
            Bins::Edges(e) => format!("{}-{}", trim_float(e[k]), trim_float(e[k + 1])),
            Bins::Intervals(l) | Bins::Categories(l) => l[k].clone(),
        }
    }
}

fn trim_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}").trim_end_matches('0').to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Bins,
    pub counts: Vec<u64>,
    pub outlier_count: u64,
}

impl Histogram {
    fn empty(bins: Bins) -> Self {
        Histogram {
            counts: vec![0; bins.len()],
            bins,
            outlier_count: 0,
        }
    }

    pub fn from_values(values: &[f64], config: &BinConfig) -> Self {
        let mut h = Histogram::empty(Bins::Edges(config.edges()));
        for &v in values {
            match config.bin_of(v) {
                Some(k) => h.counts[k] += 1,
                None => h.outlier_count += 1,
            }
        }
        h
    }

    /// Items counted, outliers included.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outlier_count
    }
}

/// Visit counts per tile, in tessellation order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDistribution {
    pub counts: Vec<u64>,
    pub outlier_count: u64,
}

impl SpatialDistribution {
    pub fn by_tile_id<'a>(&'a self, tess: &'a Tessellation) -> impl Iterator<Item = (&'a str, u64)> {
        tess.tile_ids().zip(self.counts.iter().copied())
    }
}

/// Directed trip counts between tiles, row-major by origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ODMatrix {
    pub tiles: usize,
    pub flows: Vec<u64>,
    /// Trips with at least one endpoint outside the tessellation.
    pub excluded_count: u64,
}

impl ODMatrix {
    pub fn flow(&self, origin: usize, destination: usize) -> u64 {
        self.flows[origin * self.tiles + destination]
    }
}

/// A daily time slot `[start_hour, end_hour)`, wrapping past midnight when
/// `end_hour <= start_hour`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub label: String,
    pub start_hour: u32,
    pub end_hour: u32,
}

impl TimeWindow {
    pub fn new(start_hour: u32, end_hour: u32) -> Self {
        TimeWindow {
            label: format!("{start_hour:02}:00-{end_hour:02}:00"),
            start_hour,
            end_hour,
        }
    }

    pub fn contains(&self, t: &NaiveDateTime) -> bool {
        let minute = t.hour() * 60 + t.minute();
        let (s, e) = (self.start_hour * 60, self.end_hour * 60);
        if s < e {
            (s..e).contains(&minute)
        } else {
            minute >= s || minute < e
        }
    }
}

pub fn default_windows() -> Vec<TimeWindow> {
    [(2, 6), (6, 10), (10, 14), (14, 18), (18, 22), (22, 2)]
        .into_iter()
        .map(|(s, e)| TimeWindow::new(s, e))
        .collect()
}

fn check_windows(windows: &[TimeWindow]) -> Result<()> {
    // Every minute of the day must fall into exactly one window.
    let mut cover = [0u8; 24 * 60];
    let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    for minute in 0..24 * 60 {
        let t = base.and_hms_opt(minute / 60, minute % 60, 0).expect("valid time");
        cover[minute as usize] = windows.iter().filter(|w| w.contains(&t)).count() as u8;
    }
    if windows.iter().any(|w| w.start_hour > 23 || w.end_hour > 24) || cover.iter().any(|&c| c != 1) {
        return Err(Error::Config("time windows must partition the day".into()));
    }
    Ok(())
}

/// Destination visits per (tile, time window, weekday/weekend).
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationTimeCounts {
    pub windows: Vec<TimeWindow>,
    /// Indexed `(tile * windows + window) * 2 + weekend`.
    pub counts: Vec<u64>,
    pub outlier_count: u64,
}

impl DestinationTimeCounts {
    pub fn get(&self, tile: usize, window: usize, weekend: bool) -> u64 {
        self.counts[(tile * self.windows.len() + window) * 2 + usize::from(weekend)]
    }
}

/// Tile assignment of both endpoints of every trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    pub origin: Vec<TileAssignment>,
    pub destination: Vec<TileAssignment>,
}

pub fn assign_endpoints(dataset: &Dataset, tess: &Tessellation) -> Endpoints {
    let (origin, destination) = dataset
        .trips()
        .par_iter()
        .map(|t| {
            (
                tess.assign(t.origin.lat, t.origin.lng),
                tess.assign(t.destination.lat, t.destination.lng),
            )
        })
        .unzip();
    Endpoints { origin, destination }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverviewCounts {
    pub trips: u64,
    pub users: u64,
    pub locations: u64,
}

pub fn overview_counts(dataset: &Dataset, endpoints: &Endpoints) -> OverviewCounts {
    let mut seen: Vec<usize> = endpoints
        .origin
        .iter()
        .chain(&endpoints.destination)
        .filter_map(|a| a.index())
        .collect();
    seen.sort_unstable();
    seen.dedup();
    OverviewCounts {
        trips: dataset.len() as u64,
        users: dataset.user_count() as u64,
        locations: seen.len() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Day,
    Week,
    Month,
}

impl Granularity {
    /// Day up to 90 days, week up to 730 days, month beyond.
    pub fn for_span(first: NaiveDate, last: NaiveDate) -> Self {
        match (last - first).num_days() + 1 {
            ..=90 => Granularity::Day,
            ..=730 => Granularity::Week,
            _ => Granularity::Month,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripsOverTime {
    pub granularity: Granularity,
    pub histogram: Histogram,
}

fn month_index(d: NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

/// Trip counts per day, week or month by origin time over the closed date
/// range `[first, last]`, with empty intervals present as zeros. Trips
/// outside the range are outliers.
pub fn trips_over_time(dataset: &Dataset, first: NaiveDate, last: NaiveDate) -> TripsOverTime {
    let (first, last) = (first.min(last), first.max(last));
    let granularity = Granularity::for_span(first, last);
    let labels: Vec<String> = match granularity {
        Granularity::Day => first
            .iter_days()
            .take_while(|d| *d <= last)
            .map(|d| d.to_string())
            .collect(),
        Granularity::Week => first
            .iter_weeks()
            .take_while(|d| *d <= last)
            .map(|d| d.to_string())
            .collect(),
        Granularity::Month => (month_index(first)..=month_index(last))
            .map(|m| format!("{:04}-{:02}", m.div_euclid(12), m.rem_euclid(12) + 1))
            .collect(),
    };
    let mut h = Histogram::empty(Bins::Intervals(labels));
    for t in dataset.trips() {
        let d = t.origin.timestamp.date();
        if d < first || d > last {
            h.outlier_count += 1;
            continue;
        }
        let k = match granularity {
            Granularity::Day => (d - first).num_days(),
            Granularity::Week => (d - first).num_days() / 7,
            Granularity::Month => month_index(d) - month_index(first),
        };
        h.counts[k as usize] += 1;
    }
    TripsOverTime {
        granularity,
        histogram: h,
    }
}

/// First and last origin dates of the dataset.
pub fn date_range(dataset: &Dataset) -> Option<(NaiveDate, NaiveDate)> {
    let dates = dataset.trips().iter().map(|t| t.origin.timestamp.date());
    Some((dates.clone().min()?, dates.max()?))
}

/// Origin times as seconds since the Unix epoch.
pub fn origin_seconds(dataset: &Dataset) -> Vec<f64> {
    dataset
        .trips()
        .iter()
        .map(|t| t.origin.timestamp.and_utc().timestamp() as f64)
        .collect()
}

pub fn seconds_to_datetime(s: f64) -> Option<NaiveDateTime> {
    chrono::DateTime::from_timestamp(s.round() as i64, 0).map(|d| d.naive_utc())
}

const WEEKDAYS: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

fn is_weekend(t: &NaiveDateTime) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalProfiles {
    /// Monday through Sunday.
    pub per_weekday: Histogram,
    /// Hours 0-23 on weekdays, then hours 0-23 on weekends.
    pub per_hour: Histogram,
}

pub fn temporal_profiles(dataset: &Dataset) -> TemporalProfiles {
    let mut per_weekday = Histogram::empty(Bins::Categories(
        WEEKDAYS.iter().map(|d| d.to_string()).collect(),
    ));
    let hour_labels = ["weekday", "weekend"]
        .iter()
        .flat_map(|kind| (0..24).map(move |h| format!("{kind} {h:02}")))
        .collect();
    let mut per_hour = Histogram::empty(Bins::Categories(hour_labels));
    for t in dataset.trips() {
        let ts = &t.origin.timestamp;
        per_weekday.counts[ts.weekday().num_days_from_monday() as usize] += 1;
        per_hour.counts[usize::from(is_weekend(ts)) * 24 + ts.hour() as usize] += 1;
    }
    TemporalProfiles {
        per_weekday,
        per_hour,
    }
}

/// Both endpoints of every trip count as a visit.
pub fn visits_per_location(endpoints: &Endpoints, tiles: usize) -> SpatialDistribution {
    let mut out = SpatialDistribution {
        counts: vec![0; tiles],
        outlier_count: 0,
    };
    for a in endpoints.origin.iter().chain(&endpoints.destination) {
        match a.index() {
            Some(i) => out.counts[i] += 1,
            None => out.outlier_count += 1,
        }
    }
    out
}

/// Destinations only, keyed by arrival time.
pub fn visits_per_destination_time(
    dataset: &Dataset,
    endpoints: &Endpoints,
    tiles: usize,
    windows: &[TimeWindow],
) -> Result<DestinationTimeCounts> {
    check_windows(windows)?;
    let w = windows.len();
    let mut out = DestinationTimeCounts {
        windows: windows.to_vec(),
        counts: vec![0; tiles * w * 2],
        outlier_count: 0,
    };
    for (t, a) in dataset.trips().iter().zip(&endpoints.destination) {
        let Some(tile) = a.index() else {
            out.outlier_count += 1;
            continue;
        };
        let ts = &t.destination.timestamp;
        let k = windows.iter().position(|win| win.contains(ts)).expect("windows partition the day");
        out.counts[(tile * w + k) * 2 + usize::from(is_weekend(ts))] += 1;
    }
    Ok(out)
}

pub fn od_flows(endpoints: &Endpoints, tiles: usize) -> ODMatrix {
    let mut out = ODMatrix {
        tiles,
        flows: vec![0; tiles * tiles],
        excluded_count: 0,
    };
    for (o, d) in endpoints.origin.iter().zip(&endpoints.destination) {
        match (o.index(), d.index()) {
            (Some(o), Some(d)) => out.flows[o * tiles + d] += 1,
            _ => out.excluded_count += 1,
        }
    }
    out
}

/// A histogram together with the raw values it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarDistribution {
    pub histogram: Histogram,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripScalar {
    /// Minutes from departure to arrival.
    TravelTime,
    /// Great-circle meters from origin to destination.
    JumpLength,
    /// Hours from the end of one trip of a user to the start of their next.
    TimeBetweenTrips,
}

fn hours(d: Duration) -> f64 {
    d.num_milliseconds() as f64 / 3_600_000.0
}

pub fn trip_scalar_values(dataset: &Dataset, kind: TripScalar) -> Vec<f64> {
    let trips = dataset.trips();
    match kind {
        TripScalar::TravelTime => trips
            .iter()
            .map(|t| (t.destination.timestamp - t.origin.timestamp).num_milliseconds() as f64 / 60_000.0)
            .collect(),
        TripScalar::JumpLength => trips
            .iter()
            .map(|t| haversine_distance(t.origin.coord(), t.destination.coord()))
            .collect(),
        TripScalar::TimeBetweenTrips => {
            let mut gaps = Vec::with_capacity(trips.len());
            for (_, idx) in dataset.users() {
                let mut own: Vec<_> = idx.iter().map(|&i| &trips[i]).collect();
                own.sort_by_key(|t| (t.origin.timestamp, t.destination.timestamp));
                gaps.extend(
                    own.windows(2)
                        .map(|w| hours(w[1].origin.timestamp - w[0].destination.timestamp)),
                );
            }
            gaps
        }
    }
}

pub fn trip_scalar_distribution(dataset: &Dataset, kind: TripScalar, bins: &BinConfig) -> ScalarDistribution {
    let values = trip_scalar_values(dataset, kind);
    ScalarDistribution {
        histogram: Histogram::from_values(&values, bins),
        values,
    }
}

/// Root-mean-square great-circle distance of `points` from their mean
/// latitude/longitude. Zero for an empty slice.
pub fn radius_of_gyration(points: &[(f64, f64)]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    let center = (
        points.iter().map(|p| p.0).sum::<f64>() / n,
        points.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let mean_sq = points
        .iter()
        .map(|&p| haversine_distance(p, center).powi(2))
        .sum::<f64>()
        / n;
    mean_sq.sqrt()
}

/// Shannon entropy in bits of the visit shares, optionally divided by
/// `log2(k)` for `k` visited tiles.
pub fn mobility_entropy(visits: &[u64], normalized: bool) -> f64 {
    let visits: Vec<f64> = visits.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    let k = visits.len();
    if k <= 1 {
        return 0.0;
    }
    let total: f64 = visits.iter().sum();
    let h = -visits
        .iter()
        .map(|c| {
            let p = c / total;
            p * p.log2()
        })
        .sum::<f64>();
    if normalized {
        (h / (k as f64).log2()).clamp(0.0, 1.0)
    } else {
        h.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserScalar {
    TripsPerUser,
    /// Distinct tiles among a user's endpoints.
    LocationsPerUser,
    RadiusOfGyration,
    /// Users without any endpoint inside the tessellation are skipped.
    MobilityEntropy { normalized: bool },
}

pub fn user_scalar_values(dataset: &Dataset, endpoints: &Endpoints, kind: UserScalar) -> Vec<f64> {
    let trips = dataset.trips();
    let users: Vec<&[usize]> = dataset.users().map(|(_, idx)| idx).collect();
    let tile_visits = |idx: &[usize]| -> HashMap<usize, u64> {
        let mut visits = HashMap::new();
        for &i in idx {
            for a in [endpoints.origin[i], endpoints.destination[i]] {
                if let Some(t) = a.index() {
                    *visits.entry(t).or_insert(0) += 1;
                }
            }
        }
        visits
    };
    users
        .par_iter()
        .filter_map(|idx| match kind {
            UserScalar::TripsPerUser => Some(idx.len() as f64),
            UserScalar::LocationsPerUser => Some(tile_visits(idx).len() as f64),
            UserScalar::RadiusOfGyration => {
                let points: Vec<(f64, f64)> = idx
                    .iter()
                    .flat_map(|&i| [trips[i].origin.coord(), trips[i].destination.coord()])
                    .collect();
                Some(radius_of_gyration(&points))
            }
            UserScalar::MobilityEntropy { normalized } => {
                let visits = tile_visits(idx);
                if visits.is_empty() {
                    return None;
                }
                let mut counts: Vec<u64> = visits.into_values().collect();
                counts.sort_unstable();
                Some(mobility_entropy(&counts, normalized))
            }
        })
        .collect()
}

pub fn user_scalar_distribution(
    dataset: &Dataset,
    endpoints: &Endpoints,
    kind: UserScalar,
    bins: &BinConfig,
) -> ScalarDistribution {
    let values = user_scalar_values(dataset, endpoints, kind);
    ScalarDistribution {
        histogram: Histogram::from_values(&values, bins),
        values,
    }
}

/// Knobs for computing measures. Missing bin configs fall back to
/// [`default_bins`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureOptions {
    pub bins: BTreeMap<MeasureId, BinConfig>,
    pub windows: Vec<TimeWindow>,
    pub entropy_normalized: bool,
    /// Date range of the trips-over-time histogram; the data's own first
    /// and last day when absent.
    pub time_range: Option<(NaiveDate, NaiveDate)>,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            bins: BTreeMap::new(),
            windows: default_windows(),
            entropy_normalized: true,
            time_range: None,
        }
    }
}

impl MeasureOptions {
    pub fn bins_for(&self, measure: MeasureId, bound: ContributionBound) -> Option<BinConfig> {
        self.bins
            .get(&measure)
            .copied()
            .or_else(|| default_bins(measure, bound))
    }
}

/// The count part of a measure.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureValue {
    Count(u64),
    Histogram(Histogram),
    TripsOverTime(TripsOverTime),
    Spatial(SpatialDistribution),
    DestinationTime(DestinationTimeCounts),
    OdMatrix(ODMatrix),
}

impl MeasureValue {
    /// The numbers that receive noise, in a fixed order: every bin, then
    /// the outlier count if the measure has one.
    pub fn release_vector(&self) -> Vec<u64> {
        fn with_outliers(counts: &[u64], outliers: u64) -> Vec<u64> {
            counts.iter().copied().chain(std::iter::once(outliers)).collect()
        }
        match self {
            MeasureValue::Count(c) => vec![*c],
            MeasureValue::Histogram(h) | MeasureValue::TripsOverTime(TripsOverTime { histogram: h, .. }) => {
                if h.bins.has_outliers() {
                    with_outliers(&h.counts, h.outlier_count)
                } else {
                    h.counts.clone()
                }
            }
            MeasureValue::Spatial(s) => with_outliers(&s.counts, s.outlier_count),
            MeasureValue::DestinationTime(d) => with_outliers(&d.counts, d.outlier_count),
            MeasureValue::OdMatrix(m) => with_outliers(&m.flows, m.excluded_count),
        }
    }

    /// Same shape with the numbers replaced, in [`Self::release_vector`]
    /// order.
    pub fn with_release_vector(&self, v: &[u64]) -> MeasureValue {
        assert_eq!(v.len(), self.release_vector().len(), "release vector length");
        let split = |n: usize| (v[..n].to_vec(), v.get(n).copied().unwrap_or(0));
        match self {
            MeasureValue::Count(_) => MeasureValue::Count(v[0]),
            MeasureValue::Histogram(h) => MeasureValue::Histogram(refill(h, v)),
            MeasureValue::TripsOverTime(t) => MeasureValue::TripsOverTime(TripsOverTime {
                granularity: t.granularity,
                histogram: refill(&t.histogram, v),
            }),
            MeasureValue::Spatial(s) => {
                let (counts, outlier_count) = split(s.counts.len());
                MeasureValue::Spatial(SpatialDistribution { counts, outlier_count })
            }
            MeasureValue::DestinationTime(d) => {
                let (counts, outlier_count) = split(d.counts.len());
                MeasureValue::DestinationTime(DestinationTimeCounts {
                    windows: d.windows.clone(),
                    counts,
                    outlier_count,
                })
            }
            MeasureValue::OdMatrix(m) => {
                let (flows, excluded_count) = split(m.flows.len());
                MeasureValue::OdMatrix(ODMatrix {
                    tiles: m.tiles,
                    flows,
                    excluded_count,
                })
            }
        }
    }
}

fn refill(h: &Histogram, v: &[u64]) -> Histogram {
    let n = h.counts.len();
    Histogram {
        bins: h.bins.clone(),
        counts: v[..n].to_vec(),
        outlier_count: if h.bins.has_outliers() { v[n] } else { 0 },
    }
}

/// Exact result of one measure: counts plus summary inputs where the
/// measure has a five-number summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMeasure {
    pub value: MeasureValue,
    pub summary_values: Option<Vec<f64>>,
}

/// Inputs shared by all measures of one dataset.
pub struct MeasureContext<'a> {
    pub dataset: &'a Dataset,
    pub tessellation: &'a Tessellation,
    pub endpoints: Endpoints,
}

impl<'a> MeasureContext<'a> {
    pub fn new(dataset: &'a Dataset, tessellation: &'a Tessellation) -> Self {
        MeasureContext {
            dataset,
            tessellation,
            endpoints: assign_endpoints(dataset, tessellation),
        }
    }

    pub fn overview(&self) -> OverviewCounts {
        overview_counts(self.dataset, &self.endpoints)
    }

    pub fn visits_per_location(&self) -> SpatialDistribution {
        visits_per_location(&self.endpoints, self.tessellation.len())
    }

    pub fn od_flows(&self) -> ODMatrix {
        od_flows(&self.endpoints, self.tessellation.len())
    }

    pub fn user_values(&self, kind: UserScalar) -> Vec<f64> {
        user_scalar_values(self.dataset, &self.endpoints, kind)
    }

    /// Computes `measure` on the context's dataset. `bound` only picks
    /// default bins for the per-user histograms.
    pub fn compute(
        &self,
        measure: MeasureId,
        options: &MeasureOptions,
        bound: ContributionBound,
    ) -> Result<ExactMeasure> {
        let bins = || {
            options
                .bins_for(measure, bound)
                .expect("every histogram measure has default bins")
        };
        let trip_scalar = |kind| {
            let d = trip_scalar_distribution(self.dataset, kind, &bins());
            (MeasureValue::Histogram(d.histogram), Some(d.values))
        };
        let user_scalar = |kind| {
            let d = user_scalar_distribution(self.dataset, &self.endpoints, kind, &bins());
            (MeasureValue::Histogram(d.histogram), Some(d.values))
        };
        let (value, summary_values) = match measure {
            MeasureId::Trips => (MeasureValue::Count(self.dataset.len() as u64), None),
            MeasureId::Users => (MeasureValue::Count(self.dataset.user_count() as u64), None),
            MeasureId::Locations => (MeasureValue::Count(self.overview().locations), None),
            MeasureId::TripsOverTime => {
                let (first, last) = options
                    .time_range
                    .or_else(|| date_range(self.dataset))
                    .ok_or(Error::EmptyDataset)?;
                (
                    MeasureValue::TripsOverTime(trips_over_time(self.dataset, first, last)),
                    Some(origin_seconds(self.dataset)),
                )
            }
            MeasureId::TripsPerWeekday => (
                MeasureValue::Histogram(temporal_profiles(self.dataset).per_weekday),
                None,
            ),
            MeasureId::TripsPerHour => (
                MeasureValue::Histogram(temporal_profiles(self.dataset).per_hour),
                None,
            ),
            MeasureId::VisitsPerLocation => (MeasureValue::Spatial(self.visits_per_location()), None),
            MeasureId::VisitsPerDestinationAndTime => (
                MeasureValue::DestinationTime(visits_per_destination_time(
                    self.dataset,
                    &self.endpoints,
                    self.tessellation.len(),
                    &options.windows,
                )?),
                None,
            ),
            MeasureId::OdFlows => (MeasureValue::OdMatrix(self.od_flows()), None),
            MeasureId::TravelTime => trip_scalar(TripScalar::TravelTime),
            MeasureId::JumpLength => trip_scalar(TripScalar::JumpLength),
            MeasureId::TimeBetweenTrips => trip_scalar(TripScalar::TimeBetweenTrips),
            MeasureId::TripsPerUser => user_scalar(UserScalar::TripsPerUser),
            MeasureId::LocationsPerUser => user_scalar(UserScalar::LocationsPerUser),
            MeasureId::RadiusOfGyration => user_scalar(UserScalar::RadiusOfGyration),
            MeasureId::MobilityEntropy => user_scalar(UserScalar::MobilityEntropy {
                normalized: options.entropy_normalized,
            }),
        };
        Ok(ExactMeasure {
            value,
            summary_values,
        })
    }
}
