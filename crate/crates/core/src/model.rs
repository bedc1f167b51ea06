//! Trips, users and datasets, plus CSV ingestion.
//!
//! A [`Dataset`] is immutable once built. Rows that fail validation during
//! [`parse_trips`] are dropped and reported in a rejection log instead of
//! aborting the whole import.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"];
const WRITE_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(WRITE_FORMAT).to_string()
}

/// A location visited at a local wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatioTemporalPoint {
    pub timestamp: NaiveDateTime,
    pub lat: f64,
    pub lng: f64,
}

impl SpatioTemporalPoint {
    pub fn new(timestamp: NaiveDateTime, lat: f64, lng: f64) -> Result<Self, RejectReason> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(RejectReason::LatitudeOutOfRange);
        }
        if !lng.is_finite() || !(-180.0..=180.0).contains(&lng) {
            return Err(RejectReason::LongitudeOutOfRange);
        }
        Ok(SpatioTemporalPoint { timestamp, lat, lng })
    }

    pub fn coord(&self) -> (f64, f64) {
        (self.lat, self.lng)
    }
}

/// One trip of one user: a start and an end point.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub trip_id: String,
    pub user_id: String,
    pub origin: SpatioTemporalPoint,
    pub destination: SpatioTemporalPoint,
}

impl TripRecord {
    pub fn new(
        trip_id: impl Into<String>,
        user_id: impl Into<String>,
        origin: SpatioTemporalPoint,
        destination: SpatioTemporalPoint,
    ) -> Result<Self, RejectReason> {
        let user_id = user_id.into();
        if user_id.is_empty() {
            return Err(RejectReason::EmptyUserId);
        }
        if destination.timestamp < origin.timestamp {
            return Err(RejectReason::DestinationBeforeOrigin);
        }
        Ok(TripRecord {
            trip_id: trip_id.into(),
            user_id,
            origin,
            destination,
        })
    }
}

/// Why a row was dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    LatitudeOutOfRange,
    LongitudeOutOfRange,
    DestinationBeforeOrigin,
    EmptyUserId,
    BadTimestamp(String),
    BadNumber(String),
    Malformed(String),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::LatitudeOutOfRange => f.write_str("latitude out of range"),
            RejectReason::LongitudeOutOfRange => f.write_str("longitude out of range"),
            RejectReason::DestinationBeforeOrigin => {
                f.write_str("destination time before origin time")
            }
            RejectReason::EmptyUserId => f.write_str("empty user id"),
            RejectReason::BadTimestamp(col) => write!(f, "unparseable timestamp in `{col}`"),
            RejectReason::BadNumber(col) => write!(f, "unparseable number in `{col}`"),
            RejectReason::Malformed(msg) => write!(f, "malformed row: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: RejectReason,
}

/// All trips, grouped by user.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    trips: Vec<TripRecord>,
    user_index: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn from_trips(trips: Vec<TripRecord>) -> Self {
        let mut user_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, trip) in trips.iter().enumerate() {
            user_index.entry(trip.user_id.clone()).or_default().push(i);
        }
        Dataset { trips, user_index }
    }

    pub fn trips(&self) -> &[TripRecord] {
        &self.trips
    }

    pub fn len(&self) -> usize {
        self.trips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trips.is_empty()
    }

    pub fn user_count(&self) -> usize {
        self.user_index.len()
    }

    /// Users in ascending id order with the indices of their trips.
    pub fn users(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.user_index
            .iter()
            .map(|(u, idx)| (u.as_str(), idx.as_slice()))
    }

    pub fn user_trips(&self, user_id: &str) -> Option<&[usize]> {
        self.user_index.get(user_id).map(Vec::as_slice)
    }

    /// Keep only the trips whose index passes `keep`, preserving order.
    pub fn filter_indices(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let trips = self
            .trips
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, t)| t.clone())
            .collect();
        Dataset::from_trips(trips)
    }

    /// Dataset with every trip of `user_id` removed.
    pub fn without_user(&self, user_id: &str) -> Dataset {
        Dataset::from_trips(
            self.trips
                .iter()
                .filter(|t| t.user_id != user_id)
                .cloned()
                .collect(),
        )
    }

    /// Writes the trips back out in the default column layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let m = ColumnMapping::default();
        w.write_record([
            m.trip_id.as_deref().unwrap_or("trip_id"),
            &m.uid,
            &m.origin_time,
            &m.origin_lat,
            &m.origin_lng,
            &m.dest_time,
            &m.dest_lat,
            &m.dest_lng,
        ])?;
        for t in &self.trips {
            w.write_record([
                t.trip_id.clone(),
                t.user_id.clone(),
                format_timestamp(&t.origin.timestamp),
                t.origin.lat.to_string(),
                t.origin.lng.to_string(),
                format_timestamp(&t.destination.timestamp),
                t.destination.lat.to_string(),
                t.destination.lng.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Names of the input columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub uid: String,
    pub origin_time: String,
    pub origin_lat: String,
    pub origin_lng: String,
    pub dest_time: String,
    pub dest_lat: String,
    pub dest_lng: String,
    /// Optional; trips are numbered by row when the column is absent.
    pub trip_id: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            uid: "uid".into(),
            origin_time: "origin_time".into(),
            origin_lat: "origin_lat".into(),
            origin_lng: "origin_lng".into(),
            dest_time: "dest_time".into(),
            dest_lat: "dest_lat".into(),
            dest_lng: "dest_lng".into(),
            trip_id: Some("trip_id".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub columns: ColumnMapping,
    pub delimiter: u8,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            columns: ColumnMapping::default(),
            delimiter: b',',
        }
    }
}

#[derive(Debug)]
pub struct ParsedTrips {
    pub dataset: Dataset,
    pub rejections: Vec<Rejection>,
}

struct ColumnPositions {
    uid: usize,
    origin_time: usize,
    origin_lat: usize,
    origin_lng: usize,
    dest_time: usize,
    dest_lat: usize,
    dest_lng: usize,
    trip_id: Option<usize>,
}

impl ColumnPositions {
    fn resolve(header: &csv::StringRecord, m: &ColumnMapping) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        Ok(ColumnPositions {
            uid: find(&m.uid)?,
            origin_time: find(&m.origin_time)?,
            origin_lat: find(&m.origin_lat)?,
            origin_lng: find(&m.origin_lng)?,
            dest_time: find(&m.dest_time)?,
            dest_lat: find(&m.dest_lat)?,
            dest_lng: find(&m.dest_lng)?,
            // trip_id is optional: a mapping naming a column the file lacks
            // falls back to row ordinals.
            trip_id: m
                .trip_id
                .as_deref()
                .and_then(|name| header.iter().position(|h| h.trim() == name)),
        })
    }
}

/// Reads delimited text with a header row into a [`Dataset`].
pub fn parse_trips<R: Read>(reader: R, options: &ParseOptions) -> Result<ParsedTrips> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let cols = ColumnPositions::resolve(&header, &options.columns)?;
    let m = &options.columns;

    let mut trips = Vec::new();
    let mut rejections = Vec::new();
    for (ordinal, record) in rdr.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejections.push(Rejection {
                    line,
                    reason: RejectReason::Malformed(e.to_string()),
                });
                continue;
            }
        };
        let line = record.position().map_or(ordinal as u64 + 2, |p| p.line());
        match parse_row(&record, &cols, m, ordinal) {
            Ok(trip) => trips.push(trip),
            Err(reason) => rejections.push(Rejection { line, reason }),
        }
    }
    if trips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(ParsedTrips {
        dataset: Dataset::from_trips(trips),
        rejections,
    })
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &ColumnPositions,
    m: &ColumnMapping,
    ordinal: usize,
) -> Result<TripRecord, RejectReason> {
    let field = |idx: usize, name: &str| -> Result<&str, RejectReason> {
        record
            .get(idx)
            .map(str::trim)
            .ok_or_else(|| RejectReason::Malformed(format!("missing field `{name}`")))
    };
    let number = |idx: usize, name: &str| -> Result<f64, RejectReason> {
        field(idx, name)?
            .parse::<f64>()
            .map_err(|_| RejectReason::BadNumber(name.to_string()))
    };
    let time = |idx: usize, name: &str| -> Result<NaiveDateTime, RejectReason> {
        parse_timestamp(field(idx, name)?).ok_or_else(|| RejectReason::BadTimestamp(name.to_string()))
    };

    let origin = SpatioTemporalPoint::new(
        time(cols.origin_time, &m.origin_time)?,
        number(cols.origin_lat, &m.origin_lat)?,
        number(cols.origin_lng, &m.origin_lng)?,
    )?;
    let destination = SpatioTemporalPoint::new(
        time(cols.dest_time, &m.dest_time)?,
        number(cols.dest_lat, &m.dest_lat)?,
        number(cols.dest_lng, &m.dest_lng)?,
    )?;
    let trip_id = match cols.trip_id {
        Some(idx) if !field(idx, "trip_id")?.is_empty() => field(idx, "trip_id")?.to_string(),
        _ => ordinal.to_string(),
    };
    TripRecord::new(trip_id, field(cols.uid, &m.uid)?, origin, destination)
}

/// Exact, non-private summary of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub trip_count: usize,
    pub user_count: usize,
    pub trips_per_user: ContributionDistribution,
}

/// Sorted per-user trip counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionDistribution {
    sorted: Vec<usize>,
}

impl ContributionDistribution {
    pub fn from_counts(mut counts: Vec<usize>) -> Self {
        counts.sort_unstable();
        ContributionDistribution { sorted: counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> usize {
        self.sorted.first().copied().unwrap_or(0)
    }

    pub fn max(&self) -> usize {
        self.sorted.last().copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.sorted.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.total() as f64 / self.sorted.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .sorted
            .iter()
            .map(|&c| (c as f64 - mean).powi(2))
            .sum::<f64>()
            / self.sorted.len() as f64;
        var.sqrt()
    }

    /// Middle value, averaging the two central counts for even sizes.
    pub fn median(&self) -> f64 {
        let n = self.sorted.len();
        match n {
            0 => 0.0,
            _ if n % 2 == 1 => self.sorted[n / 2] as f64,
            _ => (self.sorted[n / 2 - 1] + self.sorted[n / 2]) as f64 / 2.0,
        }
    }

    /// Nearest-rank percentile (`p` in `[0, 1]`): the smallest count such
    /// that at least `p` of users have that many trips or fewer.
    pub fn percentile(&self, p: f64) -> usize {
        nearest_rank(&self.sorted, p).copied().unwrap_or(0)
    }
}

/// Nearest-rank order statistic of an ascending slice; `p = 0` yields the
/// minimum.
pub fn nearest_rank<T>(sorted: &[T], p: f64) -> Option<&T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (p.clamp(0.0, 1.0) * n as f64).ceil() as usize;
    Some(&sorted[rank.clamp(1, n) - 1])
}

pub fn dataset_stats(dataset: &Dataset) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = dataset.users().map(|(_, idx)| idx.len()).collect();
    Ok(DatasetStats {
        trip_count: dataset.len(),
        user_count: dataset.user_count(),
        trips_per_user: ContributionDistribution::from_counts(counts),
    })
}
