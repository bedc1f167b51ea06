//! Budget allocation, the noisy report and its canonical JSON form.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::bounding::{bound_contribution, ContributionBound};
use crate::catalog::{MeasureId, ReleaseId, ReleasePart};
use crate::error::{Error, Result};
use crate::measures::{
    seconds_to_datetime, BinConfig, Bins, Histogram, MeasureContext, MeasureOptions, MeasureValue,
    TimeWindow,
};
use crate::mechanisms::{
    dp_five_number_summary, noisy_counts, FiveNumberSummary, PrivacyBudget, PrivacyMode,
};
use crate::model::{format_timestamp, Dataset};
use crate::streams;
use crate::tessellation::Tessellation;

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that determines a report besides the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Total budget, split evenly over all releases.
    pub epsilon: Option<f64>,
    /// Explicit shares keyed by release id (`od_flows`, `travel_time.summary`)
    /// or by measure id, which splits evenly over that measure's releases.
    pub epsilon_overrides: BTreeMap<String, f64>,
    pub privacy_mode: PrivacyMode,
    pub max_trips_per_user: ContributionBound,
    pub seed: u64,
    pub measures: Vec<MeasureId>,
    pub bins: BTreeMap<MeasureId, BinConfig>,
    pub time_windows: Option<Vec<TimeWindow>>,
    pub entropy_normalized: bool,
    /// First and last day of the trips-over-time histogram. When absent the
    /// range comes from the released minimum and maximum origin times.
    pub time_range: Option<[NaiveDate; 2]>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            epsilon: None,
            epsilon_overrides: BTreeMap::new(),
            privacy_mode: PrivacyMode::UserLevel,
            max_trips_per_user: ContributionBound::Unbounded,
            seed: 0,
            measures: MeasureId::ALL.to_vec(),
            bins: BTreeMap::new(),
            time_windows: None,
            entropy_normalized: true,
            time_range: None,
        }
    }
}

impl ReportConfig {
    pub fn selected(&self) -> BTreeSet<MeasureId> {
        self.measures.iter().copied().collect()
    }

    pub fn releases(&self) -> Vec<ReleaseId> {
        self.selected().into_iter().flat_map(ReleaseId::of).collect()
    }

    fn measure_options(&self) -> MeasureOptions {
        let mut o = MeasureOptions {
            bins: self.bins.clone(),
            entropy_normalized: self.entropy_normalized,
            time_range: self.time_range.map(|[a, b]| (a, b)),
            ..MeasureOptions::default()
        };
        if let Some(w) = &self.time_windows {
            o.windows = w.clone();
        }
        o
    }
}

/// Parses `all` or a comma-separated list of measure ids.
pub fn parse_measure_selection(s: &str) -> Result<Vec<MeasureId>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("all") {
        return Ok(MeasureId::ALL.to_vec());
    }
    let mut out: Vec<MeasureId> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn positive_share(key: &str, eps: f64) -> Result<f64> {
    if eps.is_finite() && eps > 0.0 {
        Ok(eps)
    } else {
        Err(Error::Config(format!("epsilon for `{key}` must be positive, got {eps}")))
    }
}

/// Epsilon share of every release of the selected measures. Without DP all
/// shares are zero.
pub fn allocate_budget(config: &ReportConfig) -> Result<BTreeMap<ReleaseId, f64>> {
    let releases = config.releases();
    if config.privacy_mode == PrivacyMode::WithoutDp {
        return Ok(releases.into_iter().map(|r| (r, 0.0)).collect());
    }
    match (config.epsilon, config.epsilon_overrides.is_empty()) {
        (Some(_), false) => Err(Error::Config(
            "a total epsilon and per-measure overrides are mutually exclusive".into(),
        )),
        (None, true) => Err(Error::Config("no privacy budget given".into())),
        (Some(total), true) => {
            let total = positive_share("total", total)?;
            let share = total / releases.len().max(1) as f64;
            Ok(releases.into_iter().map(|r| (r, share)).collect())
        }
        (None, false) => {
            let selected = config.selected();
            let mut out = BTreeMap::new();
            for (key, &eps) in &config.epsilon_overrides {
                let eps = positive_share(key, eps)?;
                let targets: Vec<ReleaseId> = match key.parse::<ReleaseId>() {
                    Ok(r) => vec![r],
                    Err(_) => ReleaseId::of(key.parse::<MeasureId>()?).collect(),
                };
                if !selected.contains(&targets[0].measure) {
                    return Err(Error::Config(format!("epsilon override for unselected measure `{key}`")));
                }
                for r in &targets {
                    if out.insert(*r, eps / targets.len() as f64).is_some() {
                        return Err(Error::Config(format!("release `{r}` has two epsilon overrides")));
                    }
                }
            }
            if let Some(missing) = releases.iter().find(|r| !out.contains_key(r)) {
                return Err(Error::Config(format!("no epsilon override covers `{missing}`")));
            }
            Ok(out)
        }
    }
}

/// A noised count vector and the budget it consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsRelease {
    pub epsilon: f64,
    pub sensitivity: f64,
    /// Clamped and rounded counts in the measure's own shape.
    pub value: MeasureValue,
    /// Unclamped noisy values in release-vector order.
    pub raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRelease {
    pub epsilon: f64,
    pub sensitivity: f64,
    /// Absent when the measure produced no values at all.
    pub summary: Option<FiveNumberSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureRelease {
    pub measure: MeasureId,
    pub counts: CountsRelease,
    pub summary: Option<SummaryRelease>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub epsilon: Option<f64>,
    pub allocation: BTreeMap<ReleaseId, f64>,
    pub privacy_mode: PrivacyMode,
    pub max_trips_per_user: ContributionBound,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tile_ids: Vec<String>,
    pub measures: BTreeMap<MeasureId, MeasureRelease>,
    pub provenance: Provenance,
    pub entropy_normalized: bool,
    /// Exact input sizes for the caller's own logging. Not part of the
    /// released document.
    pub trips_read: usize,
    pub trips_retained: usize,
}

/// SHA-256 over the sorted canonical rows, hex encoded.
pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let mut rows: Vec<String> = dataset
        .trips()
        .iter()
        .map(|t| {
            format!(
                "{},{},{},{:?},{:?},{},{:?},{:?}",
                t.trip_id,
                t.user_id,
                format_timestamp(&t.origin.timestamp),
                t.origin.lat,
                t.origin.lng,
                format_timestamp(&t.destination.timestamp),
                t.destination.lat,
                t.destination.lng
            )
        })
        .collect();
    rows.sort_unstable();
    let mut h = Sha256::new();
    for r in rows {
        h.update(r.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn budget_for(mode: PrivacyMode, share: f64) -> Result<PrivacyBudget> {
    match mode {
        PrivacyMode::WithoutDp => Ok(PrivacyBudget::without_dp()),
        m => PrivacyBudget::new(share, m),
    }
}

fn release_stream(seed: u64, release: ReleaseId) -> streams::Stream {
    streams::stream(seed, &[b"release", release.to_string().as_bytes()])
}

/// Noises one measure. The trips-over-time summary is released first so
/// that its minimum and maximum can bound the histogram.
fn release_measure(
    ctx: &MeasureContext,
    measure: MeasureId,
    config: &ReportConfig,
    allocation: &BTreeMap<ReleaseId, f64>,
) -> Result<MeasureRelease> {
    let mode = config.privacy_mode;
    let bound = config.max_trips_per_user;
    let mut options = config.measure_options();
    let counts_id = ReleaseId {
        measure,
        part: ReleasePart::Counts,
    };
    let summary_id = ReleaseId {
        measure,
        part: ReleasePart::Summary,
    };

    let summary_of = |values: &[f64]| -> Result<SummaryRelease> {
        let eps = allocation[&summary_id];
        let basis = summary_id.basis();
        let summary = if values.is_empty() {
            None
        } else {
            Some(dp_five_number_summary(
                values,
                basis,
                budget_for(mode, eps)?,
                bound,
                &mut release_stream(config.seed, summary_id),
            )?)
        };
        Ok(SummaryRelease {
            epsilon: eps,
            sensitivity: basis.resolve(mode, bound)?,
            summary,
        })
    };

    let mut early_summary = None;
    if measure == MeasureId::TripsOverTime && options.time_range.is_none() {
        let s = summary_of(&crate::measures::origin_seconds(ctx.dataset))?;
        options.time_range = s.summary.and_then(|s| {
            Some((seconds_to_datetime(s.min)?.date(), seconds_to_datetime(s.max)?.date()))
        });
        early_summary = Some(s);
    }

    let exact = ctx.compute(measure, &options, bound)?;
    let eps = allocation[&counts_id];
    let basis = counts_id.basis();
    let noisy = noisy_counts(
        &exact.value.release_vector(),
        basis,
        budget_for(mode, eps)?,
        bound,
        &mut release_stream(config.seed, counts_id),
    )?;
    let counts = CountsRelease {
        epsilon: eps,
        sensitivity: basis.resolve(mode, bound)?,
        value: exact.value.with_release_vector(&noisy.display),
        raw: noisy.raw,
    };
    let summary = match (early_summary, exact.summary_values) {
        (Some(s), _) => Some(s),
        (None, Some(values)) => Some(summary_of(&values)?),
        (None, None) => None,
    };
    Ok(MeasureRelease {
        measure,
        counts,
        summary,
    })
}

/// Bounds contributions, computes every selected measure and noises it with
/// its share of the budget. Deterministic for a fixed seed.
pub fn generate_report(dataset: &Dataset, tessellation: &Tessellation, config: &ReportConfig) -> Result<Report> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let allocation = allocate_budget(config)?;
    for r in allocation.keys() {
        r.basis()
            .resolve(config.privacy_mode, config.max_trips_per_user)
            .map_err(|_| Error::UnboundedSensitivity(r.measure.to_string()))?;
    }
    if let Some(w) = &config.time_windows {
        if w.is_empty() {
            return Err(Error::Config("time windows must not be empty".into()));
        }
    }
    let bounded = bound_contribution(dataset, config.max_trips_per_user, config.seed);
    let ctx = MeasureContext::new(&bounded, tessellation);
    let selected: Vec<MeasureId> = config.selected().into_iter().collect();
    let measures = selected
        .par_iter()
        .map(|&m| release_measure(&ctx, m, config, &allocation).map(|r| (m, r)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(Report {
        tile_ids: tessellation.tile_ids().map(str::to_string).collect(),
        measures,
        provenance: Provenance {
            epsilon: match config.privacy_mode {
                PrivacyMode::WithoutDp => None,
                _ => config.epsilon,
            },
            allocation,
            privacy_mode: config.privacy_mode,
            max_trips_per_user: config.max_trips_per_user,
            seed: config.seed,
            dataset_fingerprint: dataset_fingerprint(dataset),
            tool_version: TOOL_VERSION.to_string(),
        },
        entropy_normalized: config.entropy_normalized,
        trips_read: dataset.len(),
        trips_retained: bounded.len(),
    })
}

/// Unit of the values a measure's five-number summary is expressed in.
pub fn summary_unit(measure: MeasureId, entropy_normalized: bool) -> &'static str {
    match measure {
        MeasureId::TripsOverTime => "unix_seconds",
        MeasureId::TravelTime => "minutes",
        MeasureId::JumpLength | MeasureId::RadiusOfGyration => "meters",
        MeasureId::TimeBetweenTrips => "hours",
        MeasureId::TripsPerUser => "trips",
        MeasureId::LocationsPerUser => "tiles",
        MeasureId::MobilityEntropy if entropy_normalized => "normalized",
        MeasureId::MobilityEntropy => "bits",
        _ => "",
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn histogram_json(h: &Histogram, raw: &[f64]) -> Map<String, Value> {
    let mut o = Map::new();
    match &h.bins {
        Bins::Edges(e) => o.insert("bin_edges".into(), nums(e)),
        Bins::Intervals(l) => o.insert("intervals".into(), json!(l)),
        Bins::Categories(l) => o.insert("categories".into(), json!(l)),
    };
    o.insert("counts".into(), json!(h.counts));
    o.insert("raw_counts".into(), nums(&raw[..h.counts.len()]));
    if h.bins.has_outliers() {
        o.insert("outlier_count".into(), json!(h.outlier_count));
        o.insert("raw_outlier_count".into(), num(raw[h.counts.len()]));
    }
    o
}

fn counts_json(c: &CountsRelease, tile_ids: &[String]) -> Value {
    let mut o = match &c.value {
        MeasureValue::Count(n) => {
            let mut o = Map::new();
            o.insert("kind".into(), json!("count"));
            o.insert("value".into(), json!(n));
            o.insert("raw_value".into(), num(c.raw[0]));
            o
        }
        MeasureValue::Histogram(h) => {
            let mut o = histogram_json(h, &c.raw);
            o.insert("kind".into(), json!("histogram"));
            o
        }
        MeasureValue::TripsOverTime(t) => {
            let mut o = histogram_json(&t.histogram, &c.raw);
            o.insert("kind".into(), json!("histogram"));
            o.insert("granularity".into(), serde_json::to_value(t.granularity).expect("enum"));
            o
        }
        MeasureValue::Spatial(s) => {
            let n = s.counts.len();
            let mut o = Map::new();
            o.insert("kind".into(), json!("spatial"));
            o.insert(
                "counts".into(),
                Value::Object(tile_ids.iter().cloned().zip(s.counts.iter().map(|&v| json!(v))).collect()),
            );
            o.insert(
                "raw_counts".into(),
                Value::Object(tile_ids.iter().cloned().zip(c.raw[..n].iter().map(|&v| num(v))).collect()),
            );
            o.insert("outlier_count".into(), json!(s.outlier_count));
            o.insert("raw_outlier_count".into(), num(c.raw[n]));
            o
        }
        MeasureValue::DestinationTime(d) => {
            let w = d.windows.len();
            let mut rows = Vec::with_capacity(d.counts.len());
            for (t, id) in tile_ids.iter().enumerate() {
                for (k, win) in d.windows.iter().enumerate() {
                    for (weekend, day_type) in [(false, "weekday"), (true, "weekend")] {
                        let i = (t * w + k) * 2 + usize::from(weekend);
                        rows.push(json!({
                            "tile_id": id,
                            "window": win.label,
                            "day_type": day_type,
                            "count": d.counts[i],
                            "raw_count": num(c.raw[i]),
                        }));
                    }
                }
            }
            let mut o = Map::new();
            o.insert("kind".into(), json!("destination_time"));
            o.insert("windows".into(), serde_json::to_value(&d.windows).expect("windows"));
            o.insert("cells".into(), Value::Array(rows));
            o.insert("outlier_count".into(), json!(d.outlier_count));
            o.insert("raw_outlier_count".into(), num(c.raw[d.counts.len()]));
            o
        }
        MeasureValue::OdMatrix(m) => {
            // Cells that display as zero are left out; dropping them is
            // post-processing of the released values.
            let mut flows = Vec::new();
            for (i, &count) in m.flows.iter().enumerate() {
                if count > 0 {
                    flows.push(json!({
                        "origin": tile_ids[i / m.tiles],
                        "destination": tile_ids[i % m.tiles],
                        "count": count,
                        "raw_count": num(c.raw[i]),
                    }));
                }
            }
            let mut o = Map::new();
            o.insert("kind".into(), json!("od_matrix"));
            o.insert("flows".into(), Value::Array(flows));
            o.insert("excluded_count".into(), json!(m.excluded_count));
            o.insert("raw_excluded_count".into(), num(c.raw[m.flows.len()]));
            o
        }
    };
    o.insert("epsilon".into(), num(c.epsilon));
    o.insert("sensitivity".into(), num(c.sensitivity));
    Value::Object(o)
}

fn summary_json(measure: MeasureId, s: &SummaryRelease, entropy_normalized: bool) -> Value {
    let mut o = Map::new();
    o.insert("epsilon".into(), num(s.epsilon));
    o.insert("sensitivity".into(), num(s.sensitivity));
    o.insert("unit".into(), json!(summary_unit(measure, entropy_normalized)));
    match s.summary {
        Some(f) => {
            for (k, v) in ["min", "q1", "median", "q3", "max"].iter().zip(f.to_array()) {
                o.insert((*k).into(), num(v));
            }
        }
        None => {
            o.insert("empty".into(), json!(true));
        }
    }
    Value::Object(o)
}

/// The report as a JSON value tree. Objects are key-sorted.
pub fn report_value(report: &Report) -> Value {
    let p = &report.provenance;
    let allocation: Map<String, Value> = p
        .allocation
        .iter()
        .map(|(r, &e)| (r.to_string(), num(e)))
        .collect();
    let normalized = report.entropy_normalized;
    let measures: Map<String, Value> = report
        .measures
        .values()
        .map(|m| {
            let mut o = Map::new();
            o.insert("title".into(), json!(m.measure.title()));
            o.insert("group".into(), json!(m.measure.group().title()));
            o.insert("counts".into(), counts_json(&m.counts, &report.tile_ids));
            if let Some(s) = &m.summary {
                o.insert("summary".into(), summary_json(m.measure, s, normalized));
            }
            (m.measure.to_string(), Value::Object(o))
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "provenance": {
            "epsilon": p.epsilon.map(num),
            "epsilon_allocation": allocation,
            "privacy_mode": p.privacy_mode.as_str(),
            "max_trips_per_user": p.max_trips_per_user,
            "seed": p.seed,
            "dataset_fingerprint": p.dataset_fingerprint,
            "tool_version": p.tool_version,
        },
        "measures": measures,
    })
}

/// Canonical JSON: sorted keys, shortest round-trip numbers, no
/// insignificant whitespace, trailing newline.
pub fn serialize_json(report: &Report) -> Vec<u8> {
    canonical_bytes(&report_value(report))
}

pub fn canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec(value).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// Formats a summary value for people, turning epoch seconds into
/// timestamps.
pub fn format_summary_value(measure: MeasureId, v: f64) -> String {
    if measure == MeasureId::TripsOverTime {
        if let Some(t) = seconds_to_datetime(v) {
            return t.format("%Y-%m-%d %H:%M").to_string();
        }
    }
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}
