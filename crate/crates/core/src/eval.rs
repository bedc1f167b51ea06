//! Utility loss of private releases against exact full-dataset values, and
//! the sweep over contribution bounds and budgets.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounding::{bound_contribution, ContributionBound};
use crate::catalog::SensitivityBasis;
use crate::emd::transport_cost;
use crate::error::{Error, Result};
use crate::measures::{MeasureContext, UserScalar};
use crate::mechanisms::{
    dp_five_number_summary, exact_five_number_summary, noisy_counts, FiveNumberSummary, PrivacyBudget,
    PrivacyMode,
};
use crate::model::Dataset;
use crate::streams;
use crate::tessellation::Tessellation;

/// Relative deviation of the private total from the exact one.
pub fn trip_count_error(exact: u64, private: f64) -> Result<f64> {
    if exact == 0 {
        return Err(Error::Undefined("exact trip count is zero".into()));
    }
    Ok((exact as f64 - private).abs() / exact as f64)
}

/// Clamps negatives to zero and rescales to unit mass. `None` when nothing
/// positive is left.
fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let clamped: Vec<f64> = v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    let total: f64 = clamped.iter().sum();
    (total > 0.0 && total.is_finite()).then(|| clamped.iter().map(|x| x / total).collect())
}

/// Earth mover's distance in meters between two visit distributions over
/// the same tiles, after clamping and normalizing both to unit mass.
pub fn location_error(exact: &[f64], private: &[f64], tessellation: &Tessellation) -> Result<f64> {
    let n = tessellation.len();
    if exact.len() != n || private.len() != n {
        return Err(Error::Config("distribution length differs from tile count".into()));
    }
    let centroids: Vec<(f64, f64)> = tessellation.tiles().iter().map(|t| t.centroid).collect();
    location_error_with(exact, private, |i, j| {
        crate::tessellation::haversine_distance(centroids[i], centroids[j])
    })
}

/// [`location_error`] with an arbitrary ground distance.
pub fn location_error_with(exact: &[f64], private: &[f64], distance: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let a = normalized(exact).ok_or_else(|| Error::Undefined("exact distribution has no mass".into()))?;
    let b = normalized(private).ok_or_else(|| Error::Undefined("private distribution has no mass".into()))?;
    Ok(transport_cost(&a, &b, distance).max(0.0))
}

/// Symmetric mean absolute percentage error over the combined support of
/// two flow matrices, each normalized to unit sum after clamping.
///
/// A matrix with no positive mass stays all-zero, so every cell of the
/// other's support contributes the maximum term.
pub fn od_flow_error(exact: &[f64], private: &[f64]) -> Result<f64> {
    if exact.len() != private.len() {
        return Err(Error::Config("flow matrices differ in size".into()));
    }
    let zeros = || vec![0.0; exact.len()];
    let a = normalized(exact).unwrap_or_else(zeros);
    let b = normalized(private).unwrap_or_else(zeros);
    let mut n = 0usize;
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(&b) {
        let d = x + y;
        if d > 0.0 {
            n += 1;
            sum += (x - y).abs() / d;
        }
    }
    if n == 0 {
        return Err(Error::Undefined("combined support of the flow matrices is empty".into()));
    }
    Ok((2.0 * sum / n as f64).min(2.0))
}

/// SMAPE over the five summary entries; entries that are both zero add
/// nothing.
pub fn radius_of_gyration_error(exact: &FiveNumberSummary, private: &FiveNumberSummary) -> f64 {
    let sum: f64 = exact
        .to_array()
        .iter()
        .zip(private.to_array())
        .map(|(&a, b)| {
            let d = a.abs() + b.abs();
            if d > 0.0 {
                (a - b).abs() / d
            } else {
                0.0
            }
        })
        .sum();
    (2.0 * sum / 5.0).min(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ErrorMeasure {
    TripCountError,
    LocationError,
    ODFlowError,
    RadiusOfGyrationError,
}

impl ErrorMeasure {
    pub const ALL: [ErrorMeasure; 4] = [
        ErrorMeasure::TripCountError,
        ErrorMeasure::LocationError,
        ErrorMeasure::ODFlowError,
        ErrorMeasure::RadiusOfGyrationError,
    ];
}

impl fmt::Display for ErrorMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A budget in the sweep: a concrete epsilon or the noise-free baseline.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum EpsilonSetting {
    Epsilon(f64),
    WithoutDp,
}

impl fmt::Display for EpsilonSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSetting::Epsilon(e) => write!(f, "{e}"),
            EpsilonSetting::WithoutDp => f.write_str("withoutDp"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub measure: ErrorMeasure,
    pub m: u32,
    pub epsilon: EpsilonSetting,
    pub run_index: u32,
    /// NaN when the error is undefined for this run.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub measure: ErrorMeasure,
    pub m: u32,
    pub epsilon: EpsilonSetting,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_dev: f64,
    /// Runs with a defined error value.
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub m_candidates: Vec<u32>,
    pub epsilons: Vec<f64>,
    pub include_without_dp: bool,
    pub repetitions: u32,
    pub seed: u64,
    pub privacy_mode: PrivacyMode,
}

impl ExperimentConfig {
    pub fn settings(&self) -> Vec<EpsilonSetting> {
        let mut s: Vec<_> = self.epsilons.iter().map(|&e| EpsilonSetting::Epsilon(e)).collect();
        if self.include_without_dp {
            s.push(EpsilonSetting::WithoutDp);
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.m_candidates.is_empty() || self.m_candidates.contains(&0) {
            return Err(Error::Config("M candidates must be a non-empty list of positive integers".into()));
        }
        if self.settings().is_empty() {
            return Err(Error::Config("the epsilon grid is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::Config(format!("epsilon must be positive, got {e}")));
        }
        if self.privacy_mode == PrivacyMode::WithoutDp {
            return Err(Error::Config("use include_without_dp for the noise-free baseline".into()));
        }
        Ok(())
    }

    pub fn total_runs(&self) -> usize {
        self.m_candidates.len() * self.settings().len() * self.repetitions as usize
    }
}

pub struct ExperimentResult {
    pub records: Vec<ErrorRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

struct Reference {
    trips: u64,
    visits: Vec<f64>,
    flows: Vec<f64>,
    rog: Option<FiveNumberSummary>,
}

/// Runs every `(M, epsilon, run)` cell. Each `(M, run)` pair bounds the data
/// once with its own derived seed; each cell then noises with its own
/// streams, spending the full epsilon on every measure. Errors are taken
/// against exact values of the full, unbounded dataset.
pub fn run_experiment(dataset: &Dataset, tessellation: &Tessellation, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let full = MeasureContext::new(dataset, tessellation);
    let to_f64 = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let reference = Reference {
        trips: dataset.len() as u64,
        visits: to_f64(&full.visits_per_location().counts),
        flows: to_f64(&full.od_flows().flows),
        rog: exact_five_number_summary(&full.user_values(UserScalar::RadiusOfGyration)).ok(),
    };
    let settings = config.settings();
    let jobs: Vec<(u32, u32)> = config
        .m_candidates
        .iter()
        .flat_map(|&m| (0..config.repetitions).map(move |r| (m, r)))
        .collect();
    let mut records: Vec<ErrorRecord> = jobs
        .par_iter()
        .map(|&(m, run)| run_cell(dataset, tessellation, &reference, config, &settings, m, run))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.m, setting_order(&settings, r.epsilon), r.run_index, r.measure));
    let aggregates = aggregate(&records, &settings);
    Ok(ExperimentResult { records, aggregates })
}

fn setting_order(settings: &[EpsilonSetting], s: EpsilonSetting) -> usize {
    settings.iter().position(|&x| x == s).unwrap_or(usize::MAX)
}

fn run_cell(
    dataset: &Dataset,
    tessellation: &Tessellation,
    reference: &Reference,
    config: &ExperimentConfig,
    settings: &[EpsilonSetting],
    m: u32,
    run: u32,
) -> Result<Vec<ErrorRecord>> {
    let bound = ContributionBound::new(m)?;
    let tag = format!("m={m}/run={run}");
    let bound_seed = streams::derive_seed(config.seed, &[b"evaluate/bound", tag.as_bytes()]);
    let bounded = bound_contribution(dataset, bound, bound_seed);
    let ctx = MeasureContext::new(&bounded, tessellation);
    let visits = ctx.visits_per_location();
    let od = ctx.od_flows();
    let rog_values = ctx.user_values(UserScalar::RadiusOfGyration);
    let tiles = tessellation.len();

    let mut out = Vec::with_capacity(settings.len() * 4);
    for &setting in settings {
        let budget = match setting {
            EpsilonSetting::Epsilon(e) => PrivacyBudget::new(e, config.privacy_mode)?,
            EpsilonSetting::WithoutDp => PrivacyBudget::without_dp(),
        };
        let stream = |measure: &str| {
            streams::stream(
                config.seed,
                &[b"evaluate/noise", tag.as_bytes(), setting.to_string().as_bytes(), measure.as_bytes()],
            )
        };
        let trips = noisy_counts(&[bounded.len() as u64], SensitivityBasis::PerTrip, budget, bound, &mut stream("trips"))?;
        let mut visit_counts = visits.counts.clone();
        visit_counts.push(visits.outlier_count);
        let noisy_visits = noisy_counts(&visit_counts, SensitivityBasis::PerPoint, budget, bound, &mut stream("visits_per_location"))?;
        let mut flow_counts = od.flows.clone();
        flow_counts.push(od.excluded_count);
        let noisy_flows = noisy_counts(&flow_counts, SensitivityBasis::PerTrip, budget, bound, &mut stream("od_flows"))?;

        let undefined = |r: Result<f64>| r.unwrap_or(f64::NAN);
        let rog = match (&reference.rog, rog_values.is_empty()) {
            (Some(exact), false) => {
                let private = dp_five_number_summary(&rog_values, SensitivityBasis::PerUser, budget, bound, &mut stream("radius_of_gyration"))?;
                radius_of_gyration_error(exact, &private)
            }
            _ => f64::NAN,
        };
        let values = [
            (ErrorMeasure::TripCountError, undefined(trip_count_error(reference.trips, trips.raw[0]))),
            (
                ErrorMeasure::LocationError,
                undefined(location_error(&reference.visits, &noisy_visits.raw[..tiles], tessellation)),
            ),
            (
                ErrorMeasure::ODFlowError,
                undefined(od_flow_error(&reference.flows, &noisy_flows.raw[..tiles * tiles])),
            ),
            (ErrorMeasure::RadiusOfGyrationError, rog),
        ];
        out.extend(values.into_iter().map(|(measure, value)| ErrorRecord {
            measure,
            m,
            epsilon: setting,
            run_index: run,
            value,
        }));
    }
    Ok(out)
}

fn aggregate(records: &[ErrorRecord], settings: &[EpsilonSetting]) -> Vec<AggregateRecord> {
    let mut ms: Vec<u32> = records.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut out = Vec::new();
    for &m in &ms {
        for &setting in settings {
            for measure in ErrorMeasure::ALL {
                let values: Vec<f64> = records
                    .iter()
                    .filter(|r| r.m == m && r.epsilon == setting && r.measure == measure && r.value.is_finite())
                    .map(|r| r.value)
                    .collect();
                let n = values.len();
                let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
                let std_dev = if n < 2 {
                    0.0
                } else {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                };
                out.push(AggregateRecord {
                    measure,
                    m,
                    epsilon: setting,
                    mean,
                    std_dev,
                    runs: n,
                });
            }
        }
    }
    out
}

pub fn write_errors_csv<W: Write>(records: &[ErrorRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["measure", "M", "epsilon", "run", "value"])?;
    for r in records {
        w.write_record([
            r.measure.to_string(),
            r.m.to_string(),
            r.epsilon.to_string(),
            r.run_index.to_string(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(records: &[AggregateRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["measure", "M", "epsilon", "mean", "sd", "runs"])?;
    for r in records {
        w.write_record([
            r.measure.to_string(),
            r.m.to_string(),
            r.epsilon.to_string(),
            r.mean.to_string(),
            r.std_dev.to_string(),
            r.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
