//! Laplace and exponential mechanisms with sensitivity bookkeeping.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::bounding::ContributionBound;
use crate::catalog::{MeasureId, SensitivityBasis};
use crate::error::{Error, Result};
use crate::model::nearest_rank;
use crate::streams::open_unit;

/// Unit of privacy protection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum PrivacyMode {
    /// Neighbouring datasets differ in all trips of one user.
    #[default]
    #[serde(rename = "user")]
    UserLevel,
    /// Neighbouring datasets differ in one trip.
    #[serde(rename = "item")]
    ItemLevel,
    /// No noise; only contribution bounding is applied.
    #[serde(rename = "off")]
    WithoutDp,
}

impl PrivacyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyMode::UserLevel => "user",
            PrivacyMode::ItemLevel => "item",
            PrivacyMode::WithoutDp => "off",
        }
    }
}

impl fmt::Display for PrivacyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrivacyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(PrivacyMode::UserLevel),
            "item" => Ok(PrivacyMode::ItemLevel),
            "off" => Ok(PrivacyMode::WithoutDp),
            other => Err(Error::Config(format!(
                "unknown privacy mode `{other}` (expected user, item or off)"
            ))),
        }
    }
}

/// Epsilon paired with the protection mode it is spent under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    mode: PrivacyMode,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, mode: PrivacyMode) -> Result<Self> {
        if mode != PrivacyMode::WithoutDp && !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(PrivacyBudget { epsilon, mode })
    }

    pub fn without_dp() -> Self {
        PrivacyBudget {
            epsilon: 0.0,
            mode: PrivacyMode::WithoutDp,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> PrivacyMode {
        self.mode
    }

    pub fn is_private(&self) -> bool {
        self.mode != PrivacyMode::WithoutDp
    }
}

impl SensitivityBasis {
    /// L1 sensitivity under the given mode and bound. `WithoutDp` calibrates
    /// no noise and resolves to zero.
    pub fn resolve(self, mode: PrivacyMode, bound: ContributionBound) -> Result<f64> {
        match (mode, self) {
            (PrivacyMode::WithoutDp, _) => Ok(0.0),
            (_, SensitivityBasis::PerUser) => Ok(1.0),
            (PrivacyMode::ItemLevel, SensitivityBasis::PerTrip) => Ok(1.0),
            (PrivacyMode::ItemLevel, SensitivityBasis::PerPoint) => Ok(2.0),
            (PrivacyMode::UserLevel, basis) => {
                let m = bound
                    .limit()
                    .ok_or_else(|| Error::UnboundedSensitivity(format!("{basis:?}")))?
                    as f64;
                Ok(match basis {
                    SensitivityBasis::PerPoint => 2.0 * m,
                    _ => m,
                })
            }
        }
    }
}

/// Sensitivity of a measure's count release.
pub fn resolve_sensitivity(
    measure: MeasureId,
    mode: PrivacyMode,
    bound: ContributionBound,
) -> Result<f64> {
    measure
        .counts_basis()
        .resolve(mode, bound)
        .map_err(|e| match e {
            Error::UnboundedSensitivity(_) => Error::UnboundedSensitivity(measure.to_string()),
            other => other,
        })
}

/// Inverse-CDF transform of a uniform `u` in (0, 1) to a Laplace(0, `scale`)
/// variate.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let d = u - 0.5;
    -scale * d.signum() * (1.0 - 2.0 * d.abs()).ln()
}

/// One draw from Laplace(0, `scale`).
pub fn laplace_sample(scale: f64, rng: &mut impl RngCore) -> f64 {
    debug_assert!(scale > 0.0);
    laplace_from_uniform(open_unit(rng), scale)
}

/// Output of the Laplace mechanism over a vector of counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCounts {
    /// Unclamped noisy values, kept for error analysis.
    pub raw: Vec<f64>,
    /// Raw values clamped at zero and rounded, for display.
    pub display: Vec<u64>,
}

impl NoisyCounts {
    pub fn exact(counts: &[u64]) -> Self {
        NoisyCounts {
            raw: counts.iter().map(|&c| c as f64).collect(),
            display: counts.to_vec(),
        }
    }
}

pub fn display_value(raw: f64) -> u64 {
    if raw.is_nan() || raw <= 0.0 {
        0
    } else {
        raw.round() as u64
    }
}

/// Adds independent Laplace noise of scale `Δf/ε` to every entry.
///
/// `counts` must already contain every category, zeros included. Entries
/// consume the stream in order, one 64-bit word each, so entry `i` always
/// sees the `i`-th word of a given stream.
pub fn noisy_counts(
    counts: &[u64],
    basis: SensitivityBasis,
    budget: PrivacyBudget,
    bound: ContributionBound,
    rng: &mut impl RngCore,
) -> Result<NoisyCounts> {
    if !budget.is_private() {
        return Ok(NoisyCounts::exact(counts));
    }
    let scale = basis.resolve(budget.mode(), bound)? / budget.epsilon();
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 + laplace_sample(scale, rng))
        .collect();
    let display = raw.iter().map(|&r| display_value(r)).collect();
    Ok(NoisyCounts { raw, display })
}

/// Tukey's five numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumberSummary {
    pub const QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

    pub fn from_array(v: [f64; 5]) -> Self {
        FiveNumberSummary {
            min: v[0],
            q1: v[1],
            median: v[2],
            q3: v[3],
            max: v[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.min, self.q1, self.median, self.q3, self.max]
    }

    pub fn is_monotone(&self) -> bool {
        self.to_array().windows(2).all(|w| w[0] <= w[1])
    }
}

/// Exact nearest-rank five-number summary.
pub fn exact_five_number_summary(values: &[f64]) -> Result<FiveNumberSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("five-number summary"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(FiveNumberSummary::from_array(
        FiveNumberSummary::QUANTILES.map(|q| *nearest_rank(&sorted, q).expect("non-empty")),
    ))
}

/// Exponential-mechanism quantile over an ascending sequence.
///
/// Index `i` is chosen with probability proportional to
/// `exp(ε·s(i) / (2Δs))` with `s(i) = -|i - round(q·(n-1))|`, and
/// `values[i]` is returned, so the output is always an input element.
pub fn dp_quantile(
    sorted: &[f64],
    q: f64,
    sensitivity: f64,
    epsilon: f64,
    rng: &mut impl RngCore,
) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("private quantile"));
    }
    let n = sorted.len();
    let target = (q.clamp(0.0, 1.0) * (n - 1) as f64).round() as usize;
    let rate = epsilon / (2.0 * sensitivity);
    // Scores peak at zero on the target, so weights never overflow.
    let weight = |i: usize| (-rate * i.abs_diff(target) as f64).exp();
    let total: f64 = (0..n).map(weight).sum();
    let mut remaining = open_unit(rng) * total;
    for (i, v) in sorted.iter().enumerate() {
        remaining -= weight(i);
        if remaining <= 0.0 {
            return Ok(*v);
        }
    }
    Ok(sorted[n - 1])
}

/// Five independent private quantiles at ε/5 each, sorted ascending before
/// release. `WithoutDp` returns exact order statistics.
pub fn dp_five_number_summary(
    values: &[f64],
    basis: SensitivityBasis,
    budget: PrivacyBudget,
    bound: ContributionBound,
    rng: &mut impl RngCore,
) -> Result<FiveNumberSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("five-number summary"));
    }
    if !budget.is_private() {
        return exact_five_number_summary(values);
    }
    let sensitivity = basis.resolve(budget.mode(), bound)?;
    let share = budget.epsilon() / 5.0;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = [0.0; 5];
    for (slot, q) in out.iter_mut().zip(FiveNumberSummary::QUANTILES) {
        *slot = dp_quantile(&sorted, q, sensitivity, share, rng)?;
    }
    out.sort_by(f64::total_cmp);
    Ok(FiveNumberSummary::from_array(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn user(eps: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, PrivacyMode::UserLevel).unwrap()
    }

    #[test]
    fn laplace_inverse_cdf() {
        assert_eq!(laplace_from_uniform(0.5, 1.0), 0.0);
        assert_relative_eq!(laplace_from_uniform(0.75, 1.0), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(laplace_from_uniform(0.25, 2.0), -2.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream(11, &[b"laplace-moments"]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace_sample(1.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 2.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn without_dp_counts_are_exact() {
        let out = noisy_counts(
            &[3, 0, 7],
            SensitivityBasis::PerTrip,
            PrivacyBudget::without_dp(),
            ContributionBound::Unbounded,
            &mut stream(1, &[]),
        )
        .unwrap();
        assert_eq!(out.raw, vec![3.0, 0.0, 7.0]);
        assert_eq!(out.display, vec![3, 0, 7]);
    }

    #[test]
    fn trip_sensitivity_scales_noise_with_bound() {
        // Same stream, scale M/ε = 10 versus 1: noise differs exactly tenfold.
        let counts = [100u64; 50];
        let m10 = noisy_counts(&counts, SensitivityBasis::PerTrip, user(1.0), ContributionBound::Bounded(10), &mut stream(3, &[b"x"])).unwrap();
        let item = noisy_counts(&counts, SensitivityBasis::PerTrip, PrivacyBudget::new(1.0, PrivacyMode::ItemLevel).unwrap(), ContributionBound::Unbounded, &mut stream(3, &[b"x"])).unwrap();
        for (a, b) in m10.raw.iter().zip(&item.raw) {
            assert_relative_eq!(a - 100.0, 10.0 * (b - 100.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn unbounded_trip_sensitivity_is_an_error() {
        let err = noisy_counts(&[1], SensitivityBasis::PerTrip, user(1.0), ContributionBound::Unbounded, &mut stream(1, &[])).unwrap_err();
        assert!(matches!(err, Error::UnboundedSensitivity(_)));
        // Per-user counts do not need a bound.
        assert!(noisy_counts(&[1], SensitivityBasis::PerUser, user(1.0), ContributionBound::Unbounded, &mut stream(1, &[])).is_ok());
    }

    #[test]
    fn display_clamps_and_rounds() {
        assert_eq!(display_value(-2.4), 0);
        assert_eq!(display_value(2.5), 3);
        assert_eq!(display_value(7.49), 7);
    }

    #[test]
    fn sensitivity_table() {
        let m4 = ContributionBound::Bounded(4);
        assert_eq!(resolve_sensitivity(MeasureId::VisitsPerLocation, PrivacyMode::UserLevel, m4).unwrap(), 8.0);
        assert_eq!(resolve_sensitivity(MeasureId::Users, PrivacyMode::UserLevel, ContributionBound::Unbounded).unwrap(), 1.0);
        assert_eq!(resolve_sensitivity(MeasureId::Users, PrivacyMode::UserLevel, m4).unwrap(), 1.0);
        assert_eq!(resolve_sensitivity(MeasureId::OdFlows, PrivacyMode::ItemLevel, m4).unwrap(), 1.0);
        assert_eq!(resolve_sensitivity(MeasureId::OdFlows, PrivacyMode::UserLevel, m4).unwrap(), 4.0);
        assert_eq!(resolve_sensitivity(MeasureId::Locations, PrivacyMode::ItemLevel, m4).unwrap(), 2.0);
        assert!(matches!(
            resolve_sensitivity(MeasureId::OdFlows, PrivacyMode::UserLevel, ContributionBound::Unbounded),
            Err(Error::UnboundedSensitivity(ref m)) if m == "od_flows"
        ));
        let expected = [
            ("trips", 4.0), ("users", 1.0), ("locations", 8.0), ("trips_over_time", 4.0),
            ("trips_per_weekday", 4.0), ("trips_per_hour", 4.0), ("visits_per_location", 8.0),
            ("visits_per_destination_and_time", 4.0), ("od_flows", 4.0), ("travel_time", 4.0),
            ("jump_length", 4.0), ("trips_per_user", 1.0), ("radius_of_gyration", 1.0),
            ("locations_per_user", 1.0), ("mobility_entropy", 1.0), ("time_between_trips", 4.0),
        ];
        for (id, s) in expected {
            let m: MeasureId = id.parse().unwrap();
            assert_eq!(resolve_sensitivity(m, PrivacyMode::UserLevel, m4).unwrap(), s, "{id}");
            if let Some(basis) = m.summary_basis() {
                assert_eq!(basis.resolve(PrivacyMode::UserLevel, m4).unwrap(), s, "{id} summary");
            }
        }
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, PrivacyMode::UserLevel).is_err());
        assert!(PrivacyBudget::new(-1.0, PrivacyMode::ItemLevel).is_err());
        assert!(PrivacyBudget::new(f64::NAN, PrivacyMode::ItemLevel).is_err());
        assert!(PrivacyBudget::new(0.0, PrivacyMode::WithoutDp).is_ok());
        assert_eq!("item".parse::<PrivacyMode>().unwrap(), PrivacyMode::ItemLevel);
        assert!("none".parse::<PrivacyMode>().is_err());
    }

    fn frequencies(values: &[f64], q: f64, eps: f64, draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, &[b"quantile-frequencies"]);
        let mut hits = vec![0usize; values.len()];
        for _ in 0..draws {
            let v = dp_quantile(values, q, 1.0, eps, &mut rng).unwrap();
            hits[values.iter().position(|&x| x == v).unwrap()] += 1;
        }
        hits.iter().map(|&h| h as f64 / draws as f64).collect()
    }

    #[test]
    fn quantile_with_large_epsilon_is_exact() {
        let f = frequencies(&[1.0, 2.0, 3.0], 0.5, 1e6, 1_000, 1);
        assert_eq!(f, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn quantile_with_tiny_epsilon_is_uniform() {
        let f = frequencies(&[1.0, 2.0, 3.0], 0.5, 1e-12, 60_000, 2);
        for p in f {
            assert!((p - 1.0 / 3.0).abs() < 0.01, "{p}");
        }
    }

    #[test]
    fn quantile_matches_enumerated_weights() {
        // Brute-force weights exp(ε·s/2Δ) with s = (-1, 0, -1), ε = 2, Δ = 1.
        let w = [(-1.0f64).exp(), 1.0, (-1.0f64).exp()];
        let total: f64 = w.iter().sum();
        let expected: Vec<f64> = w.iter().map(|x| x / total).collect();
        assert_relative_eq!(expected[0], 0.2119, epsilon = 1e-4);
        assert_relative_eq!(expected[1], 0.5761, epsilon = 1e-4);
        let f = frequencies(&[1.0, 2.0, 3.0], 0.5, 2.0, 100_000, 3);
        for (p, e) in f.iter().zip(&expected) {
            assert!((p - e).abs() <= 0.01, "{p} vs {e}");
        }
    }

    #[test]
    fn empty_quantile_input() {
        assert!(dp_quantile(&[], 0.5, 1.0, 1.0, &mut stream(1, &[])).is_err());
        assert!(dp_five_number_summary(&[], SensitivityBasis::PerUser, user(1.0), ContributionBound::Unbounded, &mut stream(1, &[])).is_err());
    }

    #[test]
    fn exact_summary_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = dp_five_number_summary(&v, SensitivityBasis::PerTrip, PrivacyBudget::without_dp(), ContributionBound::Unbounded, &mut stream(1, &[])).unwrap();
        assert_eq!(s.to_array(), [1.0, 25.0, 50.0, 75.0, 100.0]);
    }

    #[test]
    fn single_value_summary() {
        for eps in [0.01, 1.0, 100.0] {
            let s = dp_five_number_summary(&[4.2], SensitivityBasis::PerUser, user(eps), ContributionBound::Unbounded, &mut stream(9, &[])).unwrap();
            assert_eq!(s.to_array(), [4.2; 5]);
        }
    }

    proptest! {
        #[test]
        fn private_summary_is_monotone_member(values in prop::collection::vec(-1e6f64..1e6, 1..60), eps in 0.001f64..50.0, seed: u64) {
            let s = dp_five_number_summary(&values, SensitivityBasis::PerUser, user(eps), ContributionBound::Unbounded, &mut stream(seed, &[])).unwrap();
            prop_assert!(s.is_monotone());
            for v in s.to_array() {
                prop_assert!(values.contains(&v));
            }
        }

        #[test]
        fn without_dp_is_identity(counts in prop::collection::vec(0u64..1_000_000, 0..40), seed: u64) {
            let out = noisy_counts(&counts, SensitivityBasis::PerPoint, PrivacyBudget::without_dp(), ContributionBound::Unbounded, &mut stream(seed, &[])).unwrap();
            prop_assert_eq!(out.display, counts);
        }
    }
}
