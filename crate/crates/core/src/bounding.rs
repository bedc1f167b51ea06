//! Per-user contribution bounding by seeded sampling.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dataset_stats, Dataset};
use crate::streams;

/// Maximum number of trips retained per user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ContributionBound {
    Bounded(u32),
    #[default]
    Unbounded,
}

impl ContributionBound {
    pub fn new(max_trips_per_user: u32) -> Result<Self> {
        if max_trips_per_user == 0 {
            return Err(Error::Config("max trips per user must be at least 1".into()));
        }
        Ok(ContributionBound::Bounded(max_trips_per_user))
    }

    pub fn limit(self) -> Option<u32> {
        match self {
            ContributionBound::Bounded(m) => Some(m),
            ContributionBound::Unbounded => None,
        }
    }
}

impl fmt::Display for ContributionBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContributionBound::Bounded(m) => write!(f, "{m}"),
            ContributionBound::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl FromStr for ContributionBound {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unbounded") {
            return Ok(ContributionBound::Unbounded);
        }
        let m: u32 = s
            .parse()
            .map_err(|_| Error::Config(format!("invalid max trips per user `{s}`")))?;
        ContributionBound::new(m)
    }
}

impl Serialize for ContributionBound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ContributionBound::Bounded(m) => s.serialize_u32(*m),
            ContributionBound::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for ContributionBound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => ContributionBound::new(m).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Keeps at most `M` trips per user, drawn uniformly without replacement.
///
/// Each user samples from their own stream derived from `(seed, user_id)`,
/// so the result does not depend on the order users are visited in.
/// Retained trips keep their original relative order.
pub fn bound_contribution(dataset: &Dataset, bound: ContributionBound, seed: u64) -> Dataset {
    let Some(m) = bound.limit() else {
        return dataset.clone();
    };
    let m = m as usize;
    let users: Vec<(&str, &[usize])> = dataset.users().collect();
    let dropped: Vec<usize> = users
        .par_iter()
        .filter(|(_, idx)| idx.len() > m)
        .flat_map_iter(|(user, idx)| {
            let mut rng = streams::stream(seed, &[b"bound", user.as_bytes()]);
            let mut keep = vec![false; idx.len()];
            for k in index::sample(&mut rng, idx.len(), m) {
                keep[k] = true;
            }
            idx.iter()
                .zip(keep)
                .filter(|(_, k)| !k)
                .map(|(&i, _)| i)
                .collect::<Vec<_>>()
        })
        .collect();
    if dropped.is_empty() {
        return dataset.clone();
    }
    let mut keep = vec![true; dataset.len()];
    for i in dropped {
        keep[i] = false;
    }
    dataset.filter_indices(|i| keep[i])
}

/// Candidate values for `M`: one, the 10th/90th percentiles, the quartiles
/// and the maximum of the per-user trip counts, deduplicated and ascending.
pub fn propose_bounds(dataset: &Dataset) -> Result<Vec<u32>> {
    let dist = dataset_stats(dataset)?.trips_per_user;
    let mut candidates: Vec<u32> = [0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
        .iter()
        .map(|&p| dist.percentile(p) as u32)
        .chain(std::iter::once(1))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_timestamp, SpatioTemporalPoint, TripRecord};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn dataset(counts: &[usize]) -> Dataset {
        let t0 = parse_timestamp("2021-03-01T00:00:00").unwrap();
        let mut trips = Vec::new();
        for (u, &n) in counts.iter().enumerate() {
            for i in 0..n {
                let t = t0 + chrono::Duration::minutes((u * 1000 + i) as i64);
                let p = SpatioTemporalPoint::new(t, 10.0, 10.0).unwrap();
                trips.push(TripRecord::new(format!("{u}-{i}"), format!("user{u}"), p, p).unwrap());
            }
        }
        Dataset::from_trips(trips)
    }

    fn per_user(d: &Dataset) -> Vec<usize> {
        d.users().map(|(_, idx)| idx.len()).collect()
    }

    #[test]
    fn caps_a_heavy_user() {
        let d = dataset(&[10]);
        let b = bound_contribution(&d, ContributionBound::new(3).unwrap(), 1);
        assert_eq!(b.len(), 3);
        let ids: BTreeSet<_> = b.trips().iter().map(|t| t.trip_id.clone()).collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn unbounded_is_identity() {
        let d = dataset(&[5, 2, 9]);
        let b = bound_contribution(&d, ContributionBound::Unbounded, 1);
        assert_eq!(b.trips(), d.trips());
    }

    #[test]
    fn min_of_bound_and_count() {
        let d = dataset(&[5, 2]);
        let b = bound_contribution(&d, ContributionBound::new(2).unwrap(), 1);
        assert_eq!(b.len(), 4);
        assert_eq!(per_user(&b), vec![2, 2]);
    }

    #[test]
    fn zero_bound_is_rejected() {
        assert!(ContributionBound::new(0).is_err());
        assert_eq!("unbounded".parse::<ContributionBound>().unwrap(), ContributionBound::Unbounded);
        assert_eq!("4".parse::<ContributionBound>().unwrap(), ContributionBound::Bounded(4));
        assert!("0".parse::<ContributionBound>().is_err());
        assert!("x".parse::<ContributionBound>().is_err());
    }

    #[test]
    fn proposals_for_uniform_users() {
        assert_eq!(propose_bounds(&dataset(&[1, 1, 1, 1])).unwrap(), vec![1]);
    }

    #[test]
    fn proposals_for_skewed_users() {
        // Nearest rank over (1, 2, 4, 8, 100): p10 -> 1, Q1 -> 2, Q2 -> 4,
        // Q3 -> 8, p90 -> 100, max -> 100.
        assert_eq!(
            propose_bounds(&dataset(&[1, 2, 4, 8, 100])).unwrap(),
            vec![1, 2, 4, 8, 100]
        );
    }

    #[test]
    fn proposals_deduplicate_plateaus() {
        // Two-trip plateau covering p10 through Q3, like a one-day survey.
        let mut counts = vec![2; 80];
        counts.extend([1; 5]);
        counts.extend([3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 16, 18, 19, 20, 20]);
        let c = propose_bounds(&dataset(&counts)).unwrap();
        assert_eq!(c.first(), Some(&1));
        assert_eq!(c.last(), Some(&20));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.iter().filter(|&&m| m == 2).count(), 1);
        assert!(c.len() < 7);
    }

    proptest! {
        #[test]
        fn bounding_invariants(counts in prop::collection::vec(1usize..15, 1..12), m in 1u32..8, seed: u64) {
            let d = dataset(&counts);
            let bound = ContributionBound::new(m).unwrap();
            let b = bound_contribution(&d, bound, seed);
            let m = m as usize;
            prop_assert!(per_user(&b).iter().all(|&c| c <= m));
            prop_assert_eq!(b.len(), counts.iter().map(|&c| c.min(m)).sum::<usize>());
            // Relative order is preserved.
            let pos: Vec<usize> = b.trips().iter()
                .map(|t| d.trips().iter().position(|s| s.trip_id == t.trip_id).unwrap())
                .collect();
            prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
            // Determinism and idempotence.
            let again = bound_contribution(&d, bound, seed);
            prop_assert_eq!(again.trips(), b.trips());
            let twice = bound_contribution(&b, bound, seed.wrapping_add(1));
            prop_assert_eq!(twice.trips(), b.trips());
        }
    }
}
