//! The fixed set of report measures, their groups, and the unit each of
//! their releases counts (which determines its sensitivity).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// What a single user can move a release by, before `M` is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityBasis {
    /// A user changes one count by one.
    PerUser,
    /// Every retained trip of a user may count once: `M`.
    PerTrip,
    /// Both endpoints of every retained trip may count: `2M`.
    PerPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureGroup {
    Overview,
    PlaceAnalysis,
    TripAnalysis,
    UserAnalysis,
}

impl MeasureGroup {
    pub fn title(self) -> &'static str {
        match self {
            MeasureGroup::Overview => "Overview",
            MeasureGroup::PlaceAnalysis => "Place analysis",
            MeasureGroup::TripAnalysis => "Trip analysis",
            MeasureGroup::UserAnalysis => "User analysis",
        }
    }

    pub const ALL: [MeasureGroup; 4] = [
        MeasureGroup::Overview,
        MeasureGroup::PlaceAnalysis,
        MeasureGroup::TripAnalysis,
        MeasureGroup::UserAnalysis,
    ];
}

macro_rules! measures {
    ($($variant:ident => $id:literal, $title:literal, $group:ident, $counts:ident, $summary:expr;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum MeasureId {
            $($variant,)*
        }

        impl MeasureId {
            pub const ALL: &'static [MeasureId] = &[$(MeasureId::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(MeasureId::$variant => $id,)*
                }
            }

            pub fn title(self) -> &'static str {
                match self {
                    $(MeasureId::$variant => $title,)*
                }
            }

            pub fn group(self) -> MeasureGroup {
                match self {
                    $(MeasureId::$variant => MeasureGroup::$group,)*
                }
            }

            /// Basis of the count/histogram release.
            pub fn counts_basis(self) -> SensitivityBasis {
                match self {
                    $(MeasureId::$variant => SensitivityBasis::$counts,)*
                }
            }

            /// Basis of the five-number summary release, for measures that
            /// have one.
            pub fn summary_basis(self) -> Option<SensitivityBasis> {
                match self {
                    $(MeasureId::$variant => $summary,)*
                }
            }
        }

        impl FromStr for MeasureId {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($id => Ok(MeasureId::$variant),)*
                    other => Err(Error::UnknownMeasure(other.to_string())),
                }
            }
        }
    };
}

use SensitivityBasis::{PerTrip, PerUser};

measures! {
    Trips => "trips", "Trips", Overview, PerTrip, None;
    Users => "users", "Users", Overview, PerUser, None;
    Locations => "locations", "Locations", Overview, PerPoint, None;
    TripsOverTime => "trips_over_time", "Trips over time", Overview, PerTrip, Some(PerTrip);
    TripsPerWeekday => "trips_per_weekday", "Trips per weekday", Overview, PerTrip, None;
    TripsPerHour => "trips_per_hour", "Trips per hour", Overview, PerTrip, None;
    VisitsPerLocation => "visits_per_location", "Visits per location", PlaceAnalysis, PerPoint, None;
    VisitsPerDestinationAndTime => "visits_per_destination_and_time", "Visits per destination and time", PlaceAnalysis, PerTrip, None;
    OdFlows => "od_flows", "OD flows", TripAnalysis, PerTrip, None;
    TravelTime => "travel_time", "Travel time", TripAnalysis, PerTrip, Some(PerTrip);
    JumpLength => "jump_length", "Jump length", TripAnalysis, PerTrip, Some(PerTrip);
    TripsPerUser => "trips_per_user", "Trips per user", UserAnalysis, PerUser, Some(PerUser);
    RadiusOfGyration => "radius_of_gyration", "Radius of gyration", UserAnalysis, PerUser, Some(PerUser);
    LocationsPerUser => "locations_per_user", "Locations per user", UserAnalysis, PerUser, Some(PerUser);
    MobilityEntropy => "mobility_entropy", "Mobility entropy", UserAnalysis, PerUser, Some(PerUser);
    TimeBetweenTrips => "time_between_trips", "Time between trips", UserAnalysis, PerTrip, Some(PerTrip);
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for MeasureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MeasureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which part of a measure a budget share pays for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReleasePart {
    Counts,
    Summary,
}

/// One separately-noised output: a measure's counts or its summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReleaseId {
    pub measure: MeasureId,
    pub part: ReleasePart,
}

impl ReleaseId {
    /// All releases of a measure: the counts, then the summary if any.
    pub fn of(measure: MeasureId) -> impl Iterator<Item = ReleaseId> {
        let summary = measure.summary_basis().map(|_| ReleaseId {
            measure,
            part: ReleasePart::Summary,
        });
        std::iter::once(ReleaseId {
            measure,
            part: ReleasePart::Counts,
        })
        .chain(summary)
    }

    pub fn basis(self) -> SensitivityBasis {
        match self.part {
            ReleasePart::Counts => self.measure.counts_basis(),
            ReleasePart::Summary => self
                .measure
                .summary_basis()
                .expect("summary release of a measure without a summary"),
        }
    }
}

impl fmt::Display for ReleaseId {
    /// Measures with a single release are named by the measure id alone;
    /// two-release measures get `.counts` / `.summary` suffixes.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.measure.summary_basis(), self.part) {
            (None, _) => f.write_str(self.measure.as_str()),
            (Some(_), ReleasePart::Counts) => write!(f, "{}.counts", self.measure),
            (Some(_), ReleasePart::Summary) => write!(f, "{}.summary", self.measure),
        }
    }
}

impl FromStr for ReleaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (measure, part) = match s.rsplit_once('.') {
            Some((m, "counts")) => (m.parse::<MeasureId>()?, ReleasePart::Counts),
            Some((m, "summary")) => (m.parse::<MeasureId>()?, ReleasePart::Summary),
            _ => (s.parse::<MeasureId>()?, ReleasePart::Counts),
        };
        let id = ReleaseId { measure, part };
        if ReleaseId::of(measure).any(|r| r == id) && id.to_string() == s {
            Ok(id)
        } else {
            Err(Error::UnknownMeasure(s.to_string()))
        }
    }
}
