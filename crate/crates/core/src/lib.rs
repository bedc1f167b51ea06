//! Differentially private mobility reports from trip data.

pub mod bounding;
pub mod catalog;
pub mod cli;
pub mod emd;
pub mod error;
pub mod eval;
pub mod html;
pub mod measures;
pub mod mechanisms;
pub mod model;
pub mod report;
pub mod streams;
pub mod tessellation;

pub use bounding::{bound_contribution, propose_bounds, ContributionBound};
pub use catalog::{MeasureGroup, MeasureId, ReleaseId, ReleasePart, SensitivityBasis};
pub use error::{Error, Result};
pub use mechanisms::{FiveNumberSummary, NoisyCounts, PrivacyBudget, PrivacyMode};
pub use model::{ColumnMapping, Dataset, SpatioTemporalPoint, TripRecord};
pub use tessellation::{haversine_distance, Tessellation, Tile, TileAssignment};
pub use html::render_html;
pub use report::{allocate_budget, generate_report, serialize_json, Report, ReportConfig};
pub use eval::{run_experiment, ErrorMeasure, ErrorRecord, ExperimentConfig};
