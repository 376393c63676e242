//! Synthetic data generation and replication studies.

mod scenario;
mod study;

pub use scenario::{simulate_series, ComponentSpec, DetectorMode, DetectorSpec, ErrorProcess, Scenario, StudySearch};
pub use study::{derived_seed, detection_rates, replicate, run_study, DetectionRow, DetectionTable, RateSummary};
