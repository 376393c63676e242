//! JSON documents written by the CLI. See `docs/json-schema.md`.

use std::collections::BTreeMap;

use bmdl_core::search::ChainOutcome;
use bmdl_core::simulate::DetectionTable;
use bmdl_core::{ChangepointConfig, FittedParams, Hyperparams, Objective, ScoreBreakdown, SearchOptions};
use serde::{Deserialize, Serialize};

use crate::ingest::{StationRecord, YearMonth};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Univariate,
    Bivariate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: usize,
    pub year: i32,
    pub month: u32,
}

impl TimePoint {
    pub fn new(record: &StationRecord, t: usize) -> Self {
        let YearMonth { year, month } = record.month_of(t);
        Self { t, year, month }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesInfo {
    pub start: YearMonth,
    pub n: usize,
    pub period: usize,
    pub ar_order: usize,
    /// Column names analyzed, in component order.
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentChangepoints {
    pub component: String,
    pub times: Vec<TimePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub kind: String,
    pub mode: ModeName,
    pub objective: Objective,
    pub series: SeriesInfo,
    pub metadata: Vec<TimePoint>,
    pub hyperparams: Hyperparams,
    pub search: SearchOptions,
    pub changepoints: Vec<ComponentChangepoints>,
    pub best_config: ChangepointConfig,
    pub best_score: ScoreBreakdown,
    pub best_params: FittedParams,
    pub comparator_scores: BTreeMap<Objective, ScoreBreakdown>,
    pub chains: Vec<ChainOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub schema_version: u32,
    pub kind: String,
    pub mode: ModeName,
    pub objective: Objective,
    pub series: SeriesInfo,
    pub changepoints: Vec<ComponentChangepoints>,
    pub config: ChangepointConfig,
    pub score: ScoreBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub schema_version: u32,
    pub kind: String,
    pub table: DetectionTable,
}

pub fn changepoints(
    record: &StationRecord,
    names: &[String],
    config: &ChangepointConfig,
) -> Vec<ComponentChangepoints> {
    names
        .iter()
        .enumerate()
        .map(|(k, name)| ComponentChangepoints {
            component: name.clone(),
            times: config.times(k).iter().map(|&t| TimePoint::new(record, t)).collect(),
        })
        .collect()
}
