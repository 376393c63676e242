//! Bayesian minimum description length (BMDL) detection of mean shifts in
//! seasonal autocorrelated series, with optional metadata and a bivariate
//! extension.

pub mod bivariate;
mod error;
pub mod model;
pub mod search;
pub mod simulate;
pub(crate) mod structured;
pub mod univariate;

pub use error::{Error, Result};
pub use model::{
    classify_counts, regime_partition, season_of, ChangepointConfig, FittedParams, Hyperparams, Metadata, PriorCounts,
    ScoreBreakdown, SeriesData,
};
pub use search::{fit, FitResult, Objective, SearchOptions};
