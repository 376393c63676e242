use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{simulate_with, DetectorMode, DetectorSpec, Scenario};
use crate::error::{Error, Result};
use crate::model::{Metadata, SeriesData};
use crate::search::{fit, Objective, SearchOptions};

/// Detection statistics of one detector on one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    /// Percentage of replications flagging each true time exactly.
    pub tp_rates: Vec<f64>,
    /// Mean flag percentage over the admissible times that are not true
    /// changepoints.
    pub fp_average: f64,
    /// Flag percentage of every admissible time p+1..=N.
    pub flag_rates: Vec<f64>,
    pub m_hat_mean: f64,
    /// Sample standard deviation of m_hat.
    pub m_hat_sd: f64,
    /// Standard error of the mean of m_hat.
    pub m_hat_se: f64,
}

/// Aggregates the detected changepoint times of each replication.
pub fn detection_rates(
    detected: &[Vec<usize>],
    true_times: &[usize],
    n: usize,
    ar_order: usize,
) -> Result<RateSummary> {
    if detected.is_empty() {
        return Err(Error::invalid("no replications to aggregate"));
    }
    let reps = detected.len() as f64;
    let positions = n - ar_order;
    let mut counts = vec![0usize; positions];
    for times in detected {
        for &t in times {
            if t <= ar_order || t > n {
                return Err(Error::OutOfRange {
                    time: t,
                    min: ar_order + 1,
                    max: n,
                });
            }
            counts[t - ar_order - 1] += 1;
        }
    }
    let flag_rates: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / reps).collect();
    let rate = |t: usize| flag_rates[t - ar_order - 1];
    let tp_rates = true_times.iter().map(|&t| rate(t)).collect();
    let negatives: Vec<usize> = (ar_order + 1..=n).filter(|t| !true_times.contains(t)).collect();
    let fp_average = if negatives.is_empty() {
        0.0
    } else {
        negatives.iter().map(|&t| rate(t)).sum::<f64>() / negatives.len() as f64
    };
    let m: Vec<f64> = detected.iter().map(|d| d.len() as f64).collect();
    let mean = m.iter().sum::<f64>() / reps;
    let sd = if m.len() > 1 {
        (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(RateSummary {
        tp_rates,
        fp_average,
        flag_rates,
        m_hat_mean: mean,
        m_hat_sd: sd,
        m_hat_se: sd / reps.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub detector: String,
    pub component: String,
    pub objective: Objective,
    pub mode: DetectorMode,
    pub metadata: bool,
    /// Replications that produced a fit.
    pub replications: usize,
    /// Replications whose fit failed.
    pub failed: usize,
    pub true_times: Vec<usize>,
    #[serde(flatten)]
    pub rates: RateSummary,
}

impl DetectionRow {
    /// True-positive percentage at time `t`, if `t` is a true changepoint.
    pub fn tp_rate_at(&self, t: usize) -> Option<f64> {
        self.true_times
            .iter()
            .position(|&x| x == t)
            .map(|i| self.rates.tp_rates[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    pub scenario: String,
    pub seed: u64,
    pub replications: usize,
    pub n: usize,
    pub ar_order: usize,
    pub kappa: f64,
    pub rows: Vec<DetectionRow>,
}

const CSV_HEADER: &str =
    "detector,component,objective,mode,metadata,replications,failed,true_times,tp_rates,fp_average,m_hat_mean,m_hat_sd,m_hat_se";

impl DetectionTable {
    pub fn row(&self, detector: &str, component: &str) -> Option<&DetectionRow> {
        self.rows
            .iter()
            .find(|r| r.detector == detector && r.component == component)
    }

    /// One line per row; list-valued cells are ';'-separated and rates are
    /// percentages with two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let times: Vec<String> = r.true_times.iter().map(|t| t.to_string()).collect();
            let tps: Vec<String> = r.rates.tp_rates.iter().map(|v| format!("{v:.2}")).collect();
            let mode = match r.mode {
                DetectorMode::Univariate => "univariate",
                DetectorMode::Bivariate => "bivariate",
                DetectorMode::Truth => "truth",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}",
                r.detector,
                r.component,
                r.objective,
                mode,
                r.metadata,
                r.replications,
                r.failed,
                times.join(";"),
                tps.join(";"),
                r.rates.fp_average,
                r.rates.m_hat_mean,
                r.rates.m_hat_sd,
                r.rates.m_hat_se
            );
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of detector `detector` in replication `rep`.
pub fn derived_seed(seed: u64, rep: usize, detector: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(rep as u64)) ^ detector as u64)
}

/// Replication `rep` of the scenario's generator.
pub fn replicate(scenario: &Scenario, seed: u64, rep: usize) -> Result<SeriesData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    simulate_with(scenario, &mut rng)
}

type DetectorOutput = Result<Vec<Vec<usize>>>;

fn run_detector(
    scenario: &Scenario,
    data: &SeriesData,
    metadata: &Metadata,
    det: &DetectorSpec,
    seed: u64,
) -> DetectorOutput {
    let opts = SearchOptions {
        iterations: scenario.search.iterations,
        chains: scenario.search.chains,
        seed,
        flip_probability: scenario.search.flip_probability,
        max_changepoints: scenario.search.max_changepoints,
        min_spacing: scenario.search.min_spacing,
        objective: det.objective,
        trace_every: 0,
        ..SearchOptions::default()
    };
    let none = Metadata::none();
    let meta = if det.metadata { metadata } else { &none };
    match det.mode {
        DetectorMode::Truth => Ok(scenario.components.iter().map(|c| c.changepoints.clone()).collect()),
        DetectorMode::Univariate => {
            let series = data.component(det.component)?;
            let r = fit(&series, meta, &scenario.hyperparams, &opts)?;
            Ok(vec![r.best_config.times(0).to_vec()])
        }
        DetectorMode::Bivariate => {
            let r = fit(data, meta, &scenario.hyperparams, &opts)?;
            Ok(r.best_config.all_times().to_vec())
        }
    }
}

/// Components reported by a detector, in output order.
fn reported_components(scenario: &Scenario, det: &DetectorSpec) -> Vec<usize> {
    match det.mode {
        DetectorMode::Univariate => vec![det.component],
        _ => (0..scenario.components()).collect(),
    }
}

/// Simulates `replications` data sets (the scenario's count when `None`),
/// fits every detector to each and aggregates detection rates. Each
/// replication uses its own RNG stream and derived search seeds, so the
/// table does not depend on the number of worker threads.
pub fn run_study(scenario: &Scenario, seed: u64, replications: Option<usize>) -> Result<DetectionTable> {
    scenario.validate()?;
    let reps = replications.unwrap_or(scenario.replications);
    if reps == 0 {
        return Err(Error::invalid("a study needs at least one replication"));
    }
    if scenario.detectors.is_empty() {
        return Err(Error::invalid("the scenario lists no detectors"));
    }
    let metadata = scenario.metadata_set()?;
    let outcomes: Vec<Vec<DetectorOutput>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let data = replicate(scenario, seed, rep);
            scenario
                .detectors
                .iter()
                .enumerate()
                .map(|(i, det)| match &data {
                    Ok(d) => run_detector(scenario, d, &metadata, det, derived_seed(seed, rep, i)),
                    Err(e) => Err(e.clone()),
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for (i, det) in scenario.detectors.iter().enumerate() {
        for (slot, k) in reported_components(scenario, det).into_iter().enumerate() {
            let detected: Vec<Vec<usize>> = outcomes
                .iter()
                .filter_map(|o| o[i].as_ref().ok().map(|d| d[slot].clone()))
                .collect();
            let failed = reps - detected.len();
            let true_times = scenario.components[k].changepoints.clone();
            let rates = if detected.is_empty() {
                let err = outcomes.iter().find_map(|o| o[i].as_ref().err()).cloned();
                return Err(err.unwrap_or_else(|| Error::invalid("detector produced no fits")));
            } else {
                detection_rates(&detected, &true_times, scenario.n, scenario.ar_order)?
            };
            rows.push(DetectionRow {
                detector: det.name.clone(),
                component: scenario.components[k].name.clone(),
                objective: det.objective,
                mode: det.mode,
                metadata: det.metadata,
                replications: detected.len(),
                failed,
                true_times,
                rates,
            });
        }
    }
    Ok(DetectionTable {
        scenario: scenario.name.clone(),
        seed,
        replications: reps,
        n: scenario.n,
        ar_order: scenario.ar_order,
        kappa: scenario.kappa,
        rows,
    })
}
