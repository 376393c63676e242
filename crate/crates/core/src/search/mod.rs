//! Metropolis-Hastings search over changepoint configurations.

mod chain;
mod objective;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chain::{
    chain_rng, is_feasible, mcmc_chain, propose, random_config, swap_move, ChainOutcome, ChainStatus, InitStrategy,
    MoveKind, Proposal, SearchOptions, TraceSample,
};
pub use objective::{Objective, Scorer};

use crate::error::{Error, Result};
use crate::model::{ChangepointConfig, FittedParams, Hyperparams, Metadata, ScoreBreakdown, SeriesData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub objective: Objective,
    pub best_config: ChangepointConfig,
    pub best_score: ScoreBreakdown,
    pub best_params: FittedParams,
    /// Every objective defined for the data, evaluated at `best_config`.
    pub comparator_scores: BTreeMap<Objective, ScoreBreakdown>,
    pub chains: Vec<ChainOutcome>,
}

impl FitResult {
    pub fn aborted_chains(&self) -> usize {
        self.chains
            .iter()
            .filter(|c| matches!(c.status, ChainStatus::Aborted { .. }))
            .count()
    }
}

/// Initial configuration of chain `index`.
pub fn initial_config(data: &SeriesData, opts: &SearchOptions, index: usize) -> ChangepointConfig {
    let empty = ChangepointConfig::empty(data.len(), data.ar_order(), data.components());
    match opts.init {
        InitStrategy::Random if index > 0 => {
            let mut rng = chain_rng(opts.seed ^ 0x9e37_79b9_7f4a_7c15, index);
            random_config(&empty, opts.cap(empty.positions()), opts.min_spacing, &mut rng)
        }
        _ => empty,
    }
}

/// Runs `opts.chains` independent chains (in parallel) and reports the
/// lowest-scoring configuration seen by any of them, with its parameter
/// estimates and the comparator scores.
pub fn fit(data: &SeriesData, metadata: &Metadata, hp: &Hyperparams, opts: &SearchOptions) -> Result<FitResult> {
    opts.validate()?;
    let scorer = Scorer::new(data, metadata, hp, opts.objective)?;
    let chains: Vec<ChainOutcome> = (0..opts.chains)
        .into_par_iter()
        .map(|i| mcmc_chain(|c| scorer.score(c), initial_config(data, opts, i), opts, i))
        .collect::<Result<_>>()?;

    let winner = chains
        .iter()
        .min_by(|a, b| a.best_score.total.total_cmp(&b.best_score.total))
        .ok_or_else(|| Error::invalid("no chains were run"))?;
    if chains.iter().all(|c| !matches!(c.status, ChainStatus::Completed)) {
        if let ChainStatus::Aborted { message, .. } = &chains[0].status {
            return Err(Error::invalid(format!("every chain aborted; first error: {message}")));
        }
    }
    let best_config = winner.best_config.clone();
    let best_score = winner.best_score;
    let best_params = scorer.params(&best_config)?;

    let mut comparator_scores = BTreeMap::new();
    for o in Objective::ALL {
        if !o.supports(data.components()) {
            continue;
        }
        if let Ok(s) = Scorer::new(data, metadata, hp, o).and_then(|s| s.score(&best_config)) {
            comparator_scores.insert(o, s);
        }
    }
    Ok(FitResult {
        objective: opts.objective,
        best_config,
        best_score,
        best_params,
        comparator_scores,
        chains,
    })
}
