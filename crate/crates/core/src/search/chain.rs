use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::Objective;
use crate::error::{Error, Result};
use crate::model::{ChangepointConfig, ScoreBreakdown};

/// Starting configuration of each chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Every chain starts from the empty configuration.
    #[default]
    Empty,
    /// Chain 0 starts empty, the others from random feasible configurations.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchOptions {
    pub iterations: usize,
    pub chains: usize,
    pub seed: u64,
    pub flip_probability: f64,
    /// Per-component cap on m; `None` means floor((N - p) / 20).
    pub max_changepoints: Option<usize>,
    /// Minimum regime length, first and last regime included.
    pub min_spacing: usize,
    pub objective: Objective,
    pub init: InitStrategy,
    /// Record a trace sample every this many iterations; 0 disables traces.
    pub trace_every: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            chains: 1,
            seed: 0,
            flip_probability: 0.5,
            max_changepoints: None,
            min_spacing: 1,
            objective: Objective::Bmdl,
            init: InitStrategy::Empty,
            trace_every: 1,
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.chains == 0 {
            return Err(Error::invalid("chains must be at least 1"));
        }
        if !(self.flip_probability > 0.0 && self.flip_probability < 1.0) {
            return Err(Error::invalid(format!(
                "flip_probability must lie in (0, 1), got {}",
                self.flip_probability
            )));
        }
        if self.min_spacing == 0 {
            return Err(Error::invalid("min_spacing must be at least 1"));
        }
        Ok(())
    }

    /// Per-component cap on the number of changepoints.
    pub fn cap(&self, positions: usize) -> usize {
        self.max_changepoints.unwrap_or(positions / 20)
    }
}

/// Whether `config` respects the cap and the minimum regime length.
pub fn is_feasible(config: &ChangepointConfig, cap: usize, min_spacing: usize) -> bool {
    (0..config.components()).all(|k| {
        let times = config.times(k);
        if times.len() > cap {
            return false;
        }
        let mut prev = 1;
        for &t in times {
            if t - prev < min_spacing {
                return false;
            }
            prev = t;
        }
        config.n() + 1 - prev >= min_spacing
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Flip,
    Swap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub config: ChangepointConfig,
    pub kind: MoveKind,
    /// log q(new -> old) - log q(old -> new).
    pub log_ratio: f64,
}

fn slots(config: &ChangepointConfig) -> usize {
    config.components() * config.positions()
}

fn slot_to_time(config: &ChangepointConfig, slot: usize) -> (usize, usize) {
    let l = config.positions();
    (slot / l, config.ar_order() + 1 + slot % l)
}

/// Probability that a flip is proposed from `config`.
fn flip_weight(config: &ChangepointConfig, flip_probability: f64) -> f64 {
    let m = config.m();
    if m == 0 || m == slots(config) {
        1.0
    } else {
        flip_probability
    }
}

/// Exchanges a uniformly chosen changepoint with a uniformly chosen
/// non-changepoint.
pub fn swap_move<R: Rng + ?Sized>(config: &ChangepointConfig, rng: &mut R) -> Result<ChangepointConfig> {
    let m = config.m();
    let len = slots(config);
    if m == 0 || m == len {
        return Err(Error::NoSwapPossible { m, len });
    }
    let mut pick = rng.random_range(0..m);
    let mut from = (0, 0);
    for k in 0..config.components() {
        let times = config.times(k);
        if pick < times.len() {
            from = (k, times[pick]);
            break;
        }
        pick -= times.len();
    }
    let to = loop {
        let (k, t) = slot_to_time(config, rng.random_range(0..len));
        if !config.is_changepoint(k, t) {
            break (k, t);
        }
    };
    let mut next = config.clone();
    next.toggle(from.0, from.1);
    next.toggle(to.0, to.1);
    Ok(next)
}

/// Draws a flip (with probability `flip_probability`, or always when no
/// swap exists) or a swap.
pub fn propose<R: Rng + ?Sized>(config: &ChangepointConfig, flip_probability: f64, rng: &mut R) -> Proposal {
    let w = flip_weight(config, flip_probability);
    if w < 1.0 && rng.random::<f64>() >= w {
        if let Ok(next) = swap_move(config, rng) {
            return Proposal {
                config: next,
                kind: MoveKind::Swap,
                log_ratio: 0.0,
            };
        }
    }
    let (k, t) = slot_to_time(config, rng.random_range(0..slots(config)));
    let mut next = config.clone();
    next.toggle(k, t);
    let log_ratio = flip_weight(&next, flip_probability).ln() - w.ln();
    Proposal {
        config: next,
        kind: MoveKind::Flip,
        log_ratio,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub iteration: usize,
    /// Score of the current state.
    pub score: f64,
    /// Best score evaluated so far.
    pub best: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ChainStatus {
    Completed,
    Aborted {
        iteration: usize,
        kind: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutcome {
    pub index: usize,
    pub status: ChainStatus,
    pub best_config: ChangepointConfig,
    pub best_score: ScoreBreakdown,
    pub proposed: usize,
    pub accepted: usize,
    /// Proposals outside the cap / spacing constraints (not scored).
    pub infeasible: usize,
    pub distinct_scored: usize,
    pub trace: Vec<TraceSample>,
}

/// Per-chain RNG: the fit seed with the chain index as stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Random feasible configuration with a uniformly drawn number of
/// changepoints per component.
pub fn random_config<R: Rng + ?Sized>(
    template: &ChangepointConfig,
    cap: usize,
    min_spacing: usize,
    rng: &mut R,
) -> ChangepointConfig {
    let (n, p) = (template.n(), template.ar_order());
    for _ in 0..1000 {
        let times = (0..template.components())
            .map(|_| {
                let m = rng.random_range(0..=cap);
                (0..m).map(|_| rng.random_range(p + 1..=n)).collect::<Vec<_>>()
            })
            .map(|mut v| {
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        if let Ok(c) = ChangepointConfig::from_component_times(times, n, p) {
            if is_feasible(&c, cap, min_spacing) {
                return c;
            }
        }
    }
    ChangepointConfig::empty(n, p, template.components())
}

/// Runs one Metropolis-Hastings chain on the posterior exp(-score).
///
/// The returned best configuration is the lowest-scoring configuration
/// evaluated, rejected proposals included. Scoring errors abort the chain
/// and are reported in its status.
pub fn mcmc_chain<F>(mut score: F, init: ChangepointConfig, opts: &SearchOptions, chain: usize) -> Result<ChainOutcome>
where
    F: FnMut(&ChangepointConfig) -> Result<ScoreBreakdown>,
{
    opts.validate()?;
    let cap = opts.cap(init.positions());
    if !is_feasible(&init, cap, opts.min_spacing) {
        return Err(Error::invalid("initial configuration violates the search constraints"));
    }
    let mut rng = chain_rng(opts.seed, chain);
    let mut cache: HashMap<ChangepointConfig, ScoreBreakdown> = HashMap::new();
    let current_score = score(&init)?;
    cache.insert(init.clone(), current_score);

    let mut out = ChainOutcome {
        index: chain,
        status: ChainStatus::Completed,
        best_config: init.clone(),
        best_score: current_score,
        proposed: 0,
        accepted: 0,
        infeasible: 0,
        distinct_scored: 1,
        trace: Vec::new(),
    };
    let mut current = init;
    let mut current_total = current_score.total;
    let record = |out: &mut ChainOutcome, iteration: usize, score: f64, m: usize| {
        if opts.trace_every > 0 && iteration.is_multiple_of(opts.trace_every) {
            let best = out.best_score.total;
            out.trace.push(TraceSample {
                iteration,
                score,
                best,
                m,
            });
        }
    };
    record(&mut out, 0, current_total, current.m());

    for iteration in 1..=opts.iterations {
        out.proposed += 1;
        let proposal = propose(&current, opts.flip_probability, &mut rng);
        let u: f64 = rng.random();
        if !is_feasible(&proposal.config, cap, opts.min_spacing) {
            out.infeasible += 1;
            record(&mut out, iteration, current_total, current.m());
            continue;
        }
        let s = match cache.get(&proposal.config) {
            Some(s) => *s,
            None => match score(&proposal.config) {
                Ok(s) => {
                    cache.insert(proposal.config.clone(), s);
                    s
                }
                Err(e) => {
                    out.status = ChainStatus::Aborted {
                        iteration,
                        kind: e.kind().to_string(),
                        message: e.to_string(),
                    };
                    break;
                }
            },
        };
        if s.total < out.best_score.total {
            out.best_score = s;
            out.best_config = proposal.config.clone();
        }
        let log_accept = current_total - s.total + proposal.log_ratio;
        if log_accept >= 0.0 || u < log_accept.exp() {
            current = proposal.config;
            current_total = s.total;
            out.accepted += 1;
        }
        record(&mut out, iteration, current_total, current.m());
    }
    out.distinct_scored = cache.len();
    Ok(out)
}
