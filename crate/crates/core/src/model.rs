//! Domain types shared by scoring and search: observed series,
//! changepoint configurations, metadata and hyperparameters.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed series: one or two equally long components sampled on a
/// common regular grid with `period` seasons per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesData {
    columns: Vec<Vec<f64>>,
    period: usize,
    ar_order: usize,
}

impl SeriesData {
    pub fn new(columns: Vec<Vec<f64>>, period: usize, ar_order: usize) -> Result<Self> {
        if columns.is_empty() || columns.len() > 2 {
            return Err(Error::invalid(format!(
                "series must have 1 or 2 components, got {}",
                columns.len()
            )));
        }
        if period == 0 {
            return Err(Error::invalid("period must be positive"));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "all components must have the same length".into(),
            ));
        }
        if n < 2 * period + ar_order {
            return Err(Error::invalid(format!(
                "need at least 2*period + ar_order = {} observations, got {n}",
                2 * period + ar_order
            )));
        }
        for (k, col) in columns.iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "component {k} has a missing or non-finite value at time {}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            columns,
            period,
            ar_order,
        })
    }

    pub fn univariate(values: Vec<f64>, period: usize, ar_order: usize) -> Result<Self> {
        Self::new(vec![values], period, ar_order)
    }

    pub fn bivariate(first: Vec<f64>, second: Vec<f64>, period: usize, ar_order: usize) -> Result<Self> {
        Self::new(vec![first, second], period, ar_order)
    }

    /// Number of time points N.
    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> usize {
        self.columns.len()
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn ar_order(&self) -> usize {
        self.ar_order
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// The k-th component as a univariate series.
    pub fn component(&self, k: usize) -> Result<SeriesData> {
        let col = self
            .columns
            .get(k)
            .ok_or_else(|| Error::invalid(format!("no component {k}")))?;
        Ok(Self {
            columns: vec![col.clone()],
            period: self.period,
            ar_order: self.ar_order,
        })
    }

    /// Same series with the two components exchanged.
    pub fn swapped(&self) -> SeriesData {
        let mut columns = self.columns.clone();
        columns.reverse();
        Self {
            columns,
            period: self.period,
            ar_order: self.ar_order,
        }
    }

    /// Adds `shift` to every observation of every component.
    pub fn shifted(&self, shift: f64) -> SeriesData {
        Self {
            columns: self
                .columns
                .iter()
                .map(|c| c.iter().map(|v| v + shift).collect())
                .collect(),
            period: self.period,
            ar_order: self.ar_order,
        }
    }
}

/// Season v(t) in 1..=period of the 1-based time t.
pub fn season_of(t: usize, period: usize) -> usize {
    debug_assert!(t >= 1);
    t - period * ((t - 1) / period)
}

/// A multiple changepoint configuration, stored as the sorted changepoint
/// times of each component. Times are absolute and 1-based; only
/// `ar_order + 1 ..= n` can carry a changepoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct ChangepointConfig {
    n: usize,
    ar_order: usize,
    times: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    n: usize,
    ar_order: usize,
    times: Vec<Vec<usize>>,
}

impl TryFrom<RawConfig> for ChangepointConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        ChangepointConfig::from_component_times(raw.times, raw.n, raw.ar_order)
    }
}

impl From<ChangepointConfig> for RawConfig {
    fn from(c: ChangepointConfig) -> Self {
        RawConfig {
            n: c.n,
            ar_order: c.ar_order,
            times: c.times,
        }
    }
}

impl ChangepointConfig {
    pub fn empty(n: usize, ar_order: usize, components: usize) -> Self {
        Self {
            n,
            ar_order,
            times: vec![Vec::new(); components.max(1)],
        }
    }

    /// Univariate configuration with changepoints at the given times.
    pub fn from_times(times: &[usize], n: usize, ar_order: usize) -> Result<Self> {
        Self::from_component_times(vec![times.to_vec()], n, ar_order)
    }

    /// Configuration with one changepoint list per component.
    pub fn from_component_times(times: Vec<Vec<usize>>, n: usize, ar_order: usize) -> Result<Self> {
        if times.is_empty() || times.len() > 2 {
            return Err(Error::invalid(format!(
                "a configuration needs 1 or 2 components, got {}",
                times.len()
            )));
        }
        if ar_order >= n {
            return Err(Error::invalid("ar_order must be smaller than n"));
        }
        let mut canonical = Vec::with_capacity(times.len());
        for (component, mut list) in times.into_iter().enumerate() {
            list.sort_unstable();
            for w in list.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::Duplicate { time: w[0], component });
                }
            }
            if let Some(&t) = list.iter().find(|&&t| t <= ar_order || t > n) {
                return Err(Error::OutOfRange {
                    time: t,
                    min: ar_order + 1,
                    max: n,
                });
            }
            canonical.push(list);
        }
        Ok(Self {
            n,
            ar_order,
            times: canonical,
        })
    }

    /// Builds a configuration from indicator bits over `ar_order+1..=n`,
    /// one vector per component.
    pub fn from_indicators(bits: &[Vec<bool>], n: usize, ar_order: usize) -> Result<Self> {
        let width = n
            .checked_sub(ar_order)
            .ok_or_else(|| Error::invalid("ar_order must not exceed n"))?;
        let mut times = Vec::with_capacity(bits.len());
        for b in bits {
            if b.len() != width {
                return Err(Error::DimensionMismatch(format!(
                    "indicator vector has length {}, expected {width}",
                    b.len()
                )));
            }
            times.push(
                b.iter()
                    .enumerate()
                    .filter(|(_, &on)| on)
                    .map(|(i, _)| ar_order + 1 + i)
                    .collect(),
            );
        }
        Self::from_component_times(times, n, ar_order)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ar_order(&self) -> usize {
        self.ar_order
    }

    pub fn components(&self) -> usize {
        self.times.len()
    }

    /// Number of indicator positions per component, N - p.
    pub fn positions(&self) -> usize {
        self.n - self.ar_order
    }

    /// Total number of changepoints over all components.
    pub fn m(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    pub fn m_of(&self, component: usize) -> usize {
        self.times[component].len()
    }

    pub fn times(&self, component: usize) -> &[usize] {
        &self.times[component]
    }

    pub fn all_times(&self) -> &[Vec<usize>] {
        &self.times
    }

    pub fn is_changepoint(&self, component: usize, t: usize) -> bool {
        self.times[component].binary_search(&t).is_ok()
    }

    /// Indicator vector eta over t = p+1..=N.
    pub fn indicators(&self, component: usize) -> Vec<bool> {
        let mut bits = vec![false; self.positions()];
        for &t in &self.times[component] {
            bits[t - self.ar_order - 1] = true;
        }
        bits
    }

    /// Regimes of a component as inclusive 1-based time ranges covering 1..=N.
    pub fn regime_partition(&self, component: usize) -> Vec<RangeInclusive<usize>> {
        let mut ranges = Vec::with_capacity(self.m_of(component) + 1);
        let mut start = 1;
        for &tau in &self.times[component] {
            ranges.push(start..=tau - 1);
            start = tau;
        }
        ranges.push(start..=self.n);
        ranges
    }

    /// Regime lengths N_1, ..., N_{m+1} of a component.
    pub fn regime_lengths(&self, component: usize) -> Vec<usize> {
        self.regime_partition(component)
            .into_iter()
            .map(|r| r.end() + 1 - r.start())
            .collect()
    }

    /// 0-based regime index of every time point of a component.
    pub(crate) fn regime_of_rows(&self, component: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n);
        let mut next = self.times[component].iter().peekable();
        let mut regime = 0u32;
        for t in 1..=self.n {
            while next.peek().is_some_and(|&&tau| tau <= t) {
                next.next();
                regime += 1;
            }
            out.push(regime);
        }
        out
    }

    /// Flips the indicator at (component, t); returns the new bit.
    pub(crate) fn toggle(&mut self, component: usize, t: usize) -> bool {
        let list = &mut self.times[component];
        match list.binary_search(&t) {
            Ok(i) => {
                list.remove(i);
                false
            }
            Err(i) => {
                list.insert(i, t);
                true
            }
        }
    }

    /// Same configuration with the two components exchanged.
    pub fn swapped(&self) -> ChangepointConfig {
        let mut c = self.clone();
        c.times.reverse();
        c
    }
}

/// Partition of the series into regimes, see [`ChangepointConfig::regime_partition`].
pub fn regime_partition(config: &ChangepointConfig, component: usize) -> Vec<RangeInclusive<usize>> {
    config.regime_partition(component)
}

/// Documented (metadata) times within `ar_order+1..=n`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    times: BTreeSet<usize>,
}

impl Metadata {
    pub fn new(times: impl IntoIterator<Item = usize>, n: usize, ar_order: usize) -> Result<Self> {
        let times: BTreeSet<usize> = times.into_iter().collect();
        if let Some(&t) = times.iter().find(|&&t| t <= ar_order || t > n) {
            return Err(Error::OutOfRange {
                time: t,
                min: ar_order + 1,
                max: n,
            });
        }
        Ok(Self { times })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_documented(&self, t: usize) -> bool {
        self.times.contains(&t)
    }

    pub fn times(&self) -> impl Iterator<Item = usize> + '_ {
        self.times.iter().copied()
    }

    /// N^(2), the number of documented times.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn check_range(&self, n: usize, ar_order: usize) -> Result<()> {
        match self.times.iter().find(|&&t| t <= ar_order || t > n) {
            Some(&t) => Err(Error::OutOfRange {
                time: t,
                min: ar_order + 1,
                max: n,
            }),
            None => Ok(()),
        }
    }
}

/// Changepoint counts split by documentation status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorCounts {
    /// m^(1): undocumented changepoints.
    pub m_undoc: usize,
    /// m^(2): documented changepoints.
    pub m_doc: usize,
    /// N^(1): undocumented admissible times.
    pub n_undoc: usize,
    /// N^(2): documented admissible times.
    pub n_doc: usize,
}

/// Splits the changepoints of `component` into documented and
/// undocumented ones.
pub fn classify_counts(config: &ChangepointConfig, component: usize, metadata: &Metadata) -> PriorCounts {
    let m_doc = config
        .times(component)
        .iter()
        .filter(|&&t| metadata.is_documented(t))
        .count();
    let n_doc = metadata.len();
    PriorCounts {
        m_undoc: config.m_of(component) - m_doc,
        m_doc,
        n_undoc: config.positions() - n_doc,
        n_doc,
    }
}

/// Prior hyperparameters. `b_undoc`/`b_doc` are the Beta parameters of
/// undocumented and documented times; the `alpha_*` vectors are the
/// Dirichlet parameters of the bivariate categories (1,1), (1,0), (0,1),
/// (0,0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub a: f64,
    pub b_undoc: f64,
    pub b_doc: f64,
    pub nu: f64,
    pub alpha_undoc: [f64; 4],
    pub alpha_doc: [f64; 4],
}

impl Default for Hyperparams {
    /// Monthly defaults: a = 1, b = (239, 47), nu = 5.
    fn default() -> Self {
        Self {
            a: 1.0,
            b_undoc: 239.0,
            b_doc: 47.0,
            nu: 5.0,
            alpha_undoc: [3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0, 239.0],
            alpha_doc: [3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0, 47.0],
        }
    }
}

impl Hyperparams {
    /// Objective choice a = b = 1 (uniform prior on m), flat Dirichlet.
    pub fn objective() -> Self {
        Self {
            a: 1.0,
            b_undoc: 1.0,
            b_doc: 1.0,
            alpha_undoc: [1.0; 4],
            alpha_doc: [1.0; 4],
            ..Self::default()
        }
    }

    /// a = 1, b = 199: six changes per century of monthly data.
    pub fn six_per_century() -> Self {
        Self {
            b_undoc: 199.0,
            alpha_undoc: [3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0, 199.0],
            ..Self::default()
        }
    }

    /// Prior mean changepoint rate at undocumented times, a / (a + b1).
    pub fn expected_rate_undoc(&self) -> f64 {
        self.a / (self.a + self.b_undoc)
    }

    /// Prior mean changepoint rate at documented times, a / (a + b2).
    pub fn expected_rate_doc(&self) -> f64 {
        self.a / (self.a + self.b_doc)
    }

    /// Checks positivity; with metadata in use also b1 > b2.
    pub fn validate(&self, with_metadata: bool) -> Result<()> {
        let scalars = [self.a, self.b_undoc, self.b_doc, self.nu];
        let all = scalars
            .iter()
            .chain(self.alpha_undoc.iter())
            .chain(self.alpha_doc.iter());
        for &v in all {
            if !(v > 0.0) {
                return Err(Error::invalid(format!(
                    "hyperparameters must be strictly positive, got {v}"
                )));
            }
        }
        if with_metadata && self.b_undoc <= self.b_doc {
            return Err(Error::invalid(format!(
                "metadata prior requires b_undoc > b_doc, got {} <= {}",
                self.b_undoc, self.b_doc
            )));
        }
        Ok(())
    }
}

/// Parameter estimates at a fitted configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FittedParams {
    Univariate {
        seasonal_means: Vec<f64>,
        /// mu_2..mu_{m+1}; mu_1 is fixed at zero.
        regime_means: Vec<f64>,
        ar_coeffs: Vec<f64>,
        noise_var: f64,
    },
    Bivariate {
        seasonal_means: [Vec<f64>; 2],
        regime_means: [Vec<f64>; 2],
        var_coeffs: Vec<[[f64; 2]; 2]>,
        noise_cov: [[f64; 2]; 2],
        /// Set when the noise covariance came from the fallback estimate.
        covariance_fallback: bool,
    },
}

/// Additive decomposition of a configuration's score (nats).
///
/// For BMDL the fit term is the goodness-of-fit part, the mu penalty is
/// the code length contributed by integrating out the regime means, and
/// the config penalty is the prior code length of the configuration.
/// Comparator objectives reuse the same three slots for their own
/// penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub fit_term: f64,
    pub mu_penalty: f64,
    pub config_penalty: f64,
    pub total: f64,
}

impl ScoreBreakdown {
    pub fn new(fit_term: f64, mu_penalty: f64, config_penalty: f64) -> Self {
        Self {
            fit_term,
            mu_penalty,
            config_penalty,
            total: fit_term + mu_penalty + config_penalty,
        }
    }
}
