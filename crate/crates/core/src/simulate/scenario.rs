use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{season_of, ChangepointConfig, Hyperparams, Metadata, SeriesData};
use crate::search::Objective;

/// Gaussian AR / VAR error process. `phi[j]` is the c x c coefficient
/// matrix of lag j+1 and `sigma` the innovation covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProcess {
    #[serde(default)]
    pub phi: Vec<Vec<Vec<f64>>>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub seasonal_means: Vec<f64>,
    #[serde(default)]
    pub changepoints: Vec<usize>,
    /// Means of regimes 1..=m+1 in units of the shift size Delta.
    #[serde(default = "zero_regime")]
    pub regime_means: Vec<f64>,
}

fn zero_regime() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Fit one component on its own.
    Univariate,
    /// Fit both components jointly.
    Bivariate,
    /// Report the true configuration (plumbing check).
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub name: String,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    pub mode: DetectorMode,
    /// Component analyzed in univariate mode.
    #[serde(default)]
    pub component: usize,
    /// Whether the scenario's metadata is passed to the detector.
    #[serde(default)]
    pub metadata: bool,
}

fn default_objective() -> Objective {
    Objective::Bmdl
}

/// Search settings used by every detector of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySearch {
    pub iterations: usize,
    pub chains: usize,
    pub flip_probability: f64,
    pub max_changepoints: Option<usize>,
    pub min_spacing: usize,
}

impl Default for StudySearch {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            chains: 1,
            flip_probability: 0.5,
            max_changepoints: None,
            min_spacing: 1,
        }
    }
}

/// A simulation study: generator parameters, replication count and the
/// detectors to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    #[serde(default = "default_period")]
    pub period: usize,
    /// AR order used by the detectors.
    pub ar_order: usize,
    /// Signal-to-noise ratio; Delta = kappa * noise_sd.
    pub kappa: f64,
    pub noise_sd: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub replications: usize,
    #[serde(default)]
    pub metadata: Vec<usize>,
    pub errors: ErrorProcess,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub search: StudySearch,
    #[serde(default)]
    pub hyperparams: Hyperparams,
}

fn default_period() -> usize {
    12
}

fn default_burn_in() -> usize {
    500
}

impl Scenario {
    /// Bivariate monthly scenario with VAR(3) errors, N = 600 and three
    /// shifts per component: "up, up, up" at 150/300/450 in the first and
    /// "down, up, down" at 150/300/375 in the second. Documented times are
    /// 75, 150, 250 and 550. No detectors are attached.
    pub fn monthly_var3(kappa: f64) -> Self {
        let seasonal = vec![0.0, 3.0, 10.0, 18.0, 26.0, 33.0, 36.0, 36.0, 31.0, 20.0, 8.0, 2.0];
        Self {
            name: format!("monthly_var3_k{kappa}"),
            n: 600,
            period: 12,
            ar_order: 3,
            kappa,
            noise_sd: 3.0,
            burn_in: 500,
            replications: 200,
            metadata: vec![75, 150, 250, 550],
            errors: ErrorProcess {
                phi: vec![
                    vec![vec![0.2, 0.02], vec![0.02, 0.2]],
                    vec![vec![0.1, 0.01], vec![0.01, 0.1]],
                    vec![vec![0.05, 0.005], vec![0.005, 0.05]],
                ],
                sigma: vec![vec![9.0, 2.0], vec![2.0, 9.0]],
            },
            components: vec![
                ComponentSpec {
                    name: "tmax".into(),
                    seasonal_means: seasonal.clone(),
                    changepoints: vec![150, 300, 450],
                    regime_means: vec![0.0, 1.0, 2.0, 3.0],
                },
                ComponentSpec {
                    name: "tmin".into(),
                    seasonal_means: seasonal,
                    changepoints: vec![150, 300, 375],
                    regime_means: vec![0.0, -1.0, 1.0, 0.0],
                },
            ],
            detectors: Vec::new(),
            search: StudySearch::default(),
            hyperparams: Hyperparams::default(),
        }
    }

    pub fn components(&self) -> usize {
        self.components.len()
    }

    pub fn shift_size(&self) -> f64 {
        self.kappa * self.noise_sd
    }

    pub fn true_config(&self) -> Result<ChangepointConfig> {
        ChangepointConfig::from_component_times(
            self.components.iter().map(|c| c.changepoints.clone()).collect(),
            self.n,
            self.ar_order,
        )
    }

    pub fn metadata_set(&self) -> Result<Metadata> {
        Metadata::new(self.metadata.iter().copied(), self.n, self.ar_order)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.components();
        if c == 0 || c > 2 {
            return Err(Error::invalid(format!("a scenario needs 1 or 2 components, got {c}")));
        }
        if self.period == 0 || self.n < 2 * self.period + self.ar_order {
            return Err(Error::invalid(format!(
                "n = {} is too short for period {} and AR order {}",
                self.n, self.period, self.ar_order
            )));
        }
        if !(self.kappa.is_finite() && self.noise_sd.is_finite()) {
            return Err(Error::invalid("kappa and noise_sd must be finite"));
        }
        let square = |m: &Vec<Vec<f64>>| m.len() == c && m.iter().all(|r| r.len() == c);
        if !square(&self.errors.sigma) || !self.errors.phi.iter().all(square) {
            return Err(Error::DimensionMismatch(format!(
                "error process matrices must be {c} x {c}"
            )));
        }
        for comp in &self.components {
            if comp.seasonal_means.len() != self.period {
                return Err(Error::DimensionMismatch(format!(
                    "component {} has {} seasonal means, expected {}",
                    comp.name,
                    comp.seasonal_means.len(),
                    self.period
                )));
            }
            if comp.regime_means.len() != comp.changepoints.len() + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "component {} has {} changepoints but {} regime means",
                    comp.name,
                    comp.changepoints.len(),
                    comp.regime_means.len()
                )));
            }
        }
        self.true_config()?;
        self.metadata_set()?;
        for d in &self.detectors {
            if d.name.is_empty()
                || !d
                    .name
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-')
            {
                return Err(Error::invalid(format!(
                    "detector name {:?} must be non-empty and use only letters, digits, '_' or '-'",
                    d.name
                )));
            }
            match d.mode {
                DetectorMode::Univariate if d.component >= c => {
                    return Err(Error::invalid(format!(
                        "detector {} analyzes component {} of {c}",
                        d.name, d.component
                    )))
                }
                DetectorMode::Bivariate if c != 2 => {
                    return Err(Error::invalid(format!("detector {} needs two components", d.name)))
                }
                DetectorMode::Bivariate if !d.objective.supports(2) => {
                    return Err(Error::UnsupportedObjective(format!(
                        "{} in bivariate mode",
                        d.objective
                    )))
                }
                _ => {}
            }
        }
        self.cholesky()?;
        let radius = self.spectral_radius();
        if !(radius < 1.0) {
            return Err(Error::NonStationary(radius));
        }
        Ok(())
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        let c = self.components();
        let s = DMatrix::from_fn(c, c, |i, j| self.errors.sigma[i][j]);
        if (0..c).any(|i| (0..c).any(|j| s[(i, j)] != s[(j, i)])) {
            return Err(Error::invalid("innovation covariance must be symmetric"));
        }
        s.cholesky()
            .map(|ch| ch.l())
            .ok_or_else(|| Error::invalid("innovation covariance must be positive definite"))
    }

    /// Spectral radius of the VAR companion matrix (0 without lags).
    pub fn spectral_radius(&self) -> f64 {
        let c = self.components();
        let p = self.errors.phi.len();
        if p == 0 {
            return 0.0;
        }
        let k = c * p;
        let mut companion = DMatrix::zeros(k, k);
        for (j, phi) in self.errors.phi.iter().enumerate() {
            for a in 0..c {
                for b in 0..c {
                    companion[(a, j * c + b)] = phi[a][b];
                }
            }
        }
        for i in c..k {
            companion[(i, i - c)] = 1.0;
        }
        companion
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Draws one series X_t = s_{v(t)} + mu_{r(t)} + e_t, with e from the
/// scenario's error process started at zero and run through the burn-in.
pub fn simulate_series(scenario: &Scenario, seed: u64) -> Result<SeriesData> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(scenario, &mut rng)
}

pub(crate) fn simulate_with(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<SeriesData> {
    let c = scenario.components();
    let chol = scenario.cholesky()?;
    let p = scenario.errors.phi.len();
    let total = scenario.burn_in + scenario.n;
    let mut e = vec![vec![0.0; c]; total];
    for t in 0..total {
        let z: Vec<f64> = (0..c).map(|_| rng.sample(StandardNormal)).collect();
        for a in 0..c {
            let mut v: f64 = (0..=a).map(|b| chol[(a, b)] * z[b]).sum();
            for j in 0..p.min(t) {
                let prev = &e[t - j - 1];
                v += (0..c).map(|b| scenario.errors.phi[j][a][b] * prev[b]).sum::<f64>();
            }
            e[t][a] = v;
        }
    }
    let delta = scenario.shift_size();
    let columns = scenario
        .components
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            (1..=scenario.n)
                .map(|t| {
                    let regime = comp.changepoints.iter().filter(|&&tau| tau <= t).count();
                    comp.seasonal_means[season_of(t, scenario.period) - 1]
                        + delta * comp.regime_means[regime]
                        + e[scenario.burn_in + t - 1][k]
                })
                .collect()
        })
        .collect();
    SeriesData::new(columns, scenario.period, scenario.ar_order)
}
