//! Univariate scores: BMDL and the MDL / BIC comparators.

use serde::{Deserialize, Serialize};

use super::estimate::{sample_autocov, yule_walker};
use super::prior::prior_code_length;
use crate::error::{Error, Result};
use crate::model::{ChangepointConfig, FittedParams, Hyperparams, Metadata, ScoreBreakdown, SeriesData};
use crate::structured::{self, Filter, Layout};

/// Everything the univariate pipeline estimates for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFit {
    pub ar_coeffs: Vec<f64>,
    /// gamma(0) - gamma_p' phi from the OLS residuals.
    pub yw_noise_var: f64,
    pub seasonal_means: Vec<f64>,
    pub regime_means: Vec<f64>,
    /// Profiled noise variance with divisor N - p.
    pub noise_var: f64,
    /// log |D'D + I/nu| of the whitened regime design (0 when m = 0).
    pub log_det_regime: f64,
    pub rows: usize,
}

pub(crate) struct Prepared<'a> {
    data: &'a SeriesData,
    layout: Layout,
    phi: Vec<f64>,
    yw_var: f64,
}

pub(crate) fn check_univariate(data: &SeriesData, config: &ChangepointConfig) -> Result<()> {
    if data.components() != 1 || config.components() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "univariate scoring needs one component, got data {} / config {}",
            data.components(),
            config.components()
        )));
    }
    check_shape(data, config)
}

pub(crate) fn check_shape(data: &SeriesData, config: &ChangepointConfig) -> Result<()> {
    if config.n() != data.len() || config.ar_order() != data.ar_order() {
        return Err(Error::DimensionMismatch(format!(
            "configuration is for N={}, p={} but data has N={}, p={}",
            config.n(),
            config.ar_order(),
            data.len(),
            data.ar_order()
        )));
    }
    for k in 0..config.components() {
        if config.times(k).first() == Some(&1) {
            return Err(Error::DegenerateDesign("regime 1 is empty".into()));
        }
    }
    Ok(())
}

impl<'a> Prepared<'a> {
    /// OLS residuals on [A|D], then Yule-Walker on their autocovariances.
    pub(crate) fn new(data: &'a SeriesData, config: &ChangepointConfig) -> Result<Self> {
        check_univariate(data, config)?;
        let layout = Layout::new(config, data.period());
        let ridge = vec![0.0; layout.m_total()];
        let ols = structured::solve(&layout, data.columns(), &Filter::identity(1), &[1.0], &ridge)?;
        let resid = layout.raw_residuals(data.columns(), &ols.beta).remove(0);
        let (phi, yw_var) = yule_walker(&sample_autocov(&resid, data.ar_order()))?;
        Ok(Self {
            data,
            layout,
            phi,
            yw_var,
        })
    }

    /// Ridge solve of the whitened system with penalty |mu|^2 / nu.
    pub(crate) fn solve(&self, nu: f64) -> Result<UnivariateFit> {
        let lambda = if nu.is_infinite() { 0.0 } else { 1.0 / nu };
        let ridge = vec![lambda; self.layout.m_total()];
        let taps: Vec<Vec<f64>> = self.phi.iter().map(|&v| vec![v]).collect();
        let sol = structured::solve(
            &self.layout,
            self.data.columns(),
            &Filter::whitening(1, &taps),
            &[1.0],
            &ridge,
        )?;
        let rows = self.data.len() - self.data.ar_order();
        let noise_var = sol.quad / rows as f64;
        if !(noise_var > 0.0) {
            return Err(Error::SingularMatrix("whitened residual variance is zero".into()));
        }
        let m = self.layout.m_total();
        Ok(UnivariateFit {
            ar_coeffs: self.phi.clone(),
            yw_noise_var: self.yw_var,
            seasonal_means: sol.beta[self.layout.season_range(0)].to_vec(),
            regime_means: sol.beta[..m].to_vec(),
            noise_var,
            log_det_regime: sol.logdet_regime,
            rows,
        })
    }
}

/// Runs the full univariate estimation pipeline at prior scale `nu`
/// (`f64::INFINITY` for the unpenalized fit).
pub fn fit_univariate(data: &SeriesData, config: &ChangepointConfig, nu: f64) -> Result<UnivariateFit> {
    Prepared::new(data, config)?.solve(nu)
}

fn bmdl_from_fit(
    fit: &UnivariateFit,
    config: &ChangepointConfig,
    metadata: &Metadata,
    hp: &Hyperparams,
) -> ScoreBreakdown {
    let m = config.m() as f64;
    let fit_term = fit.rows as f64 / 2.0 * fit.noise_var.ln();
    let mu_penalty = if config.m() == 0 {
        0.0
    } else {
        m / 2.0 * hp.nu.ln() + 0.5 * fit.log_det_regime
    };
    ScoreBreakdown::new(fit_term, mu_penalty, prior_code_length(config, 0, metadata, hp))
}

/// BMDL score of a univariate configuration.
pub fn bmdl_score(
    data: &SeriesData,
    config: &ChangepointConfig,
    metadata: &Metadata,
    hp: &Hyperparams,
) -> Result<ScoreBreakdown> {
    metadata.check_range(data.len(), data.ar_order())?;
    let fit = fit_univariate(data, config, hp.nu)?;
    Ok(bmdl_from_fit(&fit, config, metadata, hp))
}

/// Automatic MDL: (N-p)/2 log sigma^2_inf + 1/2 sum_{r>=2} log N_r
/// + log(m+1) + (m+1) log(N-p).
pub fn mdl_score(data: &SeriesData, config: &ChangepointConfig) -> Result<ScoreBreakdown> {
    let fit = fit_univariate(data, config, f64::INFINITY)?;
    let rows = fit.rows as f64;
    let m = config.m() as f64;
    let lengths = config.regime_lengths(0);
    let mean_penalty = 0.5 * lengths[1..].iter().map(|&l| (l as f64).ln()).sum::<f64>();
    Ok(ScoreBreakdown::new(
        rows / 2.0 * fit.noise_var.ln(),
        mean_penalty,
        (m + 1.0).ln() + (m + 1.0) * rows.ln(),
    ))
}

/// BIC: (N-p)/2 log sigma^2_inf + m log(N-p).
pub fn bic_score(data: &SeriesData, config: &ChangepointConfig) -> Result<ScoreBreakdown> {
    let fit = fit_univariate(data, config, f64::INFINITY)?;
    let rows = fit.rows as f64;
    Ok(ScoreBreakdown::new(
        rows / 2.0 * fit.noise_var.ln(),
        0.0,
        config.m() as f64 * rows.ln(),
    ))
}

/// log f(X_{p+1:N} | s_hat, sigma_hat^2, phi_hat, eta) with the regime
/// means integrated out under N(0, nu sigma^2 I), including all constants.
pub fn log_marginal_likelihood(data: &SeriesData, config: &ChangepointConfig, hp: &Hyperparams) -> Result<f64> {
    let fit = fit_univariate(data, config, hp.nu)?;
    let b = bmdl_from_fit(&fit, config, &Metadata::none(), hp);
    let rows = fit.rows as f64;
    Ok(-(b.fit_term + b.mu_penalty) - rows / 2.0 * (1.0 + (2.0 * std::f64::consts::PI).ln()))
}

/// Parameter estimates at `config`: Yule-Walker AR coefficients, the
/// closed-form seasonal means and noise variance, and the conditional
/// posterior mean of the regime shifts.
pub fn fitted_params(data: &SeriesData, config: &ChangepointConfig, hp: &Hyperparams) -> Result<FittedParams> {
    let fit = fit_univariate(data, config, hp.nu)?;
    Ok(FittedParams::Univariate {
        seasonal_means: fit.seasonal_means,
        regime_means: fit.regime_means,
        ar_coeffs: fit.ar_coeffs,
        noise_var: fit.noise_var,
    })
}
