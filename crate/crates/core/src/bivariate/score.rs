//! Bivariate BMDL score.

use serde::{Deserialize, Serialize};

use super::prior::bivariate_prior_code_length;
use super::var::{check_bivariate, from_mat, gls_with_layout, row_major, to_mat, var_yule_walker, VarEstimates};
use crate::error::{Error, Result};
use crate::model::{ChangepointConfig, FittedParams, Hyperparams, Metadata, ScoreBreakdown, SeriesData};
use crate::structured::{self, weight_root, Filter, Layout};

/// Everything the bivariate pipeline estimates for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateFit {
    pub var: VarEstimates,
    pub seasonal_means: [Vec<f64>; 2],
    pub regime_means: [Vec<f64>; 2],
    /// Minimized weighted quadratic form including the mu prior term.
    pub quad: f64,
    /// log |D'(Sigma^-1 (x) I)D + Omega^-1| (0 when m = 0).
    pub log_det_regime: f64,
    pub rows: usize,
}

/// Ridge solve of the VAR-whitened system with weight Sigma^-1 and prior
/// covariance Omega = nu diag(sigma_1^2 1, sigma_2^2 1), for given VAR
/// estimates.
pub(crate) fn solve_given(data: &SeriesData, layout: &Layout, var: VarEstimates, nu: f64) -> Result<BivariateFit> {
    let sigma = to_mat(&var.sigma);
    let inv = sigma
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("noise covariance is singular".into()))?;
    let root = weight_root(&row_major(&from_mat(&inv)), 2)?;
    let taps: Vec<Vec<f64>> = var.phi.iter().map(row_major).collect();
    let mut ridge = vec![0.0; layout.m_total()];
    for k in 0..2 {
        for r in layout.regime_range(k) {
            ridge[r] = 1.0 / (nu * var.sigma[k][k]);
        }
    }
    let sol = structured::solve(layout, data.columns(), &Filter::whitening(2, &taps), &root, &ridge)?;
    let part = |range: std::ops::Range<usize>| sol.beta[range].to_vec();
    Ok(BivariateFit {
        seasonal_means: [part(layout.season_range(0)), part(layout.season_range(1))],
        regime_means: [part(layout.regime_range(0)), part(layout.regime_range(1))],
        quad: sol.quad,
        log_det_regime: sol.logdet_regime,
        rows: data.len() - data.ar_order(),
        var,
    })
}

/// GLS residuals, VAR Yule-Walker, then the whitened weighted ridge solve.
pub fn fit_bivariate(data: &SeriesData, config: &ChangepointConfig, nu: f64) -> Result<BivariateFit> {
    check_bivariate(data, config)?;
    let layout = Layout::new(config, data.period());
    let gls = gls_with_layout(data, &layout)?;
    let var = var_yule_walker(&gls.residuals, data.ar_order())?;
    solve_given(data, &layout, var, nu)
}

pub(crate) fn breakdown_from_fit(
    fit: &BivariateFit,
    config: &ChangepointConfig,
    nu: f64,
    config_penalty: f64,
) -> ScoreBreakdown {
    let s = fit.var.sigma;
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let fit_term = fit.rows as f64 / 2.0 * det.ln() + 0.5 * fit.quad;
    let mu_penalty = if config.m() == 0 {
        0.0
    } else {
        let omega: f64 = (0..2).map(|k| config.m_of(k) as f64 * (nu * s[k][k]).ln()).sum();
        0.5 * omega + 0.5 * fit.log_det_regime
    };
    ScoreBreakdown::new(fit_term, mu_penalty, config_penalty)
}

/// BMDL score of a bivariate configuration. The fit term carries
/// (N-p)/2 log|Sigma| plus half the quadratic form; the mu penalty carries
/// the log|Omega| and log-determinant terms.
pub fn bivariate_bmdl_score(
    data: &SeriesData,
    config: &ChangepointConfig,
    metadata: &Metadata,
    hp: &Hyperparams,
) -> Result<ScoreBreakdown> {
    metadata.check_range(data.len(), data.ar_order())?;
    let fit = fit_bivariate(data, config, hp.nu)?;
    Ok(breakdown_from_fit(
        &fit,
        config,
        hp.nu,
        bivariate_prior_code_length(config, metadata, hp),
    ))
}

/// Log of the conditional likelihood of X_{p+1:N} at the estimated
/// seasonal means, noise covariance and VAR coefficients, with the regime
/// means integrated out under N(0, Omega), including all constants.
pub fn bivariate_log_marginal_likelihood(
    data: &SeriesData,
    config: &ChangepointConfig,
    hp: &Hyperparams,
) -> Result<f64> {
    let fit = fit_bivariate(data, config, hp.nu)?;
    let b = breakdown_from_fit(&fit, config, hp.nu, 0.0);
    Ok(-(b.fit_term + b.mu_penalty) - fit.rows as f64 * (2.0 * std::f64::consts::PI).ln())
}

pub fn bivariate_fitted_params(
    data: &SeriesData,
    config: &ChangepointConfig,
    hp: &Hyperparams,
) -> Result<FittedParams> {
    let fit = fit_bivariate(data, config, hp.nu)?;
    Ok(FittedParams::Bivariate {
        seasonal_means: fit.seasonal_means,
        regime_means: fit.regime_means,
        var_coeffs: fit.var.phi,
        noise_cov: fit.var.sigma,
        covariance_fallback: fit.var.fallback,
    })
}
