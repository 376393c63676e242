//! Univariate scoring: design construction, estimation and code lengths.

pub mod design;
pub mod estimate;
pub mod prior;
pub mod score;

pub use design::{build_design, whiten, whiten_vector, DesignPair};
pub use estimate::{
    estimate_noise_variance, estimate_regime_means, estimate_seasonal_means, ols_residuals, sample_autocov,
    yule_walker, AutocovEstimates, WhitenedSystem,
};
pub use prior::prior_code_length;
pub use score::{
    bic_score, bmdl_score, fit_univariate, fitted_params, log_marginal_likelihood, mdl_score, UnivariateFit,
};
