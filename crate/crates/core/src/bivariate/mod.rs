//! Bivariate scoring: GLS residuals, VAR Yule-Walker, Dirichlet prior and
//! the bivariate BMDL.

pub mod prior;
pub mod score;
pub mod var;

pub use prior::{bivariate_prior_code_length, category, category_counts, CategoryCounts};
pub use score::{
    bivariate_bmdl_score, bivariate_fitted_params, bivariate_log_marginal_likelihood, fit_bivariate, BivariateFit,
};
pub use var::{gls_residuals, var_yule_walker, GlsResiduals, Mat2, VarEstimates};
