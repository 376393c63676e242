//! Dense reference estimators on explicit design matrices.
//!
//! These follow the closed forms literally, solving every least-squares
//! problem by Householder QR. The scorer in [`super::score`] computes the
//! same quantities from the indicator structure; the two are checked
//! against each other in the tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{whiten, whiten_vector, DesignPair};
use crate::error::{Error, Result};
use crate::structured::CONDITION_LIMIT;

/// Least squares by QR. Returns (coefficients, residuals).
pub(crate) fn least_squares(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = z.ncols();
    if k == 0 {
        return Ok((DVector::zeros(0), y.clone()));
    }
    if z.nrows() < k {
        return Err(Error::DegenerateDesign(format!(
            "{} rows cannot identify {k} coefficients",
            z.nrows()
        )));
    }
    let qr = z.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let hi = diag.iter().cloned().fold(0.0, f64::max);
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = (hi / lo).powi(2);
    if !(cond < CONDITION_LIMIT) {
        return Err(Error::DegenerateDesign(format!(
            "design is numerically rank deficient (condition estimate {cond:.3e})"
        )));
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let beta = r
        .solve_upper_triangular(&qty.rows(0, k).into_owned())
        .ok_or_else(|| Error::DegenerateDesign("triangular solve failed".into()))?;
    let resid = y - z * &beta;
    Ok((beta, resid))
}

/// Ridge least squares penalizing only the trailing `penalized` columns
/// by `lambda`: rows [0 | sqrt(lambda) I] are appended to the design.
fn ridge_least_squares(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    penalized: usize,
    lambda: f64,
) -> Result<(DVector<f64>, f64)> {
    let (n, k) = (z.nrows(), z.ncols());
    if lambda == 0.0 || penalized == 0 {
        let (beta, resid) = least_squares(z, y)?;
        return Ok((beta, resid.norm_squared()));
    }
    let mut za = DMatrix::zeros(n + penalized, k);
    za.rows_mut(0, n).copy_from(z);
    let root = lambda.sqrt();
    for j in 0..penalized {
        za[(n + j, k - penalized + j)] = root;
    }
    let mut ya = DVector::zeros(n + penalized);
    ya.rows_mut(0, n).copy_from(y);
    let (beta, resid) = least_squares(&za, &ya)?;
    Ok((beta, resid.norm_squared()))
}

/// OLS residuals (I - P_[A|D]) X.
pub fn ols_residuals(x: &[f64], design: &DesignPair) -> Result<DVector<f64>> {
    if x.len() != design.seasonal.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "series has {} rows, design has {}",
            x.len(),
            design.seasonal.nrows()
        )));
    }
    if let Some(j) = (0..design.regime.ncols()).find(|&j| design.regime.column(j).sum() == 0.0) {
        return Err(Error::DegenerateDesign(format!("regime {} is empty", j + 2)));
    }
    let (_, resid) = least_squares(&design.joined(), &DVector::from_column_slice(x))?;
    Ok(resid)
}

/// Sample autocovariances gamma(0..=p) of a residual series, each with
/// divisor N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovEstimates {
    pub gamma: Vec<f64>,
}

impl AutocovEstimates {
    pub fn order(&self) -> usize {
        self.gamma.len() - 1
    }

    /// p x p Toeplitz matrix with entries gamma(|i-j|).
    pub fn toeplitz(&self) -> DMatrix<f64> {
        let p = self.order();
        DMatrix::from_fn(p, p, |i, j| self.gamma[i.abs_diff(j)])
    }

    /// (gamma(1), ..., gamma(p)).
    pub fn lagged(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.gamma[1..])
    }
}

pub fn sample_autocov(resid: &[f64], p: usize) -> AutocovEstimates {
    let n = resid.len();
    let gamma = (0..=p)
        .map(|h| {
            if h >= n {
                return 0.0;
            }
            resid[h..].iter().zip(resid).map(|(a, b)| a * b).sum::<f64>() / n as f64
        })
        .collect();
    AutocovEstimates { gamma }
}

/// Yule-Walker estimates: phi = Gamma_p^{-1} gamma_p and the innovation
/// variance gamma(0) - gamma_p' phi.
pub fn yule_walker(acov: &AutocovEstimates) -> Result<(Vec<f64>, f64)> {
    let g0 = acov.gamma[0];
    if !(g0 > 0.0) {
        return Err(Error::SingularMatrix(
            "residual autocovariance at lag 0 is zero (constant residuals)".into(),
        ));
    }
    let p = acov.order();
    if p == 0 {
        return Ok((Vec::new(), g0));
    }
    let chol = acov
        .toeplitz()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("autocovariance matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let lo = (0..p).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    let hi = (0..p).map(|i| l[(i, i)]).fold(0.0, f64::max);
    if !((hi / lo).powi(2) < CONDITION_LIMIT) {
        return Err(Error::SingularMatrix("autocovariance matrix is ill-conditioned".into()));
    }
    let lagged = acov.lagged();
    let phi = chol.solve(&lagged);
    let var = (g0 - lagged.dot(&phi)).max(0.0);
    Ok((phi.iter().copied().collect(), var))
}

/// The AR-filtered regression system on rows p+1..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSystem {
    pub x: DVector<f64>,
    pub seasonal: DMatrix<f64>,
    pub regime: DMatrix<f64>,
    pub phi: Vec<f64>,
}

impl WhitenedSystem {
    pub fn new(x: &[f64], design: &DesignPair, phi: &[f64]) -> Result<Self> {
        if x.len() != design.seasonal.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "series has {} rows, design has {}",
                x.len(),
                design.seasonal.nrows()
            )));
        }
        Ok(Self {
            x: whiten_vector(x, phi)?,
            seasonal: whiten(&design.seasonal, phi)?,
            regime: whiten(&design.regime, phi)?,
            phi: phi.to_vec(),
        })
    }

    pub fn rows(&self) -> usize {
        self.x.len()
    }

    fn joined(&self) -> DMatrix<f64> {
        DesignPair {
            seasonal: self.seasonal.clone(),
            regime: self.regime.clone(),
        }
        .joined()
    }
}

fn inverse_nu(nu: f64) -> f64 {
    if nu.is_infinite() {
        0.0
    } else {
        1.0 / nu
    }
}

/// s_hat = (A'BA)^{-1} A'BX, obtained as the seasonal block of the ridge
/// regression of X on [A | D] with penalty |mu|^2 / nu. `nu = inf` gives
/// plain least squares.
pub fn estimate_seasonal_means(ws: &WhitenedSystem, nu: f64) -> Result<DVector<f64>> {
    let t = ws.seasonal.ncols();
    let (beta, _) = ridge_least_squares(&ws.joined(), &ws.x, ws.regime.ncols(), inverse_nu(nu))?;
    Ok(beta.rows(0, t).into_owned())
}

/// sigma_hat^2 = (X - A s)' B (X - A s) / (N - p) with
/// B = I - D (D'D + I/nu)^{-1} D'.
pub fn estimate_noise_variance(ws: &WhitenedSystem, s_hat: &DVector<f64>, nu: f64) -> Result<f64> {
    let y = &ws.x - &ws.seasonal * s_hat;
    let (_, q) = ridge_least_squares(&ws.regime, &y, ws.regime.ncols(), inverse_nu(nu))?;
    Ok(q / ws.rows() as f64)
}

/// Conditional posterior mean mu_hat = (D'D + I/nu)^{-1} D'(X - A s).
pub fn estimate_regime_means(ws: &WhitenedSystem, s_hat: &DVector<f64>, nu: f64) -> Result<DVector<f64>> {
    let m = ws.regime.ncols();
    if m == 0 {
        return Err(Error::EmptyModel);
    }
    if nu == 0.0 {
        return Ok(DVector::zeros(m));
    }
    let y = &ws.x - &ws.seasonal * s_hat;
    let (beta, _) = ridge_least_squares(&ws.regime, &y, m, inverse_nu(nu))?;
    Ok(beta)
}
