use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChangepointConfig, SeriesData};
use crate::structured::{self, weight_root, Filter, Layout, CONDITION_LIMIT};
use crate::univariate::{sample_autocov, yule_walker};

pub type Mat2 = [[f64; 2]; 2];

pub(crate) fn to_mat(m: &Mat2) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

pub(crate) fn from_mat(m: &Matrix2<f64>) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

pub(crate) fn row_major(m: &Mat2) -> Vec<f64> {
    vec![m[0][0], m[0][1], m[1][0], m[1][1]]
}

fn is_positive_definite(m: &Mat2) -> bool {
    m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0
}

/// GLS residuals of the bivariate mean fit together with the OLS
/// residual covariance used as the GLS weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsResiduals {
    /// One N-vector per component.
    pub residuals: [Vec<f64>; 2],
    /// Gamma^ols(0) = N^-1 sum_t e_t e_t'.
    pub ols_cov: Mat2,
}

pub(crate) fn check_bivariate(data: &SeriesData, config: &ChangepointConfig) -> Result<()> {
    if data.components() != 2 || config.components() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "bivariate scoring needs two components, got data {} / config {}",
            data.components(),
            config.components()
        )));
    }
    crate::univariate::score::check_shape(data, config)
}

fn lag_cov(e: &[Vec<f64>], h: usize) -> Mat2 {
    let n = e[0].len();
    let mut g = [[0.0; 2]; 2];
    for (a, row) in g.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = (h..n).map(|t| e[a][t] * e[b][t - h]).sum::<f64>() / n as f64;
        }
    }
    g
}

pub(crate) fn gls_with_layout(data: &SeriesData, layout: &Layout) -> Result<GlsResiduals> {
    let x = data.columns();
    let ridge = vec![0.0; layout.m_total()];
    let ols = structured::solve(layout, x, &Filter::identity(2), &[1.0, 0.0, 0.0, 1.0], &ridge)?;
    let ols_resid = layout.raw_residuals(x, &ols.beta);
    let ols_cov = lag_cov(&ols_resid, 0);
    let scale = x.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if ols_resid.iter().flatten().all(|v| v.abs() <= 1e-10 * scale) {
        // An exact fit is its own GLS fit under any weight.
        let mut resid = ols_resid.into_iter();
        return Ok(GlsResiduals {
            residuals: [resid.next().unwrap_or_default(), resid.next().unwrap_or_default()],
            ols_cov,
        });
    }
    let inv = to_mat(&ols_cov)
        .try_inverse()
        .filter(|_| is_positive_definite(&ols_cov))
        .ok_or_else(|| Error::SingularMatrix("OLS residual covariance is singular".into()))?;
    let root = weight_root(&row_major(&from_mat(&inv)), 2)?;
    let gls = structured::solve(layout, x, &Filter::identity(2), &root, &ridge)?;
    let mut resid = layout.raw_residuals(x, &gls.beta).into_iter();
    let first = resid.next().unwrap_or_default();
    let second = resid.next().unwrap_or_default();
    Ok(GlsResiduals {
        residuals: [first, second],
        ols_cov,
    })
}

/// Residuals of the mean fit weighted by Gamma^ols(0)^-1 (x) I_N.
pub fn gls_residuals(data: &SeriesData, config: &ChangepointConfig) -> Result<GlsResiduals> {
    check_bivariate(data, config)?;
    gls_with_layout(data, &Layout::new(config, data.period()))
}

/// VAR(p) Yule-Walker estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEstimates {
    pub phi: Vec<Mat2>,
    pub sigma: Mat2,
    /// Gamma(0..=p).
    pub gamma: Vec<Mat2>,
    /// Set when `sigma` is the rescaled Gamma(0) because the Yule-Walker
    /// residual covariance was not positive definite.
    pub fallback: bool,
}

/// Solves the block-Toeplitz Yule-Walker system for Phi_1..Phi_p and
/// returns Sigma = Gamma(0) - sum_j Phi_j Gamma(j)', symmetrized.
pub fn var_yule_walker(resid: &[Vec<f64>], p: usize) -> Result<VarEstimates> {
    if resid.len() != 2 || resid[0].len() != resid[1].len() {
        return Err(Error::DimensionMismatch(
            "expected two residual series of equal length".into(),
        ));
    }
    if resid[0].len() <= p {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals cannot identify a VAR({p})",
            resid[0].len()
        )));
    }
    let gamma: Vec<Mat2> = (0..=p).map(|h| lag_cov(resid, h)).collect();
    if !is_positive_definite(&gamma[0]) {
        return Err(Error::SingularMatrix("residual covariance is singular".into()));
    }

    let mut phi = Vec::with_capacity(p);
    if p > 0 {
        let k = 2 * p;
        let mut r = DMatrix::zeros(k, k);
        for i in 0..p {
            for j in 0..p {
                let block = if j >= i {
                    to_mat(&gamma[j - i])
                } else {
                    to_mat(&gamma[i - j]).transpose()
                };
                r.view_mut((2 * i, 2 * j), (2, 2)).copy_from(&block);
            }
        }
        // Phi R = [Gamma(1) .. Gamma(p)]  <=>  R Phi' = [Gamma(1) .. Gamma(p)]'.
        let mut rhs = DMatrix::zeros(k, 2);
        for j in 0..p {
            rhs.view_mut((2 * j, 0), (2, 2))
                .copy_from(&to_mat(&gamma[j + 1]).transpose());
        }
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularMatrix("block-Toeplitz matrix is not positive definite".into()))?;
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..k).map(|d| l[(d, d)]).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !((hi / lo).powi(2) < CONDITION_LIMIT) {
            return Err(Error::SingularMatrix("block-Toeplitz matrix is ill-conditioned".into()));
        }
        let phi_t = chol.solve(&rhs);
        for j in 0..p {
            let block: Matrix2<f64> = phi_t.fixed_view::<2, 2>(2 * j, 0).transpose();
            phi.push(from_mat(&block));
        }
    }

    let mut sigma = to_mat(&gamma[0]);
    for (j, ph) in phi.iter().enumerate() {
        sigma -= to_mat(ph) * to_mat(&gamma[j + 1]).transpose();
    }
    let sigma = from_mat(&((sigma + sigma.transpose()) * 0.5));
    if is_positive_definite(&sigma) {
        return Ok(VarEstimates {
            phi,
            sigma,
            gamma,
            fallback: false,
        });
    }

    let mut scale = [0.0; 2];
    for (c, s) in scale.iter_mut().enumerate() {
        let (_, var) = yule_walker(&sample_autocov(&resid[c], p))?;
        *s = (var / gamma[0][c][c]).sqrt();
    }
    let g0 = gamma[0];
    let sigma = [
        [g0[0][0] * scale[0] * scale[0], g0[0][1] * scale[0] * scale[1]],
        [g0[1][0] * scale[1] * scale[0], g0[1][1] * scale[1] * scale[1]],
    ];
    if !is_positive_definite(&sigma) {
        return Err(Error::SingularMatrix(
            "fallback noise covariance is not positive definite".into(),
        ));
    }
    Ok(VarEstimates {
        phi,
        sigma,
        gamma,
        fallback: true,
    })
}
