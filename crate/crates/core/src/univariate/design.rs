use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{season_of, ChangepointConfig};

/// Dense seasonal (N x T) and regime (N x m) indicator matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPair {
    pub seasonal: DMatrix<f64>,
    pub regime: DMatrix<f64>,
}

impl DesignPair {
    /// Concatenation [A | D].
    pub fn joined(&self) -> DMatrix<f64> {
        let n = self.seasonal.nrows();
        let (t, m) = (self.seasonal.ncols(), self.regime.ncols());
        let mut z = DMatrix::zeros(n, t + m);
        z.columns_mut(0, t).copy_from(&self.seasonal);
        z.columns_mut(t, m).copy_from(&self.regime);
        z
    }
}

/// Builds the indicator design of one component of `config`. Column
/// r-1 of the regime matrix flags regime r = 2..=m+1; regime 1 has no
/// column.
pub fn build_design(config: &ChangepointConfig, component: usize, period: usize) -> DesignPair {
    let n = config.n();
    let m = config.m_of(component);
    let mut seasonal = DMatrix::zeros(n, period);
    let mut regime = DMatrix::zeros(n, m);
    for (i, r) in config.regime_of_rows(component).into_iter().enumerate() {
        seasonal[(i, season_of(i + 1, period) - 1)] = 1.0;
        if r > 0 {
            regime[(i, r as usize - 1)] = 1.0;
        }
    }
    DesignPair { seasonal, regime }
}

/// Applies the AR filter 1 - sum_j phi_j B^j to every column, returning
/// rows p+1..=N.
pub fn whiten(input: &DMatrix<f64>, phi: &[f64]) -> Result<DMatrix<f64>> {
    let p = phi.len();
    let n = input.nrows();
    if n <= p {
        return Err(Error::DimensionMismatch(format!(
            "cannot whiten {n} rows with an AR filter of order {p}"
        )));
    }
    let mut out = input.rows(p, n - p).into_owned();
    for (j, &coef) in phi.iter().enumerate() {
        let lag = j + 1;
        out -= input.rows(p - lag, n - p) * coef;
    }
    Ok(out)
}

pub fn whiten_vector(input: &[f64], phi: &[f64]) -> Result<DVector<f64>> {
    let m = DMatrix::from_column_slice(input.len(), 1, input);
    Ok(whiten(&m, phi)?.column(0).into_owned())
}
