//! Structured least-squares kernel for indicator designs.
//!
//! Every row of the seasonal/regime design has at most two non-zero
//! entries, and an AR (or VAR) filter of order p mixes at most p+1 rows.
//! The Gram matrix of the filtered design is therefore assembled in
//! O(N p^2) from row labels rather than from dense columns, and the small
//! (T+m)-dimensional system is solved by Cholesky.
//!
//! Column layout: all regime columns first (component 0, then component
//! 1), followed by the seasonal columns of each component. With regime
//! columns leading, the leading block of the Cholesky factor is the factor
//! of the regime block, which yields `log |D'WD + R|` for free.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ChangepointConfig;

/// Largest accepted condition-number estimate of a factored system.
pub(crate) const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    period: usize,
    m: Vec<usize>,
    regime_offset: Vec<usize>,
    regime: Vec<Vec<u32>>,
    m_total: usize,
    cols: usize,
}

impl Layout {
    pub(crate) fn new(config: &ChangepointConfig, period: usize) -> Self {
        let comps = config.components();
        let mut m = Vec::with_capacity(comps);
        let mut regime_offset = Vec::with_capacity(comps);
        let mut regime = Vec::with_capacity(comps);
        let mut offset = 0;
        for k in 0..comps {
            regime_offset.push(offset);
            m.push(config.m_of(k));
            offset += config.m_of(k);
            regime.push(config.regime_of_rows(k));
        }
        Self {
            period,
            m,
            regime_offset,
            regime,
            m_total: offset,
            cols: offset + comps * period,
        }
    }

    pub(crate) fn comps(&self) -> usize {
        self.m.len()
    }

    pub(crate) fn m_total(&self) -> usize {
        self.m_total
    }

    pub(crate) fn cols(&self) -> usize {
        self.cols
    }

    pub(crate) fn regime_range(&self, k: usize) -> std::ops::Range<usize> {
        self.regime_offset[k]..self.regime_offset[k] + self.m[k]
    }

    pub(crate) fn season_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.m_total + k * self.period;
        start..start + self.period
    }

    #[inline]
    fn season_col(&self, k: usize, row: usize) -> usize {
        self.m_total + k * self.period + row % self.period
    }

    #[inline]
    fn regime_col(&self, k: usize, row: usize) -> Option<usize> {
        match self.regime[k][row] {
            0 => None,
            r => Some(self.regime_offset[k] + r as usize - 1),
        }
    }

    /// Fitted mean of component k at a row for coefficients `beta`.
    #[inline]
    pub(crate) fn fitted(&self, beta: &[f64], k: usize, row: usize) -> f64 {
        let mut v = beta[self.season_col(k, row)];
        if let Some(c) = self.regime_col(k, row) {
            v += beta[c];
        }
        v
    }

    /// Unfiltered residuals x_k - fitted for every component.
    pub(crate) fn raw_residuals(&self, x: &[Vec<f64>], beta: &[f64]) -> Vec<Vec<f64>> {
        x.iter()
            .enumerate()
            .map(|(k, col)| {
                col.iter()
                    .enumerate()
                    .map(|(i, &v)| v - self.fitted(beta, k, i))
                    .collect()
            })
            .collect()
    }
}

/// A row-mixing linear filter: output row a at time i is
/// sum_j sum_b taps[j][a][b] * input_b(i - j), applied for i >= taps.len()-1.
#[derive(Debug, Clone)]
pub(crate) struct Filter {
    comps: usize,
    /// taps[j] is a comps x comps row-major matrix.
    taps: Vec<Vec<f64>>,
}

impl Filter {
    pub(crate) fn identity(comps: usize) -> Self {
        Self {
            comps,
            taps: vec![identity(comps)],
        }
    }

    /// Whitening filter 1 - sum_j Phi_j B^j from row-major lag matrices.
    pub(crate) fn whitening(comps: usize, coeffs: &[Vec<f64>]) -> Self {
        let mut taps = vec![identity(comps)];
        for phi in coeffs {
            taps.push(phi.iter().map(|v| -v).collect());
        }
        Self { comps, taps }
    }

    pub(crate) fn order(&self) -> usize {
        self.taps.len() - 1
    }

    /// Premultiplies every tap by the upper-triangular matrix `u`.
    fn premultiplied(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let c = self.comps;
        self.taps
            .iter()
            .map(|tap| {
                let mut out = vec![0.0; c * c];
                for a in 0..c {
                    for b in 0..c {
                        out[a * c + b] = (0..c).map(|l| u[a * c + l] * tap[l * c + b]).sum();
                    }
                }
                out
            })
            .collect()
    }
}

fn identity(c: usize) -> Vec<f64> {
    let mut m = vec![0.0; c * c];
    for i in 0..c {
        m[i * c + i] = 1.0;
    }
    m
}

/// Upper-triangular `u` with u'u = v for a symmetric positive-definite
/// matrix `v` of size 1 or 2 (row-major).
pub(crate) fn weight_root(v: &[f64], comps: usize) -> Result<Vec<f64>> {
    match comps {
        1 if v[0] > 0.0 => Ok(vec![v[0].sqrt()]),
        2 => {
            // v = u'u with u = [[u11, u12], [0, u22]]
            let u11 = v[0].sqrt();
            if !(u11 > 0.0) {
                return Err(Error::SingularMatrix("weight matrix is not positive definite".into()));
            }
            let u12 = v[1] / u11;
            let rem = v[3] - u12 * u12;
            if !(rem > 0.0) {
                return Err(Error::SingularMatrix("weight matrix is not positive definite".into()));
            }
            Ok(vec![u11, u12, 0.0, rem.sqrt()])
        }
        _ => Err(Error::SingularMatrix("weight matrix is not positive definite".into())),
    }
}

/// Solution of a filtered, weighted, ridge-penalized indicator regression
///
///   min_beta  sum_i r_i' W r_i + sum_c ridge_c beta_c^2,
///   r_i = (F x)_i - (F Z beta)_i,
///
/// over rows i = filter order .. N-1.
#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub beta: Vec<f64>,
    /// Minimized objective, including the ridge term.
    pub quad: f64,
    /// log-determinant of the regime block of the penalized Gram matrix.
    pub logdet_regime: f64,
}

pub(crate) fn solve(
    layout: &Layout,
    x: &[Vec<f64>],
    filter: &Filter,
    weight_root: &[f64],
    ridge: &[f64],
) -> Result<Solution> {
    let c = layout.comps();
    debug_assert_eq!(x.len(), c);
    debug_assert_eq!(ridge.len(), layout.m_total());
    let n = x[0].len();
    let k = layout.cols();
    let p = filter.order();
    let taps = filter.premultiplied(weight_root);

    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(4 * (p + 1) * c); c];
    let mut resp = vec![0.0; c];

    for i in p..n {
        build_rows(layout, x, &taps, i, &mut rows, &mut resp);
        for (row, &y) in rows.iter().zip(&resp) {
            for &(ci, vi) in row {
                rhs[ci] += vi * y;
                let base = ci * k;
                for &(cj, vj) in row {
                    gram[base + cj] += vi * vj;
                }
            }
        }
    }
    for (r, &lam) in ridge.iter().enumerate() {
        gram[r * k + r] += lam;
    }

    let g = DMatrix::from_row_slice(k, k, &gram);
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::DegenerateDesign("design Gram matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in 0..k {
        let v = l[(d, d)];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let cond = (hi / lo).powi(2);
    if !(cond < CONDITION_LIMIT) {
        return Err(Error::DegenerateDesign(format!(
            "design is numerically rank deficient (condition estimate {cond:.3e})"
        )));
    }
    let m = layout.m_total();
    let logdet_regime = if m == 0 {
        0.0
    } else {
        2.0 * (0..m).map(|d| l[(d, d)].ln()).sum::<f64>()
    };
    let beta: Vec<f64> = chol.solve(&DVector::from_vec(rhs)).iter().copied().collect();

    let mut rss = 0.0;
    for i in p..n {
        build_rows(layout, x, &taps, i, &mut rows, &mut resp);
        for (row, &y) in rows.iter().zip(&resp) {
            let fit: f64 = row.iter().map(|&(ci, vi)| vi * beta[ci]).sum();
            let r = y - fit;
            rss += r * r;
        }
    }
    let penalty: f64 = ridge.iter().zip(&beta).map(|(lam, b)| lam * b * b).sum();
    Ok(Solution {
        beta,
        quad: rss + penalty,
        logdet_regime,
    })
}

#[inline]
fn push_merge(row: &mut Vec<(usize, f64)>, col: usize, v: f64) {
    if let Some(e) = row.iter_mut().find(|e| e.0 == col) {
        e.1 += v;
    } else {
        row.push((col, v));
    }
}

#[inline]
fn build_rows(
    layout: &Layout,
    x: &[Vec<f64>],
    taps: &[Vec<f64>],
    i: usize,
    rows: &mut [Vec<(usize, f64)>],
    resp: &mut [f64],
) {
    let c = rows.len();
    for a in 0..c {
        let row = &mut rows[a];
        row.clear();
        let mut y = 0.0;
        for (j, tap) in taps.iter().enumerate() {
            let src = i - j;
            for b in 0..c {
                let w = tap[a * c + b];
                if w == 0.0 {
                    continue;
                }
                y += w * x[b][src];
                push_merge(row, layout.season_col(b, src), w);
                if let Some(col) = layout.regime_col(b, src) {
                    push_merge(row, col, w);
                }
            }
        }
        resp[a] = y;
    }
}
