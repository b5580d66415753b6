//! Median/MAD location and scale, the MAD-normalized correlation matrix, and
//! the robust and classical Mahalanobis distances computed from them.
//!
//! The robust correlation between latent dimensions `i` and `j` is
//!
//! ```text
//! rho[i,j] = mean_n((z[n,i] - med_i) (z[n,j] - med_j)) / (MAD_i MAD_j)
//! ```
//!
//! with the batch mean taken over `N` rows (divisor `N`). The diagonal is
//! whatever the formula yields (about 2.2 for Gaussian columns) unless
//! [`RobustOptions::normalize_diagonal`] is set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{quadratic_form, ridge_inverse, Matrix, DEFAULT_RIDGE};

/// Lower clamp on every MAD, in normalized-feature units.
pub const MAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustOptions {
    pub ridge_epsilon: f64,
    pub mad_floor: f64,
    /// Rescale the correlation matrix to unit diagonal (ablation only).
    pub normalize_diagonal: bool,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            ridge_epsilon: DEFAULT_RIDGE,
            mad_floor: MAD_FLOOR,
            normalize_diagonal: false,
        }
    }
}

/// Median/MAD location-scale snapshot of one latent batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustLatentStats {
    pub medians: Vec<f64>,
    pub mads: Vec<f64>,
    pub corr: Matrix,
    pub corr_inv: Matrix,
}

impl RobustLatentStats {
    pub fn dim(&self) -> usize {
        self.medians.len()
    }
}

/// Mean/covariance snapshot used by the classical Mahalanobis baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalStats {
    pub means: Vec<f64>,
    pub cov: Matrix,
    pub cov_inv: Matrix,
}

impl ClassicalStats {
    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

fn check_values(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::param(format!("{what} of an empty vector")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data(format!("{what} of a vector with non-finite values")));
    }
    Ok(())
}

/// Middle order statistic; the mean of the two middle values for even length.
pub fn median(values: &[f64]) -> Result<f64> {
    check_values(values, "median")?;
    let mut buf = values.to_vec();
    Ok(median_in_place(&mut buf))
}

pub(crate) fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (_, upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = buf[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median absolute deviation from the median, clamped below at `floor`.
pub fn mad_with_floor(values: &[f64], floor: f64) -> Result<f64> {
    let med = median(values)?;
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    Ok(median_in_place(&mut dev).max(floor))
}

/// [`mad_with_floor`] with the default [`MAD_FLOOR`].
pub fn mad(values: &[f64]) -> Result<f64> {
    mad_with_floor(values, MAD_FLOOR)
}

/// Per-column median, MAD, robust correlation matrix and its ridge inverse,
/// all from the same batch.
pub fn robust_correlation(latents: &Matrix, opts: &RobustOptions) -> Result<RobustLatentStats> {
    let (n, k) = latents.shape();
    if n < 2 {
        return Err(Error::param(format!("robust correlation needs at least 2 rows, got {n}")));
    }
    if k == 0 {
        return Err(Error::param("robust correlation needs at least one column"));
    }
    let mut medians = Vec::with_capacity(k);
    let mut mads = Vec::with_capacity(k);
    for j in 0..k {
        let column = latents.column(j);
        medians.push(median(&column)?);
        mads.push(mad_with_floor(&column, opts.mad_floor)?);
    }

    let mut centered = latents.clone();
    for row in 0..n {
        for (v, m) in centered.row_mut(row).iter_mut().zip(&medians) {
            *v -= m;
        }
    }
    let mut corr = Matrix::zeros(k, k);
    let inv_n = 1.0 / n as f64;
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for row in centered.iter_rows() {
                acc += row[i] * row[j];
            }
            let v = acc * inv_n / (mads[i] * mads[j]);
            corr[(i, j)] = v;
            corr[(j, i)] = v;
        }
    }
    if opts.normalize_diagonal {
        let diag: Vec<f64> = (0..k).map(|i| corr[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
        for i in 0..k {
            for j in 0..k {
                corr[(i, j)] /= diag[i] * diag[j];
            }
        }
    }
    let corr_inv = ridge_inverse(&corr, opts.ridge_epsilon)?;
    Ok(RobustLatentStats { medians, mads, corr, corr_inv })
}

/// Sample mean and covariance (divisor `N`) with the ridge inverse.
pub fn classical_stats(latents: &Matrix, ridge_epsilon: f64) -> Result<ClassicalStats> {
    let (n, k) = latents.shape();
    if n < 2 || k == 0 {
        return Err(Error::param(format!("classical stats need >= 2 rows and >= 1 column, got {n}x{k}")));
    }
    let inv_n = 1.0 / n as f64;
    let mut means = vec![0.0; k];
    for row in latents.iter_rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m *= inv_n);
    let mut cov = Matrix::zeros(k, k);
    for row in latents.iter_rows() {
        for i in 0..k {
            let di = row[i] - means[i];
            for j in i..k {
                cov[(i, j)] += di * (row[j] - means[j]);
            }
        }
    }
    for i in 0..k {
        for j in i..k {
            let v = cov[(i, j)] * inv_n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let cov_inv = ridge_inverse(&cov, ridge_epsilon)?;
    Ok(ClassicalStats { means, cov, cov_inv })
}

fn mahalanobis_rows(latents: &Matrix, center: &[f64], inv: &Matrix) -> Result<Vec<f64>> {
    if latents.cols() != center.len() {
        return Err(Error::param(format!(
            "latent width {} does not match stats dimension {}",
            latents.cols(),
            center.len()
        )));
    }
    let mut delta = vec![0.0; center.len()];
    Ok(latents
        .iter_rows()
        .map(|row| {
            for ((d, v), c) in delta.iter_mut().zip(row).zip(center) {
                *d = v - c;
            }
            // the ridge can leave a tiny negative quadratic form
            quadratic_form(inv, &delta).max(0.0).sqrt()
        })
        .collect())
}

/// `sqrt((z - median)^T R^-1 (z - median))` for every row.
pub fn robust_md(latents: &Matrix, stats: &RobustLatentStats) -> Result<Vec<f64>> {
    mahalanobis_rows(latents, &stats.medians, &stats.corr_inv)
}

/// `sqrt((z - mean)^T Sigma^-1 (z - mean))` for every row.
pub fn classical_md(latents: &Matrix, stats: &ClassicalStats) -> Result<Vec<f64>> {
    mahalanobis_rows(latents, &stats.means, &stats.cov_inv)
}
