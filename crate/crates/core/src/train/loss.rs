//! The joint objective `alpha * MD + beta * MSE - gamma * MI` and its
//! analytic parameter gradient.
//!
//! Gradient flow rules:
//! * the robust-MD term differentiates through the latent rows only; the
//!   median, MADs and correlation inverse are constants for the step;
//! * the MI term differentiates through the latent Gram entries only; the
//!   input Gram is constant with respect to the parameters;
//! * an entropy sitting on [`ENTROPY_FLOOR`] contributes no gradient.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::autoenc::{backward, forward, Gradients, NetworkParams};
use crate::error::{Error, Result};
use crate::itl::{joint_entropy_matrix, mi, renyi2_matrix, MiMode, ENTROPY_FLOOR};
use crate::ndmath::{gaussian_gram, normalize_gram, Matrix, NormalizedGram};
use crate::robust::{robust_correlation, robust_md, RobustLatentStats};

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Robust-MD term.
    pub alpha: f64,
    /// Reconstruction term.
    pub beta: f64,
    /// MI term (subtracted).
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.95, beta: 0.05, gamma: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.alpha) && ok(self.beta) && ok(self.gamma)) {
            return Err(Error::param(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub md_term: f64,
    pub recon_term: f64,
    pub mi_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(md_term: f64, recon_term: f64, mi_term: f64, w: &LossWeights) -> Self {
        Self {
            md_term,
            recon_term,
            mi_term,
            total: w.alpha * md_term + w.beta * recon_term - w.gamma * mi_term,
        }
    }
}

/// Where the robust location/scale come from when evaluating the MD term.
#[derive(Debug, Clone, Copy)]
pub enum StatsSource<'a> {
    /// Median/MAD/R computed from the batch's own latent codes.
    PerBatch,
    /// A fixed snapshot.
    Frozen(&'a RobustLatentStats),
}

/// Loss value, parameter gradient, and the robust stats the MD term used.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub breakdown: LossBreakdown,
    pub grads: Gradients,
    pub stats: RobustLatentStats,
}

fn check_not_constant(batch: &Matrix) -> Result<()> {
    let first = batch.row(0);
    if batch.iter_rows().all(|r| r == first) {
        return Err(Error::degenerate(
            "all batch rows are identical: every input MAD is zero and the input Gram has rank one",
        ));
    }
    Ok(())
}

/// Entropies of the input and latent Grams together with the MI value.
struct MiParts {
    value: f64,
    /// d(mi)/d(latent Gram entry), before the -gamma factor.
    d_latent_gram: Matrix,
}

fn mi_with_gradient(gx: &NormalizedGram, gz: &NormalizedGram, mode: MiMode) -> Result<MiParts> {
    let hx = renyi2_matrix(gx)?;
    let hz = renyi2_matrix(gz)?;
    let hxz = joint_entropy_matrix(gx, gz)?;
    let value = mi(&hx, &hz, &hxz, mode)?.value;

    let (ax, az) = (&gx.mat, &gz.mat);
    let n = az.rows();
    let s_z: f64 = az.as_slice().iter().map(|v| v * v).sum();
    let tr: f64 = (0..n).map(|i| ax[(i, i)] * az[(i, i)]).sum();
    let s_c: f64 = ax
        .as_slice()
        .iter()
        .zip(az.as_slice())
        .map(|(a, b)| (a * b) * (a * b))
        .sum::<f64>()
        / (tr * tr);

    let active = |h: f64| h > ENTROPY_FLOOR;
    let (dmi_dhz, dmi_dhxz) = match mode {
        MiMode::Ratio => (
            if active(hz.value) { 1.0 / (hz.value * LN_2) } else { 0.0 },
            if active(hxz.value) { -2.0 / (hxz.value * LN_2) } else { 0.0 },
        ),
        MiMode::Additive => (
            if active(hz.value) { 1.0 } else { 0.0 },
            if active(hxz.value) { -1.0 } else { 0.0 },
        ),
    };

    // dHz/dAz_ij = -2 Az_ij / (S_z ln 2)
    // dHxz/dAz_ij = -2 Ax_ij^2 Az_ij / (tr^2 S_c ln 2); tr(Ax o Az) is fixed
    // because both diagonals are exactly 1/N
    let cz = -2.0 / (s_z * LN_2);
    let cxz = -2.0 / (tr * tr * s_c * LN_2);
    let data = ax
        .as_slice()
        .iter()
        .zip(az.as_slice())
        .map(|(&a, &b)| dmi_dhz * cz * b + dmi_dhxz * cxz * a * a * b)
        .collect();
    Ok(MiParts { value, d_latent_gram: Matrix::from_raw(n, n, data) })
}

/// Evaluate the joint loss on one batch and its gradient w.r.t. all parameters.
pub fn joint_loss(
    params: &NetworkParams,
    batch: &Matrix,
    config: &TrainConfig,
    stats_source: StatsSource<'_>,
) -> Result<LossEval> {
    let n = batch.rows();
    if n < 2 {
        return Err(Error::param(format!("joint loss needs at least 2 rows, got {n}")));
    }
    check_not_constant(batch)?;
    let w = &config.weights;
    w.validate()?;
    let trace = forward(params, batch)?;
    let latent = trace.latent();
    let k = latent.cols();
    let d = batch.cols();
    let inv_n = 1.0 / n as f64;

    // robust MD
    let stats = match stats_source {
        StatsSource::PerBatch => robust_correlation(latent, &config.robust_options())?,
        StatsSource::Frozen(s) => s.clone(),
    };
    let distances = robust_md(latent, &stats)?;
    let md_term = distances.iter().sum::<f64>() * inv_n;
    let mut grad_latent = Matrix::zeros(n, k);
    if w.alpha != 0.0 {
        let mut delta = vec![0.0; k];
        for (r, &dist) in distances.iter().enumerate() {
            if dist <= 1e-300 {
                continue;
            }
            for ((dl, z), m) in delta.iter_mut().zip(latent.row(r)).zip(&stats.medians) {
                *dl = z - m;
            }
            let scale = w.alpha * inv_n / dist;
            let out = grad_latent.row_mut(r);
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (sij, dj) in stats.corr_inv.row(i).iter().zip(&delta) {
                    acc += sij * dj;
                }
                *o += scale * acc;
            }
        }
    }

    // reconstruction MSE
    let recon = trace.reconstruction();
    let inv_nd = 1.0 / (n * d) as f64;
    let mut grad_recon = Matrix::zeros(n, d);
    let mut sq = 0.0;
    for ((g, &r), &x) in grad_recon.as_mut_slice().iter_mut().zip(recon.as_slice()).zip(batch.as_slice()) {
        let e = r - x;
        sq += e * e;
        *g = w.beta * 2.0 * e * inv_nd;
    }
    let recon_term = sq * inv_nd;

    // matrix-based MI between input and latent Grams
    let gx = normalize_gram(&gaussian_gram(batch, config.sigma)?)?;
    let latent_sigma = config.latent_sigma();
    let gz = normalize_gram(&gaussian_gram(latent, latent_sigma)?)?;
    let parts = mi_with_gradient(&gx, &gz, config.mi_mode)?;
    if w.gamma != 0.0 {
        // dAz_ij/dz_i = -Az_ij (z_i - z_j) / sigma^2; with the symmetric
        // gradient and the -gamma factor: dL/dz_i = 2 gamma / sigma^2 *
        // sum_j g_ij Az_ij (z_i - z_j)
        let coef = w.gamma * 2.0 / (latent_sigma * latent_sigma);
        let az = &gz.mat;
        let g = &parts.d_latent_gram;
        for i in 0..n {
            let zi = latent.row(i).to_vec();
            let out = grad_latent.row_mut(i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let f = coef * g[(i, j)] * az[(i, j)];
                if f == 0.0 {
                    continue;
                }
                for ((o, a), b) in out.iter_mut().zip(&zi).zip(latent.row(j)) {
                    *o += f * (a - b);
                }
            }
        }
    }

    let mut grads = Gradients::zeros_like(params);
    backward(params, &trace, &grad_latent, &grad_recon, &mut grads)?;
    let breakdown = LossBreakdown::compose(md_term, recon_term, parts.value, w);
    Ok(LossEval { breakdown, grads, stats })
}

/// Mean absolute deviation from the mean.
fn mean_abs_dev(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).abs()).sum::<f64>() / values.len() as f64
}

/// Reciprocal mean-absolute-deviation weighting of the MD and reconstruction
/// terms, rescaled so `alpha + beta = 1`. Falls back to (0.95, 0.05) when
/// either deviation is zero.
pub fn auto_weights(validation_md: &[f64], validation_recon: &[f64], gamma: f64) -> Result<LossWeights> {
    if validation_md.is_empty() || validation_recon.is_empty() {
        return Err(Error::param("auto_weights needs non-empty validation vectors"));
    }
    let (dm, dr) = (mean_abs_dev(validation_md), mean_abs_dev(validation_recon));
    if !(dm > 0.0 && dr > 0.0) || !dm.is_finite() || !dr.is_finite() {
        return Ok(LossWeights { gamma, ..LossWeights::default() });
    }
    let (a, b) = (1.0 / dm, 1.0 / dr);
    Ok(LossWeights { alpha: a / (a + b), beta: b / (a + b), gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::{init_params, Activation};
    use approx::assert_abs_diff_eq;

    #[test]
    fn weighted_sum_arithmetic() {
        let w = LossWeights { alpha: 0.95, beta: 0.05, gamma: 0.0 };
        let b = LossBreakdown::compose(2.0, 4.0, 123.0, &w);
        assert_abs_diff_eq!(b.total, 2.1, epsilon = 1e-15);
    }

    #[test]
    fn perfect_reconstruction_with_only_beta_is_zero() {
        // a 1-1 network with w = 1 and linear-regime relu reconstructs x > 0 exactly
        let mut p = init_params(&[1, 1], Activation::Relu, 3).unwrap();
        p.weights[0] = Matrix::from_rows(&[[1.0]]).unwrap();
        let batch = Matrix::from_rows(&[[0.2], [0.5], [0.9]]).unwrap();
        let config = TrainConfig {
            weights: LossWeights { alpha: 0.0, beta: 1.0, gamma: 0.0 },
            ..TrainConfig::default()
        };
        let eval = joint_loss(&p, &batch, &config, StatsSource::PerBatch).unwrap();
        assert_eq!(eval.breakdown.recon_term, 0.0);
        assert_eq!(eval.breakdown.total, 0.0);
    }

    #[test]
    fn latents_at_median_give_zero_md() {
        let mut p = init_params(&[3, 2], Activation::Tanh, 3).unwrap();
        p.weights[0] = Matrix::zeros(2, 3);
        p.biases_enc[0] = vec![0.3, -0.2];
        let batch = Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.4, 0.1, 0.0], [0.9, 0.5, 0.7]]).unwrap();
        let config = TrainConfig {
            weights: LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 },
            ..TrainConfig::default()
        };
        let eval = joint_loss(&p, &batch, &config, StatsSource::PerBatch).unwrap();
        assert_eq!(eval.breakdown.md_term, 0.0);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let p = init_params(&[2, 1], Activation::Tanh, 3).unwrap();
        let batch = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        let err = joint_loss(&p, &batch, &TrainConfig::default(), StatsSource::PerBatch).unwrap_err();
        match err {
            Error::Degenerate(msg) => assert!(msg.contains("MAD")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn auto_weight_examples() {
        let w = auto_weights(&[0.0, 1.0], &[1.0, 2.0], 1.0).unwrap();
        assert_abs_diff_eq!(w.alpha, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w.beta, 0.5, epsilon = 1e-15);

        // mean abs dev 0.1 and 0.9
        let w = auto_weights(&[0.0, 0.2], &[0.0, 1.8], 1.0).unwrap();
        assert_abs_diff_eq!(w.alpha, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(w.beta, 0.1, epsilon = 1e-12);

        let w = auto_weights(&[3.0; 4], &[1.0; 4], 1.0).unwrap();
        assert_eq!((w.alpha, w.beta, w.gamma), (0.95, 0.05, 1.0));
        assert!(auto_weights(&[], &[1.0], 1.0).is_err());
    }
}
