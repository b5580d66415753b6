//! Nonparametric information-theoretic estimators.
//!
//! Two families live here:
//!
//! * sample-based Renyi quadratic entropy, `-ln` of the information potential
//!   `(1/N^2) sum_ij G_{sqrt(2) sigma}(x_i - x_j)`, plus the cross-set version
//!   and the Cauchy-Schwarz divergence built from them (natural log);
//! * matrix-based Renyi entropy of a trace-normalized Gram matrix,
//!   `-log2 tr(A^2)`, and the Hadamard joint entropy (log base 2).
//!
//! Values of the two bases are never mixed: [`mi_cs`] only accepts
//! matrix-kind, log2 entropies.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{check_sigma, gaussian_kernel, hadamard_normalized, Matrix, NormalizedGram};

/// Lower clamp (bits) applied to entropies before forming the MI ratio.
pub const ENTROPY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBasis {
    Log2,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyKind {
    Sample,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    pub basis: LogBasis,
    pub kind: EntropyKind,
}

impl EntropyValue {
    fn sample(value: f64) -> Self {
        Self { value, basis: LogBasis::Natural, kind: EntropyKind::Sample }
    }

    fn matrix(value: f64) -> Self {
        Self { value, basis: LogBasis::Log2, kind: EntropyKind::Matrix }
    }
}

/// How the MI term combines the three entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiMode {
    /// `log2(Hx Hz / Hxz^2)`.
    #[default]
    Ratio,
    /// `Hx + Hz - Hxz`.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiValue {
    pub value: f64,
    /// Clamped `(Hx, Hz, Hxz)` the value was formed from.
    pub component_entropies: (f64, f64, f64),
}

/// Mean of `G_{sqrt(2) sigma}(x_i - z_j)` over all pairs.
pub fn information_potential(x: &Matrix, z: &Matrix, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if x.cols() != z.cols() {
        return Err(Error::param(format!(
            "sample sets have different widths ({} vs {})",
            x.cols(),
            z.cols()
        )));
    }
    if x.rows() == 0 || z.rows() == 0 {
        return Err(Error::param("information potential of an empty sample set"));
    }
    let s = SQRT_2 * sigma;
    let mut acc = 0.0;
    for xi in x.iter_rows() {
        for zj in z.iter_rows() {
            acc += gaussian_kernel(xi, zj, s);
        }
    }
    Ok(acc / (x.rows() as f64 * z.rows() as f64))
}

fn neg_ln_potential(ip: f64) -> Result<f64> {
    if !(ip > 0.0) {
        return Err(Error::degenerate("information potential underflowed to zero"));
    }
    Ok(-ip.ln())
}

/// Sample-based quadratic Renyi entropy (nats).
pub fn renyi2_sample(samples: &Matrix, sigma: f64) -> Result<EntropyValue> {
    let ip = information_potential(samples, samples, sigma)?;
    Ok(EntropyValue::sample(neg_ln_potential(ip)?))
}

/// Cross-set quadratic entropy `-ln` of the cross information potential (nats).
pub fn joint_entropy_sample(x: &Matrix, z: &Matrix, sigma: f64) -> Result<EntropyValue> {
    let ip = information_potential(x, z, sigma)?;
    Ok(EntropyValue::sample(neg_ln_potential(ip)?))
}

/// Sample-based Cauchy-Schwarz divergence `-ln(CIP / sqrt(IP_x IP_z))`.
pub fn cs_divergence_sample(x: &Matrix, z: &Matrix, sigma: f64) -> Result<f64> {
    let cross = information_potential(x, z, sigma)?;
    let self_x = information_potential(x, x, sigma)?;
    let self_z = information_potential(z, z, sigma)?;
    if !(cross > 0.0 && self_x > 0.0 && self_z > 0.0) {
        return Err(Error::degenerate("zero information potential in CS divergence"));
    }
    // written as a difference of logs so that swapping x and z is exact
    Ok(0.5 * self_x.ln() + 0.5 * self_z.ln() - cross.ln())
}

/// Sum of squared entries; equals `tr(A^2)` for symmetric `A`.
fn frobenius_sq(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum()
}

/// Matrix-based quadratic Renyi entropy `-log2 tr(A^2)` (bits).
pub fn renyi2_matrix(g: &NormalizedGram) -> Result<EntropyValue> {
    entropy_of_normalized(&g.mat)
}

fn entropy_of_normalized(m: &Matrix) -> Result<EntropyValue> {
    let tr_sq = frobenius_sq(m);
    if !(tr_sq > 0.0) {
        return Err(Error::degenerate("trace of squared normalized gram is not positive"));
    }
    let n = m.rows();
    let d = m[(0, 0)];
    let uniform = (0..n).all(|i| m[(i, i)] == d);
    let h = if uniform && (d * n as f64 - 1.0).abs() <= 4.0 * f64::EPSILON {
        // A = K / N with unit-diagonal K: H = 2 log2 N - log2 sum(K^2), which
        // keeps I/N at exactly log2 N
        let k_sq: f64 = m.as_slice().iter().map(|v| (v / d) * (v / d)).sum();
        2.0 * (n as f64).log2() - k_sq.log2()
    } else {
        -tr_sq.log2()
    };
    // rounding can push tr(A^2) a hair above 1 for rank-one inputs
    Ok(EntropyValue::matrix(h.max(0.0)))
}

/// Matrix-based joint entropy of the renormalized Hadamard product (bits).
pub fn joint_entropy_matrix(gx: &NormalizedGram, gz: &NormalizedGram) -> Result<EntropyValue> {
    if gx.len() != gz.len() {
        return Err(Error::param(format!(
            "gram sizes differ ({} vs {})",
            gx.len(),
            gz.len()
        )));
    }
    entropy_of_normalized(&hadamard_normalized(&gx.mat, &gz.mat)?)
}

fn check_mi_inputs(hs: [&EntropyValue; 3]) -> Result<()> {
    if hs.iter().any(|h| h.kind != EntropyKind::Matrix || h.basis != LogBasis::Log2) {
        return Err(Error::param("mutual information takes matrix-based log2 entropies only"));
    }
    if hs.iter().any(|h| !h.value.is_finite()) {
        return Err(Error::data("non-finite entropy passed to mutual information"));
    }
    Ok(())
}

/// `log2(Hx Hz / Hxz^2)` on entropies clamped at [`ENTROPY_FLOOR`].
pub fn mi_cs(hx: &EntropyValue, hz: &EntropyValue, hxz: &EntropyValue) -> Result<MiValue> {
    mi(hx, hz, hxz, MiMode::Ratio)
}

/// `Hx + Hz - Hxz` on entropies clamped at [`ENTROPY_FLOOR`].
pub fn mi_additive(hx: &EntropyValue, hz: &EntropyValue, hxz: &EntropyValue) -> Result<MiValue> {
    mi(hx, hz, hxz, MiMode::Additive)
}

pub fn mi(hx: &EntropyValue, hz: &EntropyValue, hxz: &EntropyValue, mode: MiMode) -> Result<MiValue> {
    check_mi_inputs([hx, hz, hxz])?;
    let (x, z, xz) = (
        hx.value.max(ENTROPY_FLOOR),
        hz.value.max(ENTROPY_FLOOR),
        hxz.value.max(ENTROPY_FLOOR),
    );
    let value = match mode {
        MiMode::Ratio => x.log2() + z.log2() - 2.0 * xz.log2(),
        MiMode::Additive => x + z - xz,
    };
    Ok(MiValue { value, component_entropies: (x, z, xz) })
}

/// Sum of per-column sample entropies minus the joint sample entropy.
pub fn total_correlation(m: &Matrix, sigma: f64) -> Result<f64> {
    if m.cols() == 0 {
        return Err(Error::param("total correlation needs at least one feature"));
    }
    let joint = renyi2_sample(m, sigma)?.value;
    let mut marginals = 0.0;
    for j in 0..m.cols() {
        let column = Matrix::new(m.rows(), 1, m.column(j))?;
        marginals += renyi2_sample(&column, sigma)?.value;
    }
    Ok(marginals - joint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::{gaussian_gram, normalize_gram};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn col(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    fn normalized(m: Matrix) -> NormalizedGram {
        NormalizedGram { mat: m }
    }

    #[test]
    fn renyi2_sample_single_point() {
        // -ln G_{sqrt2}(0) = -ln(1/sqrt(4 pi))
        let h = renyi2_sample(&col(&[0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(h.value, 0.5 * (4.0 * PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(h.value, 1.265_51, epsilon = 1e-5);
        assert_eq!(h.kind, EntropyKind::Sample);
        assert_eq!(h.basis, LogBasis::Natural);
    }

    #[test]
    fn renyi2_sample_duplicates_and_spread() {
        let one = renyi2_sample(&col(&[0.7]), 0.4).unwrap().value;
        let many = renyi2_sample(&col(&[0.7; 5]), 0.4).unwrap().value;
        assert_abs_diff_eq!(one, many, epsilon = 1e-12);

        let mut last = f64::NEG_INFINITY;
        for gap in [0.0, 0.1, 0.3, 0.6, 1.2, 2.5] {
            let h = renyi2_sample(&col(&[0.0, gap]), 0.5).unwrap().value;
            assert!(h > last);
            last = h;
        }
        assert!(matches!(renyi2_sample(&col(&[0.0]), 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn joint_entropy_sample_examples() {
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.5, -0.3], [1.0, 0.0]]).unwrap();
        let a = joint_entropy_sample(&x, &x, 0.3).unwrap().value;
        let b = renyi2_sample(&x, 0.3).unwrap().value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);

        let h = joint_entropy_sample(&col(&[0.0]), &col(&[0.0]), 1.0).unwrap().value;
        assert_abs_diff_eq!(h, 1.265_51, epsilon = 1e-5);

        let mut last = f64::NEG_INFINITY;
        for shift in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let h = joint_entropy_sample(&col(&[0.0]), &col(&[shift]), 1.0).unwrap().value;
            assert!(h > last);
            last = h;
        }
        assert!(matches!(
            joint_entropy_sample(&x, &col(&[0.0]), 1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn renyi2_matrix_examples() {
        assert_eq!(renyi2_matrix(&normalized(Matrix::from_rows(&[[1.0]]).unwrap())).unwrap().value, 0.0);

        let same = normalize_gram(&gaussian_gram(&col(&[0.4; 6]), 0.2).unwrap()).unwrap();
        assert_abs_diff_eq!(renyi2_matrix(&same).unwrap().value, 0.0, epsilon = 1e-12);

        let eye = normalized(Matrix::identity(8).scale(1.0 / 8.0));
        assert_eq!(renyi2_matrix(&eye).unwrap().value, 3.0);
        for n in [3, 7, 9, 10, 13, 49, 1000] {
            let eye = normalized(Matrix::identity(n).scale(1.0 / n as f64));
            assert_eq!(renyi2_matrix(&eye).unwrap().value, (n as f64).log2(), "n = {n}");
        }

        let c: f64 = 0.6;
        let m = normalized(Matrix::from_rows(&[[0.5, c / 2.0], [c / 2.0, 0.5]]).unwrap());
        let expected = 1.0 - (1.0 + c * c).log2();
        assert_abs_diff_eq!(renyi2_matrix(&m).unwrap().value, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.556_39, epsilon = 1e-5);
    }

    #[test]
    fn joint_entropy_matrix_examples() {
        let eye = normalized(Matrix::identity(4).scale(0.25));
        assert_abs_diff_eq!(joint_entropy_matrix(&eye, &eye).unwrap().value, 2.0, epsilon = 1e-12);

        let x = Matrix::from_rows(&[[0.0, 0.1], [0.3, 0.2], [0.9, 0.5], [0.2, 0.8]]).unwrap();
        let gx = normalize_gram(&gaussian_gram(&x, 0.5).unwrap()).unwrap();
        let flat = normalized(Matrix::new(4, 4, vec![0.25; 16]).unwrap());
        assert_abs_diff_eq!(
            joint_entropy_matrix(&gx, &flat).unwrap().value,
            renyi2_matrix(&gx).unwrap().value,
            epsilon = 1e-12
        );

        let one = normalized(Matrix::from_rows(&[[1.0]]).unwrap());
        assert_eq!(joint_entropy_matrix(&one, &one).unwrap().value, 0.0);
        assert!(matches!(joint_entropy_matrix(&one, &eye), Err(Error::Parameter(_))));
    }

    #[test]
    fn cs_divergence_examples() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [0.5, 0.2]]).unwrap();
        assert!(cs_divergence_sample(&x, &x, 0.7).unwrap().abs() <= 1e-10);

        let far = Matrix::from_rows(&[[40.0, 41.0], [40.5, 40.2]]).unwrap();
        assert!(cs_divergence_sample(&x, &far, 5.0).unwrap() > 10.0);

        // CIP = G_{sqrt2}(2) = G_{sqrt2}(0) e^{-1}, self potentials = G_{sqrt2}(0)
        let d = cs_divergence_sample(&col(&[0.0]), &col(&[2.0]), 1.0).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cs_divergence_underflow_is_degenerate() {
        let d = cs_divergence_sample(&col(&[0.0]), &col(&[1e6]), 1.0);
        assert!(matches!(d, Err(Error::Degenerate(_))));
    }

    #[test]
    fn mi_examples() {
        let h = |v: f64| EntropyValue::matrix(v);
        assert_eq!(mi_cs(&h(1.7), &h(1.7), &h(1.7)).unwrap().value, 0.0);
        assert_eq!(mi_cs(&h(2.0), &h(2.0), &h(1.0)).unwrap().value, 2.0);
        assert_eq!(mi_cs(&h(1.0), &h(1.0), &h(2.0)).unwrap().value, -2.0);
        assert_eq!(mi_additive(&h(2.0), &h(1.5), &h(3.0)).unwrap().value, 0.5);

        let clamped = mi_cs(&h(0.0), &h(0.0), &h(0.0)).unwrap();
        assert_eq!(clamped.value, 0.0);
        assert_eq!(clamped.component_entropies, (ENTROPY_FLOOR, ENTROPY_FLOOR, ENTROPY_FLOOR));

        let s = EntropyValue::sample(1.0);
        assert!(matches!(mi_cs(&s, &h(1.0), &h(1.0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn total_correlation_examples() {
        let x = col(&[0.1, 0.5, 0.9, 0.3]);
        assert_abs_diff_eq!(total_correlation(&x, 0.3).unwrap(), 0.0, epsilon = 1e-14);

        let v = [0.1, 0.5, 0.9, 0.3, 0.75];
        let dup: Vec<[f64; 2]> = v.iter().map(|&a| [a, a]).collect();
        assert!(total_correlation(&Matrix::from_rows(&dup).unwrap(), 0.3).unwrap() > 0.0);
    }

    #[test]
    fn total_correlation_matches_brute_force() {
        // N=2, d=2, every term written out from the kernel definition
        let rows: [[f64; 2]; 2] = [[0.0, 0.3], [0.4, 1.0]];
        let sigma: f64 = 0.5;
        let s2 = 2.0 * sigma * sigma; // (sqrt2 sigma)^2
        let g1 = |dsq: f64| (2.0 * PI * s2).powf(-0.5) * (-dsq / (2.0 * s2)).exp();
        let g2 = |dsq: f64| (2.0 * PI * s2).powf(-1.0) * (-dsq / (2.0 * s2)).exp();
        let h = |pot: f64| -pot.ln();
        let d0 = (rows[0][0] - rows[1][0]).powi(2);
        let d1 = (rows[0][1] - rows[1][1]).powi(2);
        let h0 = h((2.0 * g1(0.0) + 2.0 * g1(d0)) / 4.0);
        let h1 = h((2.0 * g1(0.0) + 2.0 * g1(d1)) / 4.0);
        let hj = h((2.0 * g2(0.0) + 2.0 * g2(d0 + d1)) / 4.0);
        let tc = total_correlation(&Matrix::from_rows(&rows).unwrap(), sigma).unwrap();
        assert_abs_diff_eq!(tc, h0 + h1 - hj, epsilon = 1e-12);
    }
}
