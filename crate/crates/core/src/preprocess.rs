//! Centering, whitening and row normalization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitenMode {
    /// Global centering followed by ZCA whitening on the pooled covariance.
    Zca,
    /// Leave the points untouched.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhitenConfig {
    /// Ridge added to the covariance diagonal, relative to `tr(Σ)/N`.
    pub ridge_fraction: f64,
    pub mode: WhitenMode,
}

impl Default for WhitenConfig {
    fn default() -> Self {
        WhitenConfig {
            ridge_fraction: 1e-6,
            mode: WhitenMode::Zca,
        }
    }
}

impl WhitenConfig {
    pub fn disabled() -> Self {
        WhitenConfig {
            mode: WhitenMode::None,
            ..Default::default()
        }
    }

    pub fn apply(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.mode {
            WhitenMode::Zca => gaussianize(features, self),
            WhitenMode::None => Ok(features.clone()),
        }
    }
}

/// Subtracts the column means.
pub fn center_global(features: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = features.row_mean();
    let mut out = features.clone();
    for mut row in out.row_iter_mut() {
        row -= &mean;
    }
    out
}

/// Centers the points and multiplies by `(Σ + ridge·I)^{-1/2}`.
///
/// Works from the thin SVD `X_c = U S Vᵀ`: the sample covariance is
/// `V S² Vᵀ / (M-1)`, so the whitened points are `U diag(s / sqrt(s²/(M-1) + ridge)) Vᵀ`.
/// Components outside the row span of `X_c` are zero before and after, so
/// the `N × N` covariance is never formed.
pub fn gaussianize(features: &DMatrix<f64>, cfg: &WhitenConfig) -> Result<DMatrix<f64>> {
    let (m, n) = features.shape();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "gaussianize needs at least two points".into(),
        ));
    }
    if cfg.ridge_fraction.is_nan() || cfg.ridge_fraction < 0.0 {
        return Err(Error::InvalidArgument(
            "ridge_fraction must be nonnegative".into(),
        ));
    }
    let centered = center_global(features);
    let svd = centered
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("covariance eigen-solve did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let dof = (m - 1) as f64;
    let trace: f64 = svd.singular_values.iter().map(|s| s * s / dof).sum();
    let ridge = cfg.ridge_fraction * trace / n as f64;

    let scaled: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            let var = s * s / dof + ridge;
            if var > 0.0 {
                s / var.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut us = u.clone();
    for (k, mut col) in us.column_iter_mut().enumerate() {
        col *= scaled[k];
    }
    Ok(us * v_t)
}

/// Scales every nonzero row to unit norm. Zero rows pass through and are
/// flagged in the returned mask.
pub fn l2_normalize_rows(features: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let mut out = features.clone();
    let mut zero = vec![false; features.nrows()];
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            zero[i] = true;
        }
    }
    (out, zero)
}

/// Sample covariance `X_cᵀ X_c / (M-1)`.
pub fn covariance(features: &DMatrix<f64>) -> DMatrix<f64> {
    let c = center_global(features);
    let dof = (features.nrows().max(2) - 1) as f64;
    c.tr_mul(&c) / dof
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::{stream_rng, Stream};

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, Stream::Planted, 99);
        DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn constant_matrix_centers_to_zero() {
        let x = DMatrix::from_element(4, 3, 2.5);
        assert_eq!(center_global(&x), DMatrix::zeros(4, 3));
    }

    #[test]
    fn centering_two_points() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
        let c = center_global(&x);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, 1.0, 1.0]));
        assert_abs_diff_eq!(center_global(&c), c, epsilon = 1e-12);
    }

    #[test]
    fn whitening_diag_covariance() {
        let mut x = gaussian(500, 2, 1);
        x.column_mut(0).scale_mut(2.0);
        let cfg = WhitenConfig {
            ridge_fraction: 0.0,
            ..Default::default()
        };
        let w = gaussianize(&x, &cfg).unwrap();
        assert_abs_diff_eq!(covariance(&w), DMatrix::identity(2, 2), epsilon = 1e-6);
    }

    #[test]
    fn isotropic_sample_nearly_unchanged() {
        let x = gaussian(10_000, 3, 2);
        let w = gaussianize(&x, &WhitenConfig::default()).unwrap();
        let c = center_global(&x);
        // sample covariance deviates from I by O(1/sqrt(M))
        let max_dev = (w - c).abs().max() / 4.0;
        assert!(max_dev < 0.1, "{max_dev}");
    }

    #[test]
    fn rank_deficient_input_stays_finite() {
        let base = gaussian(30, 2, 3);
        let x = DMatrix::from_fn(30, 5, |i, j| base[(i, j % 2)]);
        let w = gaussianize(&x, &WhitenConfig::default()).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn whitening_twice_keeps_identity() {
        let x = gaussian(200, 4, 4) * DMatrix::from_fn(4, 4, |i, j| (1 + i + 2 * j) as f64);
        let cfg = WhitenConfig {
            ridge_fraction: 0.0,
            ..Default::default()
        };
        let once = gaussianize(&x, &cfg).unwrap();
        let twice = gaussianize(&once, &cfg).unwrap();
        assert_abs_diff_eq!(covariance(&twice), DMatrix::identity(4, 4), epsilon = 1e-9);
    }

    #[test]
    fn rotation_equivariance_at_covariance_level() {
        let x = gaussian(100, 3, 5)
            * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let q = gaussian(3, 3, 6).qr().q();
        let cfg = WhitenConfig {
            ridge_fraction: 0.0,
            ..Default::default()
        };
        let a = gaussianize(&x, &cfg).unwrap();
        let b = gaussianize(&(&x * &q), &cfg).unwrap();
        assert_abs_diff_eq!(covariance(&a), covariance(&b), epsilon = 1e-9);
        // ZCA commutes with the rotation exactly
        assert_abs_diff_eq!(a * &q, b, epsilon = 1e-9);
    }

    #[test]
    fn row_normalization() {
        let x = DMatrix::from_row_slice(3, 2, &[3.0, 4.0, 1.0, 0.0, 0.0, 0.0]);
        let (y, zero) = l2_normalize_rows(&x);
        assert_abs_diff_eq!(
            y,
            DMatrix::from_row_slice(3, 2, &[0.6, 0.8, 1.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-15
        );
        assert_eq!(zero, vec![false, false, true]);
    }
}
