//! Statistical summaries of raw features.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureio::ClassManifold;
use crate::preprocess::{covariance, l2_normalize_rows};
use crate::rng::{stream_rng, Stream};

pub const SPARSITY_EPS: f64 = 1e-6;
/// Above this many rows, pairwise statistics switch to sampled pairs.
pub const EXACT_PAIR_LIMIT: usize = 10_000;
pub const SAMPLED_PAIRS: usize = 1_000_000;

/// Fraction of entries with `|z| > eps`.
pub fn sparsity(features: &DMatrix<f64>, eps: f64) -> f64 {
    if features.is_empty() {
        return 0.0;
    }
    let hits = features.iter().filter(|v| v.abs() > eps).count();
    hits as f64 / features.len() as f64
}

/// Mean absolute off-diagonal entry of the feature covariance.
pub fn mean_covariance(features: &DMatrix<f64>) -> Result<f64> {
    let (m, n) = features.shape();
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "mean covariance needs at least 2 rows and 2 columns, got {m}×{n}"
        )));
    }
    let cov = covariance(features);
    let mut sum = 0.0;
    for j in 0..n {
        for k in j + 1..n {
            sum += cov[(j, k)].abs();
        }
    }
    Ok(2.0 * sum / (n * (n - 1)) as f64)
}

/// Mean of `f(i, j)` over unordered row pairs, exact up to
/// [`EXACT_PAIR_LIMIT`] rows and over seeded uniform pairs above it.
fn pair_mean<F>(m: usize, seed: u64, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if m <= EXACT_PAIR_LIMIT {
        let partial: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| (i + 1..m).map(|j| f(i, j)).sum())
            .collect();
        let pairs = m * (m - 1) / 2;
        partial.iter().sum::<f64>() / pairs as f64
    } else {
        let mut rng = stream_rng(seed, Stream::PairSample, m as u64);
        let pairs: Vec<(usize, usize)> = (0..SAMPLED_PAIRS)
            .map(|_| {
                let i = rng.gen_range(0..m);
                let mut j = rng.gen_range(0..m - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect();
        let values: Vec<f64> = pairs.par_iter().map(|&(i, j)| f(i, j)).collect();
        values.iter().sum::<f64>() / SAMPLED_PAIRS as f64
    }
}

/// Mean Euclidean distance over row pairs.
pub fn mean_pairwise_distance(features: &DMatrix<f64>, seed: u64) -> Result<f64> {
    let m = features.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "pairwise distance needs at least 2 rows".into(),
        ));
    }
    let rows: Vec<_> = features.row_iter().map(|r| r.into_owned()).collect();
    Ok(pair_mean(m, seed, |i, j| (&rows[i] - &rows[j]).norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleStat {
    /// Mean angle in radians.
    pub value: f64,
    /// Zero rows, which have no direction and are left out.
    pub zero_rows: usize,
}

/// Mean angle `arccos(cos_sim)` over pairs of nonzero rows.
///
/// The angle is evaluated as `2·atan2(‖u − v‖, ‖u + v‖)` on the unit rows,
/// which equals the arccosine but stays accurate near 0 and π.
pub fn mean_pairwise_angle(features: &DMatrix<f64>, seed: u64) -> Result<AngleStat> {
    let (unit, zero) = l2_normalize_rows(features);
    let rows: Vec<_> = unit
        .row_iter()
        .zip(&zero)
        .filter(|(_, &z)| !z)
        .map(|(r, _)| r.into_owned())
        .collect();
    let zero_rows = zero.iter().filter(|&&z| z).count();
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pairwise angle needs at least 2 nonzero rows, {} of {} rows are zero",
            zero_rows,
            features.nrows()
        )));
    }
    let value = pair_mean(rows.len(), seed, |i, j| {
        2.0 * (&rows[i] - &rows[j])
            .norm()
            .atan2((&rows[i] + &rows[j]).norm())
    });
    Ok(AngleStat { value, zero_rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Sparsity,
    MeanCovariance,
    MeanDistance,
    MeanAngle,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::Sparsity,
        Statistic::MeanCovariance,
        Statistic::MeanDistance,
        Statistic::MeanAngle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Sparsity => "sparsity",
            Statistic::MeanCovariance => "mean_covariance",
            Statistic::MeanDistance => "mean_distance",
            Statistic::MeanAngle => "mean_angle",
        }
    }

    pub fn compute(self, features: &DMatrix<f64>, seed: u64) -> Result<f64> {
        match self {
            Statistic::Sparsity => Ok(sparsity(features, SPARSITY_EPS)),
            Statistic::MeanCovariance => mean_covariance(features),
            Statistic::MeanDistance => mean_pairwise_distance(features, seed),
            Statistic::MeanAngle => mean_pairwise_angle(features, seed).map(|a| a.value),
        }
    }
}

/// The statistic computed within each class, averaged over classes without
/// weighting by class size.
pub fn per_class_variants(
    statistic: Statistic,
    manifolds: &[ClassManifold],
    seed: u64,
) -> Result<f64> {
    if manifolds.is_empty() {
        return Err(Error::InvalidArgument("no classes".into()));
    }
    let values: Vec<f64> = manifolds
        .par_iter()
        .map(|m| statistic.compute(&m.points, seed))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
