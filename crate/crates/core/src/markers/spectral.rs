//! Covariance-spectrum markers: participation ratio, numerical rank and NC1.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureio::ClassManifold;
use crate::preprocess::covariance;

pub const RANK_TAU: f64 = 1e-3;
pub const NC1_TAU: f64 = 1e-3;
/// Eigenvalues down to this negative value count as rounding noise and are clipped to 0.
const NEG_CLIP: f64 = -1e-10;

/// Eigenvalues of one class covariance, in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub class_id: usize,
    pub values: Vec<f64>,
}

impl SpectrumSummary {
    pub fn of(manifold: &ClassManifold) -> Result<Self> {
        if manifold.num_points() < 2 {
            return Err(Error::ClassTooSmall {
                class: manifold.class_id,
                available: manifold.num_points(),
                requested: 2,
            });
        }
        Ok(SpectrumSummary {
            class_id: manifold.class_id,
            values: sorted_spectrum(&covariance(&manifold.points))?,
        })
    }
}

fn sorted_spectrum(sym: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(sym.clone());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if let Some(&v) = values
        .iter()
        .find(|&&v| v < NEG_CLIP * values.iter().fold(1.0f64, |a, &b| a.max(b.abs())))
    {
        return Err(Error::Numerical(format!(
            "covariance has negative eigenvalue {v}"
        )));
    }
    for v in &mut values {
        *v = v.max(0.0);
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Class average with the classes whose value fell back to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAverage {
    pub value: f64,
    pub per_class: Vec<f64>,
    pub degenerate_classes: Vec<usize>,
}

fn class_average(
    manifolds: &[ClassManifold],
    f: impl Fn(&[f64]) -> Option<f64> + Sync,
) -> Result<ClassAverage> {
    if manifolds.is_empty() {
        return Err(Error::InvalidArgument("no classes".into()));
    }
    let results: Vec<(usize, Option<f64>)> = manifolds
        .par_iter()
        .map(|m| SpectrumSummary::of(m).map(|s| (m.class_id, f(&s.values))))
        .collect::<Result<_>>()?;
    let per_class: Vec<f64> = results.iter().map(|r| r.1.unwrap_or(0.0)).collect();
    let degenerate_classes = results
        .iter()
        .filter(|r| r.1.is_none())
        .map(|r| r.0)
        .collect();
    Ok(ClassAverage {
        value: per_class.iter().sum::<f64>() / per_class.len() as f64,
        per_class,
        degenerate_classes,
    })
}

/// `(Σλ)² / Σλ²`; `None` for an all-zero spectrum.
pub fn pr_from_spectrum(values: &[f64]) -> Option<f64> {
    let s: f64 = values.iter().sum();
    let s2: f64 = values.iter().map(|v| v * v).sum();
    (s2 > 0.0).then(|| s * s / s2)
}

/// Count of values `≥ tau · max`; `None` when the largest value is 0.
pub fn rank_from_spectrum(values: &[f64], tau: f64) -> Option<usize> {
    let top = values.iter().copied().fold(0.0, f64::max);
    (top > 0.0).then(|| values.iter().filter(|&&v| v >= tau * top).count())
}

/// Participation ratio of each class covariance, averaged over classes.
pub fn participation_ratio(manifolds: &[ClassManifold]) -> Result<ClassAverage> {
    class_average(manifolds, pr_from_spectrum)
}

/// Retained covariance spectrum size per class, averaged over classes.
pub fn numerical_rank(manifolds: &[ClassManifold], tau: f64) -> Result<ClassAverage> {
    class_average(manifolds, |v| rank_from_spectrum(v, tau).map(|r| r as f64))
}

/// Pooled within-class and between-class covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub sigma_w: DMatrix<f64>,
    pub sigma_b: DMatrix<f64>,
    pub num_classes: usize,
}

impl ScatterPair {
    /// `Σ_W` averages the class covariances weighted by class size; `Σ_B` is
    /// the mean outer product of class means about the global mean.
    pub fn from_manifolds(manifolds: &[ClassManifold]) -> Result<Self> {
        let p = manifolds.len();
        if p < 2 {
            return Err(Error::InvalidArgument(
                "NC1 needs at least two classes".into(),
            ));
        }
        let n = manifolds[0].dim();
        let total: usize = manifolds.iter().map(|m| m.num_points()).sum();
        let mut global = nalgebra::DVector::zeros(n);
        for m in manifolds {
            global += m.points.row_sum().transpose();
        }
        global /= total as f64;

        let mut sigma_w = DMatrix::zeros(n, n);
        let mut sigma_b = DMatrix::zeros(n, n);
        for m in manifolds {
            if m.num_points() < 2 {
                return Err(Error::ClassTooSmall {
                    class: m.class_id,
                    available: m.num_points(),
                    requested: 2,
                });
            }
            sigma_w += covariance(&m.points) * m.num_points() as f64;
            let d = m.centroid() - &global;
            sigma_b += &d * d.transpose();
        }
        Ok(ScatterPair {
            sigma_w: sigma_w / total as f64,
            sigma_b: sigma_b / p as f64,
            num_classes: p,
        })
    }
}

/// `tr(Σ_W Σ_B†) / P` with `Σ_B` truncated to eigenvalues `≥ tau · λ_max`.
pub fn nc1_from_scatter(s: &ScatterPair, tau: f64) -> Result<f64> {
    let eig = SymmetricEigen::new(s.sigma_b.clone());
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::Numerical("between-class covariance is zero".into()));
    }
    let mut trace = 0.0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda >= tau * top {
            let v = eig.eigenvectors.column(i);
            trace += v.dot(&(&s.sigma_w * v)) / lambda;
        }
    }
    Ok(trace / s.num_classes as f64)
}

pub fn nc1(manifolds: &[ClassManifold], tau: f64) -> Result<f64> {
    nc1_from_scatter(&ScatterPair::from_manifolds(manifolds)?, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pr_of_known_spectra() {
        assert!((pr_from_spectrum(&[2.0, 1.0, 1.0]).unwrap() - 16.0 / 6.0).abs() < 1e-12);
        assert!((pr_from_spectrum(&[3.0; 7]).unwrap() - 7.0).abs() < 1e-12);
        assert_eq!(pr_from_spectrum(&[5.0, 0.0]).unwrap(), 1.0);
        assert_eq!(pr_from_spectrum(&[0.0, 0.0]), None);
    }

    #[test]
    fn rank_thresholds() {
        assert_eq!(rank_from_spectrum(&[1.0, 5e-4, 1e-5], 1e-3), Some(1));
        assert_eq!(rank_from_spectrum(&[1.0, 1e-3], 1e-3), Some(2));
        assert_eq!(rank_from_spectrum(&[0.0, 0.0], 1e-3), None);
    }

    #[test]
    fn repeated_point_is_degenerate() {
        let m = ClassManifold::new(4, DMatrix::from_element(5, 3, 1.5));
        let r = numerical_rank(std::slice::from_ref(&m), RANK_TAU).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.degenerate_classes, vec![4]);
        assert_eq!(
            participation_ratio(&[m]).unwrap().degenerate_classes,
            vec![4]
        );
    }

    #[test]
    fn nc1_identity_scatter() {
        let n = 6;
        for p in [2, 3, 5] {
            let s = ScatterPair {
                sigma_w: DMatrix::identity(n, n),
                sigma_b: DMatrix::identity(n, n),
                num_classes: p,
            };
            assert!((nc1_from_scatter(&s, NC1_TAU).unwrap() - n as f64 / p as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn nc1_zero_within_class() {
        let a = ClassManifold::new(0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]));
        let b = ClassManifold::new(1, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]));
        assert_eq!(nc1(&[a, b], NC1_TAU).unwrap(), 0.0);
    }

    #[test]
    fn nc1_rejects_identical_means() {
        let a = ClassManifold::new(0, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        let b = ClassManifold::new(1, DMatrix::from_row_slice(2, 1, &[2.0, -2.0]));
        assert!(nc1(&[a, b], NC1_TAU).is_err());
    }
}
