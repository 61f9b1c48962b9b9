//! Synthetic feature generators used as validation fixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FeatureBundle, SourceMeta};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub intrinsic_dim: usize,
    pub radius: f64,
    pub ambient_dim: usize,
    pub num_classes: usize,
    pub points_per_class: usize,
    pub seed: u64,
    /// All classes share one axis frame (centers stay mutually orthogonal).
    #[serde(default)]
    pub shared_frame: bool,
}

/// Center and axis frame (`N × D`, orthonormal columns) of one generated sphere.
#[derive(Debug, Clone)]
pub struct SphereFrame {
    pub center: DVector<f64>,
    pub axes: DMatrix<f64>,
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Filled row by row so the draw order does not depend on storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// `k` orthonormal columns in `R^n` from a Gaussian draw.
pub(crate) fn orthonormal_columns<R: Rng>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    gaussian_matrix(rng, n, k).qr().q()
}

/// Samples `P` spheres `c_μ + R·U_μ·v`, `v` uniform on the unit sphere of `R^D`,
/// with unit-norm centers and mutually orthonormal centers and frames.
pub fn gen_spheres(spec: &SphereSpec) -> Result<FeatureBundle> {
    gen_spheres_with_frames(spec).map(|(b, _)| b)
}

pub fn gen_spheres_with_frames(spec: &SphereSpec) -> Result<(FeatureBundle, Vec<SphereFrame>)> {
    let (d, n, p) = (spec.intrinsic_dim, spec.ambient_dim, spec.num_classes);
    if p == 0 || spec.points_per_class == 0 {
        return Err(Error::InvalidArgument(
            "need at least one class and one point".into(),
        ));
    }
    if spec.radius.is_nan() || spec.radius < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "radius {} is negative",
            spec.radius
        )));
    }
    let needed = if spec.shared_frame {
        p + d
    } else {
        (d + 1) * p
    };
    if d + 1 > n || needed > n {
        return Err(Error::InvalidArgument(format!(
            "{needed} orthogonal directions do not fit in ambient dimension {n}"
        )));
    }

    let mut rng = stream_rng(spec.seed, Stream::Spheres, 0);
    let basis = orthonormal_columns(&mut rng, n, needed);
    let frames: Vec<SphereFrame> = (0..p)
        .map(|mu| {
            let (center_col, axes_start) = if spec.shared_frame {
                (mu, p)
            } else {
                (mu * (d + 1), mu * (d + 1) + 1)
            };
            SphereFrame {
                center: basis.column(center_col).into_owned(),
                axes: basis.columns(axes_start, d).into_owned(),
            }
        })
        .collect();

    let m = p * spec.points_per_class;
    let mut features = DMatrix::<f32>::zeros(m, n);
    let mut labels = Vec::with_capacity(m);
    for (mu, frame) in frames.iter().enumerate() {
        for k in 0..spec.points_per_class {
            let mut point = frame.center.clone();
            if d > 0 {
                let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
                let v = v.normalize();
                point += &frame.axes * v * spec.radius;
            }
            let row = mu * spec.points_per_class + k;
            for j in 0..n {
                features[(row, j)] = point[j] as f32;
            }
            labels.push(mu as u32);
        }
    }
    let bundle = FeatureBundle::new(features, labels, p, None)?.with_source(SourceMeta::synthetic(
        "spheres",
        "uncorrelated-spheres",
        "train",
    ));
    Ok((bundle, frames))
}

/// Paired in-distribution / out-of-distribution fixture with tunable compression.
///
/// A latent space of `latent_dim` modes is embedded isometrically in the
/// `ambient_dim`-dimensional feature space. The simulated network passes the
/// first `discriminative_modes` modes and a `1 - compression` share of the
/// remaining nuisance modes, and zeroes the rest. ID classes differ along the
/// discriminative modes only and vary along all modes; OOD classes have random
/// means spread over all modes. Suppressing modes therefore shrinks the ID
/// manifolds' span and removes OOD class separation at the same time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub compression: f64,
    pub seed: u64,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub discriminative_modes: usize,
    pub id_classes: usize,
    pub id_points_per_class: usize,
    pub ood_classes: usize,
    pub ood_points_per_class: usize,
    pub id_mean_scale: f64,
    pub ood_mean_scale: f64,
    pub within_std: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            compression: 0.0,
            seed: 0,
            ambient_dim: 64,
            latent_dim: 48,
            discriminative_modes: 4,
            id_classes: 4,
            id_points_per_class: 100,
            ood_classes: 10,
            ood_points_per_class: 200,
            id_mean_scale: 4.0,
            ood_mean_scale: 0.45,
            within_std: 1.0,
        }
    }
}

impl PlantedSpec {
    /// Number of latent modes that survive the simulated network.
    pub fn kept_modes(&self) -> usize {
        let nuisance = self.latent_dim - self.discriminative_modes;
        let kept = ((1.0 - self.compression) * nuisance as f64).round() as usize;
        self.discriminative_modes + kept.min(nuisance)
    }
}

pub fn gen_planted_pair(compression: f64, seed: u64) -> Result<(FeatureBundle, FeatureBundle)> {
    gen_planted(&PlantedSpec {
        compression,
        seed,
        ..Default::default()
    })
}

pub fn gen_planted(spec: &PlantedSpec) -> Result<(FeatureBundle, FeatureBundle)> {
    if !(0.0..=1.0).contains(&spec.compression) {
        return Err(Error::InvalidArgument(format!(
            "compression {} outside [0, 1]",
            spec.compression
        )));
    }
    if spec.latent_dim > spec.ambient_dim
        || spec.discriminative_modes == 0
        || spec.discriminative_modes > spec.latent_dim
    {
        return Err(Error::InvalidArgument(
            "inconsistent planted dimensions".into(),
        ));
    }
    let l = spec.latent_dim;
    let kept = spec.kept_modes();

    // Basis and OOD class means are shared across compression levels for a
    // given seed, so a sweep over compression varies only the network.
    let mut rng = stream_rng(spec.seed, Stream::Planted, 0);
    let basis = orthonormal_columns(&mut rng, spec.ambient_dim, l);
    let ood_means = gaussian_matrix(&mut rng, spec.ood_classes, l) * spec.ood_mean_scale;
    let id_means = DMatrix::from_fn(spec.id_classes, l, |k, j| {
        if j == k % spec.discriminative_modes {
            let sign = if (k / spec.discriminative_modes).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            sign * spec.id_mean_scale
        } else {
            0.0
        }
    });

    let embed = |latent: &DMatrix<f64>| -> DMatrix<f32> {
        let mut masked = latent.clone();
        for j in kept..l {
            masked.column_mut(j).fill(0.0);
        }
        (masked * basis.transpose()).map(|x| x as f32)
    };

    let sample = |means: &DMatrix<f64>, per_class: usize, stream: u64| {
        let mut noise_rng = stream_rng(spec.seed, Stream::Planted, stream);
        let classes = means.nrows();
        let mut latent = DMatrix::zeros(classes * per_class, l);
        let mut labels = Vec::with_capacity(classes * per_class);
        for k in 0..classes {
            for i in 0..per_class {
                let row = k * per_class + i;
                for j in 0..l {
                    let eps: f64 = noise_rng.sample(StandardNormal);
                    latent[(row, j)] = means[(k, j)] + spec.within_std * eps;
                }
                labels.push(k as u32);
            }
        }
        (latent, labels)
    };

    let (id_latent, id_labels) = sample(&id_means, spec.id_points_per_class, 1);
    let (ood_latent, ood_labels) = sample(&ood_means, spec.ood_points_per_class, 2);
    let tag = format!("planted-c{:.4}", spec.compression);
    let id = FeatureBundle::new(embed(&id_latent), id_labels, spec.id_classes, None)?
        .with_source(SourceMeta::synthetic("planted", &tag, "id"));
    let ood = FeatureBundle::new(embed(&ood_latent), ood_labels, spec.ood_classes, None)?
        .with_source(SourceMeta::synthetic("planted", &tag, "ood"));
    Ok((id, ood))
}
