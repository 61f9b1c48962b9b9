use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::FeatureBundle;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// One class's point cloud, rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassManifold {
    pub class_id: usize,
    pub points: DMatrix<f64>,
}

impl ClassManifold {
    pub fn new(class_id: usize, points: DMatrix<f64>) -> Self {
        ClassManifold { class_id, points }
    }

    pub fn num_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn centroid(&self) -> nalgebra::DVector<f64> {
        self.points.row_mean().transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub classes_per_draw: usize,
    pub points_per_class: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SubsampleSpec {
    fn default() -> Self {
        SubsampleSpec {
            classes_per_draw: 2,
            points_per_class: 50,
            repetitions: 100,
            seed: 0,
        }
    }
}

impl SubsampleSpec {
    pub fn validate(&self, bundle: &FeatureBundle) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument(
                "repetitions must be at least 1".into(),
            ));
        }
        if self.classes_per_draw == 0 || self.classes_per_draw > bundle.num_classes {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {} classes from {}",
                self.classes_per_draw, bundle.num_classes
            )));
        }
        if self.points_per_class == 0 {
            return Err(Error::InvalidArgument(
                "points_per_class must be positive".into(),
            ));
        }
        let counts = bundle.class_counts();
        let (class, &available) = counts
            .iter()
            .enumerate()
            .min_by_key(|&(_, c)| *c)
            .expect("bundle has at least one class");
        if available < self.points_per_class {
            return Err(Error::ClassTooSmall {
                class,
                available,
                requested: self.points_per_class,
            });
        }
        Ok(())
    }
}

fn gather(features: &DMatrix<f32>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), features.ncols(), |i, j| {
        f64::from(features[(rows[i], j)])
    })
}

/// Splits the bundle's rows by label, classes in ascending id order.
pub fn group_by_class(bundle: &FeatureBundle) -> Vec<ClassManifold> {
    bundle
        .class_rows()
        .into_iter()
        .enumerate()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(class_id, rows)| ClassManifold::new(class_id, gather(&bundle.features, &rows)))
        .collect()
}

/// Draws the classes and points for repetition `rep_index`.
///
/// Classes are drawn uniformly without replacement and returned in ascending id
/// order; points are drawn without replacement within each class and kept in
/// ascending row order. The result depends only on `(bundle, spec, rep_index)`.
pub fn subsample(
    bundle: &FeatureBundle,
    spec: &SubsampleSpec,
    rep_index: usize,
) -> Result<Vec<ClassManifold>> {
    Ok(subsample_rows(bundle, spec, rep_index)?
        .into_iter()
        .map(|(class, rows)| ClassManifold::new(class, gather(&bundle.features, &rows)))
        .collect())
}

/// The `(class, rows)` pairs behind [`subsample`].
pub fn subsample_rows(
    bundle: &FeatureBundle,
    spec: &SubsampleSpec,
    rep_index: usize,
) -> Result<Vec<(usize, Vec<usize>)>> {
    if spec.classes_per_draw == 0 || spec.classes_per_draw > bundle.num_classes {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {} classes from {}",
            spec.classes_per_draw, bundle.num_classes
        )));
    }
    let class_rows = bundle.class_rows();
    let mut rng = stream_rng(spec.seed, Stream::Subsample, rep_index as u64);
    let mut classes = index::sample(&mut rng, bundle.num_classes, spec.classes_per_draw).into_vec();
    classes.sort_unstable();

    classes
        .into_iter()
        .map(|class| {
            let rows = &class_rows[class];
            if rows.len() < spec.points_per_class {
                return Err(Error::ClassTooSmall {
                    class,
                    available: rows.len(),
                    requested: spec.points_per_class,
                });
            }
            let mut picked: Vec<usize> = index::sample(&mut rng, rows.len(), spec.points_per_class)
                .into_iter()
                .map(|k| rows[k])
                .collect();
            picked.sort_unstable();
            Ok((class, picked))
        })
        .collect()
}

/// Manifolds of the listed classes, in the given order. With `points`, each
/// class keeps a seeded uniform subset of that many rows (in row order);
/// otherwise all of its rows.
pub fn select_classes(
    bundle: &FeatureBundle,
    classes: &[usize],
    points: Option<usize>,
    seed: u64,
) -> Result<Vec<ClassManifold>> {
    let class_rows = bundle.class_rows();
    classes
        .iter()
        .map(|&class| {
            let rows = class_rows.get(class).ok_or_else(|| {
                Error::InvalidArgument(format!("class {class} outside 0..{}", bundle.num_classes))
            })?;
            let picked: Vec<usize> = match points {
                None => rows.clone(),
                Some(k) if k > rows.len() => {
                    return Err(Error::ClassTooSmall {
                        class,
                        available: rows.len(),
                        requested: k,
                    })
                }
                Some(k) => {
                    let mut rng = stream_rng(seed, Stream::Subsample, u64::MAX - class as u64);
                    let mut p: Vec<usize> = index::sample(&mut rng, rows.len(), k)
                        .into_iter()
                        .map(|i| rows[i])
                        .collect();
                    p.sort_unstable();
                    p
                }
            };
            Ok(ClassManifold::new(class, gather(&bundle.features, &picked)))
        })
        .collect()
}

/// Stratified train/test split: within each class, `test_fraction` of the rows
/// (rounded, at least one when the class has two or more rows) go to the test side.
pub fn train_test_split(
    bundle: &FeatureBundle,
    test_fraction: f64,
    seed: u64,
) -> Result<(FeatureBundle, FeatureBundle)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, rows) in bundle.class_rows().into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall {
                class,
                available: rows.len(),
                requested: 2,
            });
        }
        let n_test =
            ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        let mut rng = stream_rng(seed, Stream::Split, class as u64);
        let mut chosen = vec![false; rows.len()];
        for k in index::sample(&mut rng, rows.len(), n_test) {
            chosen[k] = true;
        }
        for (k, &row) in rows.iter().enumerate() {
            if chosen[k] {
                test.push(row);
            } else {
                train.push(row);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((bundle.select_rows(&train)?, bundle.select_rows(&test)?))
}
