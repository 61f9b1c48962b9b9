//! Linear probes: multinomial logistic regression on frozen features,
//! trained with Adam on shuffled mini-batches.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureio::FeatureBundle;
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub moment_decay_1: f64,
    pub moment_decay_2: f64,
    pub stabilizer: f64,
    pub bias: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 256,
            seed: 0,
            moment_decay_1: 0.9,
            moment_decay_2: 0.999,
            stabilizer: 1e-8,
            bias: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the whole training set after the epoch.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// `N × P_out`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub training_curve: Vec<EpochStats>,
}

impl ProbeModel {
    pub fn logits(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = features * &self.weights;
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        z
    }

    /// Argmax class per row; ties go to the lowest class index.
    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<u32> {
        self.logits(features)
            .row_iter()
            .map(|r| argmax(r.iter().copied()) as u32)
            .collect()
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

/// Row-wise softmax in place; returns the summed cross-entropy against `labels`.
fn softmax_xent(z: &mut DMatrix<f64>, labels: &[u32]) -> f64 {
    let mut loss = 0.0;
    for (i, mut row) in z.row_iter_mut().enumerate() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
        loss -= row[labels[i] as usize].max(f64::MIN_POSITIVE).ln();
    }
    loss
}

fn accuracy(pred: &[u32], labels: &[u32]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

struct Adam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    step: i32,
}

impl Adam {
    fn new(rows: usize, cols: usize) -> Self {
        Adam {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
            step: 0,
        }
    }

    fn update(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, cfg: &ProbeConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.moment_decay_1, cfg.moment_decay_2);
        self.m.zip_apply(grad, |m, g| *m = b1 * *m + (1.0 - b1) * g);
        self.v
            .zip_apply(grad, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for ((p, m), v) in param.iter_mut().zip(self.m.iter()).zip(self.v.iter()) {
            *p -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.stabilizer);
        }
    }
}

/// Trains the probe from zero weights. Batches follow a per-epoch shuffle
/// drawn from the configured seed, so the result depends only on the data
/// and the config.
pub fn train_probe(train: &FeatureBundle, cfg: &ProbeConfig) -> Result<ProbeModel> {
    cfg.validate()?;
    train.validate()?;
    let x = train.features_f64();
    let (m, n) = x.shape();
    let p = train.num_classes;
    let labels = &train.labels;

    // weights and bias packed as one (N + 1) × P parameter matrix
    let mut theta = DMatrix::<f64>::zeros(n + 1, p);
    let mut adam = Adam::new(n + 1, p);
    let mut order: Vec<usize> = (0..m).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, Stream::Probe, epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = DMatrix::from_fn(batch.len(), n + 1, |i, j| {
                if j < n {
                    x[(batch[i], j)]
                } else {
                    1.0
                }
            });
            let yb: Vec<u32> = batch.iter().map(|&r| labels[r]).collect();
            let mut probs = &xb * &theta;
            softmax_xent(&mut probs, &yb);
            for (i, &y) in yb.iter().enumerate() {
                probs[(i, y as usize)] -= 1.0;
            }
            let mut grad = xb.tr_mul(&probs) / batch.len() as f64;
            if !cfg.bias {
                grad.row_mut(n).fill(0.0);
            }
            adam.update(&mut theta, &grad, cfg);
        }

        let model = unpack(&theta, n, Vec::new());
        let mut z = model.logits(&x);
        let pred: Vec<u32> = z
            .row_iter()
            .map(|r| argmax(r.iter().copied()) as u32)
            .collect();
        let loss = softmax_xent(&mut z, labels) / m as f64;
        if !loss.is_finite() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        curve.push(EpochStats {
            epoch,
            loss,
            accuracy: accuracy(&pred, labels),
        });
    }
    Ok(unpack(&theta, n, curve))
}

fn unpack(theta: &DMatrix<f64>, n: usize, curve: Vec<EpochStats>) -> ProbeModel {
    ProbeModel {
        weights: theta.rows(0, n).into_owned(),
        bias: theta.row(n).transpose(),
        training_curve: curve,
    }
}

/// Fraction of rows whose argmax class equals the label.
pub fn evaluate_probe(model: &ProbeModel, test: &FeatureBundle) -> Result<f64> {
    if test.feature_dim() != model.weights.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "probe expects {} features, bundle has {}",
            model.weights.nrows(),
            test.feature_dim()
        )));
    }
    if test.num_classes != model.weights.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "probe has {} outputs, bundle has {} classes",
            model.weights.ncols(),
            test.num_classes
        )));
    }
    if test.num_samples() == 0 {
        return Err(Error::InvalidArgument("empty test bundle".into()));
    }
    Ok(accuracy(&model.predict(&test.features_f64()), &test.labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub train_acc: f64,
    pub test_acc: f64,
    pub per_seed: Vec<SeedResult>,
    pub config: ProbeConfig,
}

/// Trains `repeats` probes with seeds derived from `cfg.seed` and averages
/// their accuracies.
pub fn run_probe(
    train: &FeatureBundle,
    test: &FeatureBundle,
    cfg: &ProbeConfig,
    repeats: usize,
) -> Result<ProbeResult> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let per_seed: Vec<SeedResult> = (0..repeats)
        .into_par_iter()
        .map(|k| {
            let seed = if repeats == 1 {
                cfg.seed
            } else {
                derive_seed(cfg.seed, k as u64)
            };
            let model = train_probe(train, &ProbeConfig { seed, ..*cfg })?;
            let last = model.training_curve.last().copied();
            Ok(SeedResult {
                seed,
                train_acc: evaluate_probe(&model, train)?,
                test_acc: evaluate_probe(&model, test)?,
                final_loss: last.map_or(f64::NAN, |s| s.loss),
            })
        })
        .collect::<Result<_>>()?;
    let r = per_seed.len() as f64;
    Ok(ProbeResult {
        train_acc: per_seed.iter().map(|s| s.train_acc).sum::<f64>() / r,
        test_acc: per_seed.iter().map(|s| s.test_acc).sum::<f64>() / r,
        per_seed,
        config: *cfg,
    })
}
