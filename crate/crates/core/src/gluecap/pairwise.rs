//! Repeated subsample → gaussianize → capacity analysis over class pairs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::capacity::{estimate_capacity, CapacityConfig, CapacityEstimate};
use super::qp::DichotomySet;
use crate::error::Result;
use crate::featureio::{subsample, ClassManifold, FeatureBundle, SubsampleSpec};
use crate::preprocess::WhitenConfig;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PairwiseConfig {
    pub subsample: SubsampleSpec,
    pub whiten: WhitenConfig,
    /// `seed` here is ignored; each repetition derives its own from the subsample seed.
    pub capacity: CapacityConfig,
    pub dichotomies: DichotomySet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRow {
    pub rep: usize,
    pub class_pair: Vec<usize>,
    pub d_eff: f64,
    pub r_eff: Option<f64>,
    pub psi_eff: f64,
    pub n_crit: f64,
    pub alpha: Option<f64>,
    pub fallback_count: usize,
    pub n_converged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation over repetitions divided by `sqrt(n)`;
    /// absent with fewer than two values.
    pub stderr: Option<f64>,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Aggregate> {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = (n > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Aggregate { mean, stderr, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub rows: Vec<RepetitionRow>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub config: PairwiseConfig,
}

/// Capacity seed used for repetition `rep`.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed ^ 0x6c75_6563_6170, rep as u64)
}

/// Whitens the stacked points of several manifolds together and splits them
/// back per class.
pub fn whiten_manifolds(
    manifolds: &[ClassManifold],
    cfg: &WhitenConfig,
) -> Result<Vec<ClassManifold>> {
    let Some(first) = manifolds.first() else {
        return Ok(Vec::new());
    };
    let n = first.dim();
    let total: usize = manifolds.iter().map(|m| m.num_points()).sum();
    let mut stacked = DMatrix::zeros(total, n);
    let mut offset = 0;
    for m in manifolds {
        stacked
            .rows_mut(offset, m.num_points())
            .copy_from(&m.points);
        offset += m.num_points();
    }
    let white = cfg.apply(&stacked)?;
    let mut offset = 0;
    Ok(manifolds
        .iter()
        .map(|m| {
            let rows = white.rows(offset, m.num_points()).into_owned();
            offset += m.num_points();
            ClassManifold::new(m.class_id, rows)
        })
        .collect())
}

pub(crate) fn run_repetition(
    bundle: &FeatureBundle,
    cfg: &PairwiseConfig,
    rep: usize,
) -> Result<(Vec<usize>, CapacityEstimate)> {
    let drawn = subsample(bundle, &cfg.subsample, rep)?;
    let classes = drawn.iter().map(|m| m.class_id).collect();
    let manifolds = whiten_manifolds(&drawn, &cfg.whiten)?;
    let dichotomies = cfg.dichotomies.build(manifolds.len())?;
    let capacity = CapacityConfig {
        seed: repetition_seed(cfg.subsample.seed, rep),
        store_anchors: false,
        ..cfg.capacity
    };
    let run = estimate_capacity(&manifolds, &dichotomies, &capacity)?;
    Ok((classes, run.estimate))
}

/// Effective geometry averaged over `repetitions` random class draws.
pub fn glue_pairwise(bundle: &FeatureBundle, cfg: &PairwiseConfig) -> Result<PairwiseReport> {
    cfg.subsample.validate(bundle)?;
    let rows: Vec<RepetitionRow> = (0..cfg.subsample.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (class_pair, est) = run_repetition(bundle, cfg, rep)?;
            Ok(RepetitionRow {
                rep,
                class_pair,
                d_eff: est.d_eff,
                r_eff: est.r_eff,
                psi_eff: est.psi_eff,
                n_crit: est.n_crit,
                alpha: est.alpha,
                fallback_count: est.fallback_count,
                n_converged: est.n_converged,
            })
        })
        .collect::<Result<_>>()?;

    let mut aggregate = BTreeMap::new();
    let mut put = |name: &str, values: Vec<f64>| {
        if let Some(a) = Aggregate::of(values) {
            aggregate.insert(name.to_string(), a);
        }
    };
    put("d_eff", rows.iter().map(|r| r.d_eff).collect());
    put("r_eff", rows.iter().filter_map(|r| r.r_eff).collect());
    put("psi_eff", rows.iter().map(|r| r.psi_eff).collect());
    put("n_crit", rows.iter().map(|r| r.n_crit).collect());
    put("alpha", rows.iter().filter_map(|r| r.alpha).collect());
    Ok(PairwiseReport {
        rows,
        aggregate,
        config: *cfg,
    })
}
