//! The full marker catalogue for one bundle.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logits::logit_markers;
use super::spectral::{nc1, numerical_rank, participation_ratio, NC1_TAU, RANK_TAU};
use super::stats::{mean_pairwise_angle, per_class_variants, sparsity, Statistic, SPARSITY_EPS};
use crate::error::{Error, Result};
use crate::featureio::{group_by_class, subsample_rows, FeatureBundle, SourceMeta};
use crate::gluecap::{glue_pairwise, Aggregate, PairwiseConfig};

/// Every marker name a report can contain.
pub const CATALOGUE: [&str; 18] = [
    "sparsity",
    "sparsity_per_class",
    "mean_covariance",
    "mean_covariance_per_class",
    "mean_distance",
    "mean_distance_per_class",
    "mean_angle",
    "mean_angle_per_class",
    "participation_ratio",
    "nc1",
    "numerical_rank",
    "confidence",
    "entropy",
    "energy",
    "d_eff",
    "r_eff",
    "psi_eff",
    "n_crit",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Baseline markers on all rows, without standard errors.
    #[default]
    Full,
    /// Baseline markers on each capacity draw, reported as mean and standard error.
    Subsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerConfig {
    pub glue: PairwiseConfig,
    pub baseline: BaselineMode,
    pub sparsity_eps: f64,
    pub rank_tau: f64,
    pub nc1_tau: f64,
    pub temperature: f64,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        MarkerConfig {
            glue: PairwiseConfig::default(),
            baseline: BaselineMode::Full,
            sparsity_eps: SPARSITY_EPS,
            rank_tau: RANK_TAU,
            nc1_tau: NC1_TAU,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerValue {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl From<Aggregate> for MarkerValue {
    fn from(a: Aggregate) -> Self {
        MarkerValue {
            value: a.mean,
            stderr: a.stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub num_samples: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub has_logits: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bundle: BundleSummary,
    pub config: MarkerConfig,
    /// Classes whose participation ratio or rank fell back to 0 (all rows equal).
    pub degenerate_classes: Vec<usize>,
    /// All-zero feature rows left out of the angle statistic.
    pub zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerReport {
    pub markers: BTreeMap<String, MarkerValue>,
    pub provenance: Provenance,
}

impl MarkerReport {
    pub fn get(&self, name: &str) -> Option<MarkerValue> {
        self.markers.get(name).copied()
    }
}

struct Baselines {
    values: Vec<(&'static str, f64)>,
    degenerate: Vec<usize>,
    zero_rows: usize,
}

fn baselines(bundle: &FeatureBundle, cfg: &MarkerConfig, seed: u64) -> Result<Baselines> {
    let features = bundle.features_f64();
    let manifolds = group_by_class(bundle);
    let mut values = Vec::new();

    let mut zero_rows = 0;
    for stat in Statistic::ALL {
        let global = match stat {
            Statistic::Sparsity => sparsity(&features, cfg.sparsity_eps),
            Statistic::MeanAngle => {
                let a = mean_pairwise_angle(&features, seed)?;
                zero_rows = a.zero_rows;
                a.value
            }
            _ => stat.compute(&features, seed)?,
        };
        let per_class = match stat {
            Statistic::Sparsity => {
                manifolds
                    .iter()
                    .map(|m| sparsity(&m.points, cfg.sparsity_eps))
                    .sum::<f64>()
                    / manifolds.len() as f64
            }
            _ => per_class_variants(stat, &manifolds, seed)?,
        };
        values.push((stat.name(), global));
        values.push((per_class_name(stat), per_class));
    }

    let pr = participation_ratio(&manifolds)?;
    let rank = numerical_rank(&manifolds, cfg.rank_tau)?;
    values.push(("participation_ratio", pr.value));
    values.push(("nc1", nc1(&manifolds, cfg.nc1_tau)?));
    values.push(("numerical_rank", rank.value));

    if let Some(logits) = bundle.logits_f64() {
        let l = logit_markers(&logits, cfg.temperature)?;
        values.push(("confidence", l.confidence));
        values.push(("entropy", l.entropy));
        values.push(("energy", l.energy));
    }

    let mut degenerate = pr.degenerate_classes;
    degenerate.extend(rank.degenerate_classes);
    degenerate.sort_unstable();
    degenerate.dedup();
    Ok(Baselines {
        values,
        degenerate,
        zero_rows,
    })
}

fn per_class_name(stat: Statistic) -> &'static str {
    match stat {
        Statistic::Sparsity => "sparsity_per_class",
        Statistic::MeanCovariance => "mean_covariance_per_class",
        Statistic::MeanDistance => "mean_distance_per_class",
        Statistic::MeanAngle => "mean_angle_per_class",
    }
}

const CAPACITY_MARKERS: [&str; 4] = ["d_eff", "r_eff", "psi_eff", "n_crit"];
const LOGIT_MARKERS: [&str; 3] = ["confidence", "entropy", "energy"];

/// Computes every catalogue marker. Capacity markers always come from
/// repeated class draws and carry standard errors; logit markers are left out
/// when the bundle has no logits.
pub fn compute_all(bundle: &FeatureBundle, cfg: &MarkerConfig) -> Result<MarkerReport> {
    compute_selected(bundle, cfg, None).map(|(report, _)| report)
}

/// Like [`compute_all`] but restricted to `names` (all markers when `None`).
/// Only the marker groups that are asked for are computed. Returns warnings for
/// requested markers that could not be produced.
pub fn compute_selected(
    bundle: &FeatureBundle,
    cfg: &MarkerConfig,
    names: Option<&[String]>,
) -> Result<(MarkerReport, Vec<String>)> {
    bundle.validate()?;
    if let Some(names) = names {
        if let Some(bad) = names.iter().find(|n| !CATALOGUE.contains(&n.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown marker {bad}")));
        }
    }
    let wanted = |n: &str| names.is_none_or(|names| names.iter().any(|x| x == n));
    let want_glue = CAPACITY_MARKERS.iter().any(|n| wanted(n));
    let want_baseline = CATALOGUE
        .iter()
        .any(|n| !CAPACITY_MARKERS.contains(n) && wanted(n));

    let seed = cfg.glue.subsample.seed;
    let mut markers = BTreeMap::new();
    let (degenerate_classes, zero_rows) = match cfg.baseline {
        _ if !want_baseline => (Vec::new(), 0),
        BaselineMode::Full => {
            let b = baselines(bundle, cfg, seed)?;
            for (name, value) in b.values {
                markers.insert(
                    name.to_string(),
                    MarkerValue {
                        value,
                        stderr: None,
                    },
                );
            }
            (b.degenerate, b.zero_rows)
        }
        BaselineMode::Subsample => {
            let spec = cfg.glue.subsample;
            spec.validate(bundle)?;
            let reps: Vec<Baselines> = (0..spec.repetitions)
                .into_par_iter()
                .map(|rep| {
                    let draw = subsample_rows(bundle, &spec, rep)?;
                    let mut b = baselines(&draw_bundle(bundle, &draw)?, cfg, seed)?;
                    for k in &mut b.degenerate {
                        *k = draw[*k].0;
                    }
                    Ok(b)
                })
                .collect::<Result<_>>()?;
            let mut by_name: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for rep in &reps {
                for &(name, value) in &rep.values {
                    by_name.entry(name).or_default().push(value);
                }
            }
            for (name, values) in by_name {
                if let Some(a) = Aggregate::of(values) {
                    markers.insert(name.to_string(), a.into());
                }
            }
            let mut degenerate: Vec<usize> =
                reps.iter().flat_map(|r| r.degenerate.clone()).collect();
            degenerate.sort_unstable();
            degenerate.dedup();
            (degenerate, reps.iter().map(|r| r.zero_rows).sum())
        }
    };

    if want_glue {
        let glue = glue_pairwise(bundle, &cfg.glue)?;
        for name in CAPACITY_MARKERS {
            if let Some(a) = glue.aggregate.get(name) {
                markers.insert(name.to_string(), (*a).into());
            }
        }
    }
    markers.retain(|name, _| wanted(name));

    let mut warnings = Vec::new();
    for name in CATALOGUE {
        if names.is_some() && wanted(name) && !markers.contains_key(name) {
            let why = if LOGIT_MARKERS.contains(&name) && bundle.logits.is_none() {
                "bundle has no logits"
            } else {
                "undefined on this data"
            };
            warnings.push(format!("marker {name} absent: {why}"));
        }
    }

    let report = MarkerReport {
        markers,
        provenance: Provenance {
            bundle: BundleSummary {
                num_samples: bundle.num_samples(),
                feature_dim: bundle.feature_dim(),
                num_classes: bundle.num_classes,
                has_logits: bundle.logits.is_some(),
                source: bundle.source.clone(),
            },
            config: *cfg,
            degenerate_classes,
            zero_rows,
        },
    };
    Ok((report, warnings))
}

/// The rows of one draw as a bundle whose classes are numbered in draw order.
fn draw_bundle(bundle: &FeatureBundle, draw: &[(usize, Vec<usize>)]) -> Result<FeatureBundle> {
    let rows: Vec<usize> = draw.iter().flat_map(|(_, r)| r.iter().copied()).collect();
    let labels = draw
        .iter()
        .enumerate()
        .flat_map(|(k, (_, r))| std::iter::repeat_n(k as u32, r.len()))
        .collect();
    let features = DMatrix::from_fn(rows.len(), bundle.feature_dim(), |i, j| {
        bundle.features[(rows[i], j)]
    });
    let logits = bundle
        .logits
        .as_ref()
        .map(|l| DMatrix::from_fn(rows.len(), l.ncols(), |i, j| l[(rows[i], j)]));
    FeatureBundle::new(features, labels, draw.len(), logits)
}
