//! Baseline markers: feature statistics, logit scores, participation ratio,
//! neural-collapse NC1 and numerical rank, plus the combined report.

mod logits;
mod report;
mod spectral;
mod stats;

pub use logits::{logit_markers, sample_scores, LogitMarkers};
pub use report::{
    compute_all, compute_selected, BaselineMode, BundleSummary, MarkerConfig, MarkerReport,
    MarkerValue, Provenance, CATALOGUE,
};
pub use spectral::{
    nc1, nc1_from_scatter, numerical_rank, participation_ratio, pr_from_spectrum,
    rank_from_spectrum, ClassAverage, ScatterPair, SpectrumSummary, NC1_TAU, RANK_TAU,
};
pub use stats::{
    mean_covariance, mean_pairwise_angle, mean_pairwise_distance, per_class_variants, sparsity,
    AngleStat, Statistic, EXACT_PAIR_LIMIT, SAMPLED_PAIRS, SPARSITY_EPS,
};
