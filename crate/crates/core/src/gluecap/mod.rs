//! Manifold capacity via anchor points: the inner QP, the `a/b/c` moments,
//! effective dimension, radius and utility, and alignment measures.

mod capacity;
pub mod nnls;
mod pairwise;
mod qp;

pub use capacity::{
    alignment_measures, capacity_sample, draw, estimate_capacity, extract_anchors, projection_a,
    AlignmentMatrix, AnchorSet, AnchorTrace, CapacityConfig, CapacityEstimate, CapacityRun,
    CapacitySample, Moment, PINV_RCOND,
};
pub use pairwise::{
    glue_pairwise, repetition_seed, whiten_manifolds, Aggregate, PairwiseConfig, PairwiseReport,
    RepetitionRow,
};
pub use qp::{solve_inner_qp, Dichotomy, DichotomySet, PointSet, QpSolution};
