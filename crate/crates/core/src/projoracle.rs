//! Empirical critical dimension by random projection.
//!
//! `N_crit` is estimated from its definition: project the manifolds' points
//! with a Gaussian `N × N'` matrix, test homogeneous linear separability of the
//! projected points with a linear program solved by an interior-point method, and scan `N'` upward until the
//! fraction of separable projections reaches one half.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featureio::ClassManifold;
use crate::gluecap::Dichotomy;
use crate::rng::{stream_rng2, Stream};

pub const DEFAULT_MARGIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SeparabilityQuery {
    pub points: DMatrix<f64>,
    pub signs: Vec<i8>,
    pub margin_tol: f64,
}

impl SeparabilityQuery {
    pub fn new(points: DMatrix<f64>, signs: Vec<i8>) -> Self {
        SeparabilityQuery {
            points,
            signs,
            margin_tol: DEFAULT_MARGIN_TOL,
        }
    }
}

/// True iff some `w` with `‖w‖_∞ ≤ 1` gives `signs_i ⟨w, x_i⟩ ≥ m > margin_tol` for all `i`.
///
/// Rows are scaled to unit norm first (separability does not depend on
/// positive row scaling) so the margin tolerance has a fixed meaning. Zero rows
/// satisfy `⟨w, 0⟩ ≥ 0` for every `w` and are skipped.
///
/// The LP is solved by an interior-point method. Its `w` is then clamped to
/// the box and the margin recomputed from the points, so `true` always comes
/// with a checked separating direction.
pub fn check_separable(q: &SeparabilityQuery) -> Result<bool> {
    let (k, n) = q.points.shape();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "separability query without points".into(),
        ));
    }
    if q.signs.len() != k || q.signs.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidArgument(
            "signs must be ±1, one per point".into(),
        ));
    }
    // signed unit rows z_i = s_i x_i / ‖x_i‖
    let z: Vec<Vec<f64>> = q
        .points
        .row_iter()
        .zip(&q.signs)
        .filter_map(|(row, &s)| {
            let norm = row.norm();
            (norm > 0.0).then(|| row.iter().map(|v| f64::from(s) * v / norm).collect())
        })
        .collect();
    if z.is_empty() {
        return Ok(true);
    }
    if n == 0 {
        return Ok(false);
    }

    let (w, status) = solve_margin_lp(&z, n)?;
    let margin = z
        .iter()
        .map(|zi| zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if margin > q.margin_tol {
        return Ok(true);
    }
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(false),
        other => Err(Error::Numerical(format!("separability LP: {other:?}"))),
    }
}

/// Maximizes `m` over `(w, m)` subject to `m ≤ ⟨w, z_i⟩`, `‖w‖_∞ ≤ 1` and
/// `0 ≤ m ≤ 1`, and returns the box-clamped `w`. `w = 0, m = 0` is always
/// feasible and only the sign of the optimum matters, so capping `m` keeps
/// the problem bounded without changing the answer.
fn solve_margin_lp(z: &[Vec<f64>], n: usize) -> Result<(Vec<f64>, SolverStatus)> {
    let k = z.len();
    let rows = k + 2 * n + 2;
    let mut colptr = Vec::with_capacity(n + 2);
    let mut rowval = Vec::with_capacity((k + 2) * (n + 1));
    let mut nzval = Vec::with_capacity((k + 2) * (n + 1));
    colptr.push(0);
    for j in 0..n {
        for (i, zi) in z.iter().enumerate() {
            if zi[j] != 0.0 {
                rowval.push(i);
                nzval.push(-zi[j]);
            }
        }
        rowval.extend([k + 2 * j, k + 2 * j + 1]);
        nzval.extend([1.0, -1.0]);
        colptr.push(rowval.len());
    }
    rowval.extend(0..k);
    nzval.extend(std::iter::repeat_n(1.0, k));
    rowval.extend([k + 2 * n, k + 2 * n + 1]);
    nzval.extend([1.0, -1.0]);
    colptr.push(rowval.len());

    let a = CscMatrix::new(rows, n + 1, colptr, rowval, nzval);
    let p = CscMatrix::zeros((n + 1, n + 1));
    let mut c = vec![0.0; n + 1];
    c[n] = -1.0;
    let mut b = vec![0.0; rows];
    for v in &mut b[k..k + 2 * n + 1] {
        *v = 1.0;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .build()
        .map_err(|e| Error::Numerical(format!("separability LP settings: {e}")))?;
    let cones = [NonnegativeConeT(rows)];
    let mut solver = DefaultSolver::new(&p, &c, &a, &b, &cones, settings)
        .map_err(|e| Error::Numerical(format!("separability LP setup: {e}")))?;
    solver.solve();
    let w = solver.solution.x[..n]
        .iter()
        .map(|v| {
            if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok((w, solver.solution.status))
}

/// Points of all manifolds stacked, with the dichotomy's sign per point.
fn labeled_points(manifolds: &[ClassManifold], y: &Dichotomy) -> Result<(DMatrix<f64>, Vec<i8>)> {
    if manifolds.is_empty() || y.len() != manifolds.len() {
        return Err(Error::DimensionMismatch(
            "one dichotomy sign per manifold required".into(),
        ));
    }
    let n = manifolds[0].dim();
    if manifolds.iter().any(|m| m.dim() != n) {
        return Err(Error::DimensionMismatch(
            "manifolds differ in dimension".into(),
        ));
    }
    let total = manifolds.iter().map(|m| m.num_points()).sum();
    let mut points = DMatrix::zeros(total, n);
    let mut signs = Vec::with_capacity(total);
    let mut offset = 0;
    for (mu, m) in manifolds.iter().enumerate() {
        points.rows_mut(offset, m.num_points()).copy_from(&m.points);
        offset += m.num_points();
        signs.extend(std::iter::repeat_n(y.labels()[mu], m.num_points()));
    }
    Ok((points, signs))
}

fn projection(seed: u64, n: usize, n_proj: usize, trial: usize) -> DMatrix<f64> {
    let mut rng = stream_rng2(seed, Stream::Projection, n_proj as u64, trial as u64);
    let mut g = DMatrix::zeros(n, n_proj);
    for i in 0..n {
        for j in 0..n_proj {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    g
}

fn count_separable(
    points: &DMatrix<f64>,
    signs: &[i8],
    n_proj: usize,
    n_trials: usize,
    seed: u64,
) -> Result<usize> {
    let n = points.ncols();
    let outcomes: Vec<bool> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let projected = points * projection(seed, n, n_proj, trial);
            check_separable(&SeparabilityQuery::new(projected, signs.to_vec()))
        })
        .collect::<Result<_>>()?;
    Ok(outcomes.into_iter().filter(|&s| s).count())
}

/// Fraction of `n_trials` Gaussian projections to `n_proj_dim` dimensions under
/// which the manifolds stay separable.
pub fn estimate_p(
    manifolds: &[ClassManifold],
    y: &Dichotomy,
    n_proj_dim: usize,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    let (points, signs) = labeled_points(manifolds, y)?;
    if n_proj_dim == 0 || n_proj_dim > points.ncols() {
        return Err(Error::InvalidArgument(format!(
            "projection dimension {n_proj_dim} outside 1..={}",
            points.ncols()
        )));
    }
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be positive".into()));
    }
    let hits = count_separable(&points, &signs, n_proj_dim, n_trials, seed)?;
    Ok(hits as f64 / n_trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub n_max: usize,
    /// First probed dimension; the scan covers `n_min..=n_max`.
    pub n_min: usize,
    /// Stop at the first crossing instead of tracing the curve up to `n_max`.
    pub stop_at_crossing: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_trials: 500,
            seed: 0,
            n_max: 64,
            n_min: 1,
            stop_at_crossing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_prime: usize,
    pub p_hat: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcritEmpirical {
    pub n_crit: usize,
    pub p_curve: Vec<CurvePoint>,
    pub n_projections: usize,
    pub seed: u64,
}

impl NcritEmpirical {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_prime,p_hat,n_trials\n");
        for pt in &self.p_curve {
            out.push_str(&format!(
                "{},{:.16e},{}\n",
                pt.n_prime, pt.p_hat, pt.n_trials
            ));
        }
        out
    }
}

/// Scans `N'` upward and reports the first dimension with `p̂ ≥ 0.5`.
pub fn empirical_ncrit(
    manifolds: &[ClassManifold],
    y: &Dichotomy,
    cfg: &OracleConfig,
) -> Result<NcritEmpirical> {
    let (points, signs) = labeled_points(manifolds, y)?;
    let n = points.ncols();
    if cfg.n_trials == 0 || cfg.n_min == 0 || cfg.n_min > cfg.n_max {
        return Err(Error::InvalidArgument(
            "invalid oracle scan range or trial count".into(),
        ));
    }
    if !check_separable(&SeparabilityQuery::new(points.clone(), signs.clone()))? {
        return Err(Error::NotSeparable);
    }
    let n_max = cfg.n_max.min(n);
    let mut curve = Vec::new();
    let mut crossing = None;
    for n_prime in cfg.n_min..=n_max {
        let hits = count_separable(&points, &signs, n_prime, cfg.n_trials, cfg.seed)?;
        let p_hat = hits as f64 / cfg.n_trials as f64;
        curve.push(CurvePoint {
            n_prime,
            p_hat,
            n_trials: cfg.n_trials,
        });
        if crossing.is_none() && p_hat >= 0.5 {
            crossing = Some(n_prime);
            if cfg.stop_at_crossing {
                break;
            }
        }
    }
    let n_crit = crossing.ok_or(Error::NoCrossing { n_max })?;
    Ok(NcritEmpirical {
        n_crit,
        p_curve: curve,
        n_projections: cfg.n_trials,
        seed: cfg.seed,
    })
}
