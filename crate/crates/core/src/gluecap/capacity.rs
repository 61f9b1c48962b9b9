use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::qp::{Dichotomy, PointSet, QpSolution};
use crate::error::{Error, Result};
use crate::featureio::ClassManifold;
use crate::rng::{stream_rng, Stream};

/// Relative singular-value cutoff for every pseudoinverse.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AnchorSet {
    /// `P × N`, row μ is the anchor point of manifold μ.
    pub anchors: DMatrix<f64>,
    pub mass: Vec<f64>,
    pub centroid_fallback: Vec<bool>,
}

impl AnchorSet {
    pub fn fallback_count(&self) -> usize {
        self.centroid_fallback.iter().filter(|&&f| f).count()
    }
}

/// λ-weighted mean of each manifold's points; manifolds whose total weight is
/// below `mass_floor` fall back to their centroid.
pub fn extract_anchors(
    sol: &QpSolution,
    manifolds: &[ClassManifold],
    mass_floor: f64,
) -> AnchorSet {
    let p = manifolds.len();
    let n = manifolds.first().map_or(0, |m| m.dim());
    let mut anchors = DMatrix::zeros(p, n);
    let mut mass = Vec::with_capacity(p);
    let mut fallback = Vec::with_capacity(p);
    for (mu, m) in manifolds.iter().enumerate() {
        let lam = &sol.lambda[mu];
        let total = lam.sum();
        mass.push(total);
        if total >= mass_floor && total > 0.0 {
            let weighted = m.points.tr_mul(lam) / total;
            anchors.row_mut(mu).copy_from(&weighted.transpose());
            fallback.push(false);
        } else {
            anchors.row_mut(mu).copy_from(&m.points.row_mean());
            fallback.push(true);
        }
    }
    AnchorSet {
        anchors,
        mass,
        centroid_fallback: fallback,
    }
}

/// `vᵀ M† v` for symmetric positive semidefinite `M`, dropping singular values
/// below `PINV_RCOND · max(σ_max(M), reference)`.
fn psd_pinv_quadratic(m: &DMatrix<f64>, v: &DVector<f64>, reference: f64) -> f64 {
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let smax = svd.singular_values.max();
    let cutoff = PINV_RCOND * smax.max(reference);
    if smax <= 0.0 {
        return 0.0;
    }
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cutoff)
        .map(|(k, &s)| {
            let c = u.column(k).dot(v);
            c * c / s
        })
        .sum()
}

fn signed_rows(s: &DMatrix<f64>, y: &Dichotomy) -> DMatrix<f64> {
    let mut out = s.clone();
    for (mu, mut row) in out.row_iter_mut().enumerate() {
        row *= y.sign(mu);
    }
    out
}

fn largest_singular(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// The three projection quantities of one `(y, t)` draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitySample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `a = (S_y t)ᵀ (S_y S_yᵀ)† (S_y t)`, the squared norm of `t` projected on the anchors' span.
pub fn projection_a(anchors: &DMatrix<f64>, y: &Dichotomy, t: &DVector<f64>) -> f64 {
    let sy = signed_rows(anchors, y);
    let gram = &sy * sy.transpose();
    psd_pinv_quadratic(&gram, &(&sy * t), 0.0)
}

/// `(a, b, c)` for one draw given the anchor centers `S_0`.
///
/// Cutoffs for `b` and `c` are taken relative to the scale of the full anchor
/// Gram matrix, so an axis part that is zero up to rounding (point manifolds)
/// contributes nothing instead of an arbitrary noise direction.
pub fn capacity_sample(
    anchors: &DMatrix<f64>,
    centers: &DMatrix<f64>,
    y: &Dichotomy,
    t: &DVector<f64>,
) -> CapacitySample {
    let sy = signed_rows(anchors, y);
    let gram = &sy * sy.transpose();
    let reference = largest_singular(&gram);
    let a = psd_pinv_quadratic(&gram, &(&sy * t), 0.0);

    let s0 = signed_rows(centers, y);
    let s1 = &sy - &s0;
    let s1t = &s1 * t;
    let g1 = &s1 * s1.transpose();
    let b = psd_pinv_quadratic(&g1, &s1t, reference);
    let g01 = &s0 * s0.transpose() + &g1;
    let c = psd_pinv_quadratic(&g01, &s1t, reference);
    CapacitySample { a, b, c }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    pub n_dirs: usize,
    pub seed: u64,
    pub qp_tol: f64,
    pub mass_floor: f64,
    pub store_anchors: bool,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig {
            n_dirs: 200,
            seed: 0,
            qp_tol: 1e-8,
            mass_floor: 1e-12,
            store_anchors: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub mean: f64,
    pub stderr: f64,
}

impl Moment {
    fn of(values: &[f64]) -> Moment {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Moment {
            mean,
            stderr: (var / n).sqrt(),
        }
    }
}

/// Monte-Carlo capacity moments and the effective geometry derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub num_manifolds: usize,
    pub a: Moment,
    pub b: Moment,
    pub c: Moment,
    /// `P / E[a]`; absent when `E[a] = 0`.
    pub alpha: Option<f64>,
    pub n_crit: f64,
    pub d_eff: f64,
    /// Absent unless `E[b] > E[c] > 0`.
    pub r_eff: Option<f64>,
    pub psi_eff: f64,
    pub n_dirs: usize,
    pub n_converged: usize,
    pub fallback_count: usize,
    pub seed: u64,
    pub qp_tol: f64,
}

impl CapacityEstimate {
    fn from_moments(
        p: usize,
        a: Moment,
        b: Moment,
        c: Moment,
        cfg: &CapacityConfig,
        n_converged: usize,
        fallback_count: usize,
    ) -> Self {
        let r_eff = (c.mean > 0.0 && b.mean > c.mean).then(|| (c.mean / (b.mean - c.mean)).sqrt());
        CapacityEstimate {
            num_manifolds: p,
            a,
            b,
            c,
            alpha: (a.mean > 0.0).then(|| p as f64 / a.mean),
            n_crit: a.mean,
            d_eff: b.mean / p as f64,
            r_eff,
            psi_eff: if a.mean > 0.0 { c.mean / a.mean } else { 0.0 },
            n_dirs: cfg.n_dirs,
            n_converged,
            fallback_count,
            seed: cfg.seed,
            qp_tol: cfg.qp_tol,
        }
    }

    /// `P·D_eff / (Ψ_eff·(1 + R_eff⁻²))`, the geometric form of `N_crit`.
    pub fn n_crit_from_geometry(&self) -> Option<f64> {
        let r = self.r_eff?;
        if self.psi_eff <= 0.0 {
            return None;
        }
        Some(self.num_manifolds as f64 * self.d_eff / (self.psi_eff * (1.0 + r.powi(-2))))
    }
}

/// Converged anchors from the first pass, kept for alignment measures.
#[derive(Debug, Clone)]
pub struct AnchorTrace {
    pub centers: DMatrix<f64>,
    pub samples: Vec<AnchorSet>,
}

#[derive(Debug, Clone)]
pub struct CapacityRun {
    pub estimate: CapacityEstimate,
    pub samples: Vec<CapacitySample>,
    pub anchors: Option<AnchorTrace>,
}

impl CapacityRun {
    pub fn alignment(&self) -> Result<AlignmentMatrix> {
        let trace = self
            .anchors
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("anchors were not stored".into()))?;
        Ok(alignment_measures(trace))
    }
}

/// Direction `t` and dichotomy index for draw `k`; a pure function of `(seed, k)`.
pub fn draw(seed: u64, k: usize, n: usize, n_dichotomies: usize) -> (usize, DVector<f64>) {
    let mut rng = stream_rng(seed, Stream::Direction, k as u64);
    let y = rng.gen_range(0..n_dichotomies);
    let t = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    (y, t)
}

/// Two-pass Monte-Carlo estimate over `cfg.n_dirs` draws.
///
/// Pass one solves the inner QP for every draw and keeps its anchors; their
/// mean over converged draws is the anchor center `S_0`. Pass two revisits the
/// same draws and evaluates `(a, b, c)` against that center. Per-draw work is
/// parallel; every reduction runs in draw order, so results do not depend on
/// the thread count.
pub fn estimate_capacity(
    manifolds: &[ClassManifold],
    dichotomies: &[Dichotomy],
    cfg: &CapacityConfig,
) -> Result<CapacityRun> {
    if cfg.n_dirs < 2 {
        return Err(Error::InvalidArgument("n_dirs must be at least 2".into()));
    }
    if dichotomies.is_empty() {
        return Err(Error::InvalidArgument("no dichotomies".into()));
    }
    let set = PointSet::new(manifolds)?;
    let p = set.num_manifolds();
    let n = set.dim();
    if dichotomies.iter().any(|y| y.len() != p) {
        return Err(Error::DimensionMismatch(
            "dichotomy length differs from manifold count".into(),
        ));
    }

    let first_pass: Vec<Option<(usize, DVector<f64>, AnchorSet)>> = (0..cfg.n_dirs)
        .into_par_iter()
        .map(|k| {
            let (yi, t) = draw(cfg.seed, k, n, dichotomies.len());
            let sol = set.solve(&dichotomies[yi], &t, cfg.qp_tol)?;
            Ok(sol
                .converged
                .then(|| (yi, t, extract_anchors(&sol, manifolds, cfg.mass_floor))))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<(usize, DVector<f64>, AnchorSet)> = first_pass.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::NotConverged {
            converged: kept.len(),
            total: cfg.n_dirs,
        });
    }

    let mut centers = DMatrix::zeros(p, n);
    for (_, _, a) in &kept {
        centers += &a.anchors;
    }
    centers /= kept.len() as f64;

    let samples: Vec<CapacitySample> = kept
        .par_iter()
        .map(|(yi, t, a)| capacity_sample(&a.anchors, &centers, &dichotomies[*yi], t))
        .collect();

    let col = |f: fn(&CapacitySample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    let fallback_count = kept.iter().map(|(_, _, a)| a.fallback_count()).sum();
    let estimate = CapacityEstimate::from_moments(
        p,
        Moment::of(&col(|s| s.a)),
        Moment::of(&col(|s| s.b)),
        Moment::of(&col(|s| s.c)),
        cfg,
        kept.len(),
        fallback_count,
    );
    let anchors = cfg.store_anchors.then(|| AnchorTrace {
        centers,
        samples: kept.into_iter().map(|(_, _, a)| a).collect(),
    });
    Ok(CapacityRun {
        estimate,
        samples,
        anchors,
    })
}

/// Center, axis and center-axis alignment between manifold pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub rho_center: Vec<Vec<f64>>,
    pub rho_axis: Vec<Vec<f64>>,
    pub psi_ca: Vec<Vec<f64>>,
}

/// `ρᶜ_{μν} = |⟨s^μ_0, s^ν_0⟩|`, `ρᵃ_{μν} = E|⟨s^μ_1, s^ν_1⟩|`,
/// `ψ_{μν} = E|⟨s^μ_0, s^ν_1⟩|`, unnormalized.
pub fn alignment_measures(trace: &AnchorTrace) -> AlignmentMatrix {
    let s0 = &trace.centers;
    let p = s0.nrows();
    let center_gram = s0 * s0.transpose();
    let mut rho_axis = DMatrix::zeros(p, p);
    let mut psi = DMatrix::zeros(p, p);
    for sample in &trace.samples {
        let s1 = &sample.anchors - s0;
        rho_axis += (&s1 * s1.transpose()).abs();
        psi += (s0 * s1.transpose()).abs();
    }
    let count = trace.samples.len().max(1) as f64;
    let to_rows = |m: DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    AlignmentMatrix {
        rho_center: to_rows(center_gram.abs()),
        rho_axis: to_rows(rho_axis / count),
        psi_ca: to_rows(psi / count),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifold(id: usize, rows: &[&[f64]]) -> ClassManifold {
        let n = rows[0].len();
        ClassManifold::new(
            id,
            DMatrix::from_row_iterator(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied())),
        )
    }

    fn sol_with(lambda: Vec<Vec<f64>>) -> QpSolution {
        QpSolution {
            lambda: lambda.into_iter().map(DVector::from_vec).collect(),
            value: 1.0,
            sign: 1,
            converged: true,
            kkt_residual: 0.0,
        }
    }

    #[test]
    fn anchor_on_single_point() {
        let m = vec![manifold(0, &[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 0.0]])];
        let a = extract_anchors(&sol_with(vec![vec![0.0, 0.7, 0.0]]), &m, 1e-12);
        assert!((a.anchors[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((a.anchors[(0, 1)] - 4.0).abs() < 1e-12);
        assert!(!a.centroid_fallback[0]);
    }

    #[test]
    fn uniform_weights_give_centroid() {
        let m = vec![manifold(0, &[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 0.0]])];
        let a = extract_anchors(&sol_with(vec![vec![0.2, 0.2, 0.2]]), &m, 1e-12);
        assert!((a.anchors[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((a.anchors[(0, 1)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_falls_back() {
        let m = vec![
            manifold(0, &[&[1.0, 0.0]]),
            manifold(1, &[&[0.0, 1.0], &[0.0, 3.0]]),
        ];
        let a = extract_anchors(&sol_with(vec![vec![1.0], vec![0.0, 0.0]]), &m, 1e-12);
        assert!(a.centroid_fallback[1]);
        assert_eq!(a.anchors[(1, 1)], 2.0);
        assert_eq!(a.fallback_count(), 1);
    }

    #[test]
    fn single_row_equal_to_t_projects_everything() {
        let t = DVector::from_vec(vec![0.3, -2.0, 1.1]);
        let s = DMatrix::from_row_slice(1, 3, t.as_slice());
        let y = Dichotomy::unchecked(vec![1]);
        assert!((projection_a(&s, &y, &t) - t.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn point_anchors_have_no_axis_part() {
        let s = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let t = DVector::from_vec(vec![0.5, 1.5, -2.0]);
        let cs = capacity_sample(&s, &s, &Dichotomy::pair(), &t);
        assert!((cs.a - 2.5).abs() < 1e-12);
        assert_eq!((cs.b, cs.c), (0.0, 0.0));
    }

    #[test]
    fn moments_of_constant_series() {
        let m = Moment::of(&[2.0, 2.0, 2.0]);
        assert_eq!((m.mean, m.stderr), (2.0, 0.0));
    }
}
