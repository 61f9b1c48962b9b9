//! The inner maximization of the capacity formula.
//!
//! For a dichotomy `y` and direction `t` we need
//! `max_{λ ≥ 0} (⟨t, x⟩ / ‖x‖)²` with `x = Σ y^μ λ^μ_i z^μ_i`, i.e. the largest
//! squared cosine between `±t` and the cone spanned by the signed points.
//! For a fixed sign `σ` the problem `min ‖x‖² s.t. σ⟨t, x⟩ = 1` is equivalent
//! to projecting `σt` onto that cone, which is a non-negative least-squares
//! problem. The projection `x*` satisfies `⟨σt, x*⟩ = ‖x*‖²`, so the branch
//! value is `‖x*‖²` and the QP weights are the NNLS weights divided by it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nnls::{kkt_violation, nnls_gram};
use crate::error::{Error, Result};
use crate::featureio::ClassManifold;

/// A ±1 labeling of the manifolds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dichotomy(Vec<i8>);

impl Dichotomy {
    pub fn new(labels: Vec<i8>) -> Result<Self> {
        if labels.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidArgument(
                "dichotomy entries must be ±1".into(),
            ));
        }
        if !labels.contains(&1) || !labels.contains(&-1) {
            return Err(Error::InvalidArgument(
                "dichotomy needs at least one +1 and one -1".into(),
            ));
        }
        Ok(Dichotomy(labels))
    }

    #[cfg(test)]
    pub(crate) fn unchecked(labels: Vec<i8>) -> Self {
        Dichotomy(labels)
    }

    pub fn labels(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sign(&self, mu: usize) -> f64 {
        f64::from(self.0[mu])
    }

    /// `(+1, -1)`, the only dichotomy needed for a pair up to global sign.
    pub fn pair() -> Self {
        Dichotomy(vec![1, -1])
    }

    pub fn one_vs_rest(p: usize) -> Vec<Self> {
        (0..p)
            .map(|k| Dichotomy((0..p).map(|mu| if mu == k { 1 } else { -1 }).collect()))
            .collect()
    }

    /// Every labeling with both signs present.
    pub fn all(p: usize) -> Vec<Self> {
        assert!(p < 32, "too many manifolds to enumerate dichotomies");
        (1..(1u32 << p) - 1)
            .map(|bits| {
                Dichotomy(
                    (0..p)
                        .map(|mu| if bits >> mu & 1 == 1 { 1 } else { -1 })
                        .collect(),
                )
            })
            .collect()
    }
}

/// Which dichotomies the capacity estimate averages over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomySet {
    /// `(+1, -1)` for pairs, one-vs-rest otherwise.
    #[default]
    Default,
    OneVsRest,
    All,
}

impl DichotomySet {
    pub fn build(self, p: usize) -> Result<Vec<Dichotomy>> {
        if p < 2 {
            return Err(Error::InvalidArgument("need at least two manifolds".into()));
        }
        Ok(match (self, p) {
            (DichotomySet::Default, 2) => vec![Dichotomy::pair()],
            (DichotomySet::Default | DichotomySet::OneVsRest, _) => Dichotomy::one_vs_rest(p),
            (DichotomySet::All, _) => Dichotomy::all(p),
        })
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Per-manifold weights, scaled so that `σ⟨t, x⟩ = 1`.
    pub lambda: Vec<DVector<f64>>,
    pub value: f64,
    /// `+1` or `-1`; `0` when neither branch is feasible.
    pub sign: i8,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Stacked points of a manifold collection with their Gram matrix, reused
/// across many directions.
#[derive(Debug, Clone)]
pub struct PointSet {
    points: DMatrix<f64>,
    gram: DMatrix<f64>,
    offsets: Vec<usize>,
    max_norm: f64,
}

impl PointSet {
    pub fn new(manifolds: &[ClassManifold]) -> Result<Self> {
        let first = manifolds
            .first()
            .ok_or_else(|| Error::InvalidArgument("no manifolds".into()))?;
        let n = first.dim();
        if manifolds
            .iter()
            .any(|m| m.dim() != n || m.num_points() == 0)
        {
            return Err(Error::DimensionMismatch(
                "manifolds must be nonempty and share one dimension".into(),
            ));
        }
        let mut offsets = vec![0];
        for m in manifolds {
            offsets.push(offsets.last().unwrap() + m.num_points());
        }
        let total = *offsets.last().unwrap();
        let mut points = DMatrix::zeros(total, n);
        for (mu, m) in manifolds.iter().enumerate() {
            points
                .rows_mut(offsets[mu], m.num_points())
                .copy_from(&m.points);
        }
        let gram = &points * points.transpose();
        let max_norm = points.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        Ok(PointSet {
            points,
            gram,
            offsets,
            max_norm,
        })
    }

    pub fn num_manifolds(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn manifold_rows(&self, mu: usize) -> std::ops::Range<usize> {
        self.offsets[mu]..self.offsets[mu + 1]
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// Solves both sign branches and keeps the larger value (ties go to `+1`).
    pub fn solve(&self, y: &Dichotomy, t: &DVector<f64>, tol: f64) -> Result<QpSolution> {
        let p = self.num_manifolds();
        if y.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "dichotomy of length {} for {p} manifolds",
                y.len()
            )));
        }
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "direction of length {} in dimension {}",
                t.len(),
                self.dim()
            )));
        }
        let k = self.total_points();
        let signs: Vec<f64> = (0..p)
            .flat_map(|mu| std::iter::repeat_n(y.sign(mu), self.offsets[mu + 1] - self.offsets[mu]))
            .collect();
        let gram = DMatrix::from_fn(k, k, |i, j| signs[i] * signs[j] * self.gram[(i, j)]);
        let proj = &self.points * t;
        let scale = (t.norm() * self.max_norm).max(f64::MIN_POSITIVE);
        let max_iter = 50 * k;

        let mut best: Option<(f64, i8, DVector<f64>, f64, bool)> = None;
        let mut all_converged = true;
        for sigma in [1i8, -1] {
            let h = DVector::from_fn(k, |i, _| f64::from(sigma) * signs[i] * proj[i]);
            let res = nnls_gram(&gram, &h, tol * scale * 1e-2, max_iter);
            let residual = kkt_violation(&res.x, &res.dual) / scale;
            all_converged &= res.converged;
            if res.x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let dir = h.dot(&res.x);
            if dir <= 0.0 {
                continue;
            }
            // value = ⟨σt,x⟩² / ‖x‖², evaluated on the reconstructed point
            let norm_sq = res.x.dot(&(&gram * &res.x));
            let value = dir * dir / norm_sq;
            let better = best.as_ref().is_none_or(|b| value > b.0);
            if better {
                let converged = res.converged && residual <= tol;
                best = Some((value, sigma, res.x / dir, residual, converged));
            }
        }

        Ok(match best {
            Some((value, sign, lam, kkt_residual, converged)) => QpSolution {
                lambda: (0..p)
                    .map(|mu| {
                        lam.rows(self.offsets[mu], self.offsets[mu + 1] - self.offsets[mu])
                            .into_owned()
                    })
                    .collect(),
                value,
                sign,
                converged,
                kkt_residual,
            },
            None => QpSolution {
                lambda: (0..p)
                    .map(|mu| DVector::zeros(self.offsets[mu + 1] - self.offsets[mu]))
                    .collect(),
                value: 0.0,
                sign: 0,
                converged: all_converged,
                kkt_residual: 0.0,
            },
        })
    }
}

/// One-shot solve of the inner problem for `(y, t)`.
pub fn solve_inner_qp(
    manifolds: &[ClassManifold],
    y: &Dichotomy,
    t: &DVector<f64>,
    tol: f64,
) -> Result<QpSolution> {
    PointSet::new(manifolds)?.solve(y, t, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows[0].len();
        DMatrix::from_row_iterator(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied()))
    }

    #[test]
    fn two_orthogonal_points() {
        let m = vec![
            ClassManifold::new(0, points(&[&[1.0, 0.0]])),
            ClassManifold::new(1, points(&[&[0.0, 1.0]])),
        ];
        let t = DVector::from_vec(vec![1.0, -1.0]);
        let sol = solve_inner_qp(&m, &Dichotomy::pair(), &t, 1e-8).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
        assert_eq!(sol.sign, 1);
        assert!(sol.converged);
        // σ⟨t, x⟩ = 1 normalization: x = (λ1, -λ2), ⟨t,x⟩ = λ1 + λ2 = 1
        assert!((sol.lambda[0][0] - 0.5).abs() < 1e-12);
        assert!((sol.lambda[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_direction_is_infeasible() {
        let m = vec![
            ClassManifold::new(0, points(&[&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]])),
            ClassManifold::new(1, points(&[&[0.0, 1.0, 0.0]])),
        ];
        let t = DVector::from_vec(vec![0.0, 0.0, 3.0]);
        let sol = solve_inner_qp(&m, &Dichotomy::pair(), &t, 1e-8).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.sign, 0);
    }

    #[test]
    fn value_is_quadratic_in_t() {
        let m = vec![
            ClassManifold::new(0, points(&[&[1.0, 0.2, 0.0], &[0.8, -0.3, 0.1]])),
            ClassManifold::new(1, points(&[&[0.1, 1.0, 0.3], &[-0.2, 0.9, 0.0]])),
        ];
        let t = DVector::from_vec(vec![0.3, -1.2, 0.5]);
        let a = solve_inner_qp(&m, &Dichotomy::pair(), &t, 1e-8).unwrap();
        let b = solve_inner_qp(&m, &Dichotomy::pair(), &(&t * 3.0), 1e-8).unwrap();
        assert!((b.value - 9.0 * a.value).abs() < 1e-10);
        for mu in 0..2 {
            let da = &a.lambda[mu] / a.lambda.iter().map(|l| l.sum()).sum::<f64>();
            let db = &b.lambda[mu] / b.lambda.iter().map(|l| l.sum()).sum::<f64>();
            assert!((da - db).norm() < 1e-10);
        }
    }

    #[test]
    fn dichotomy_validation() {
        assert!(Dichotomy::new(vec![1, 1]).is_err());
        assert!(Dichotomy::new(vec![1, 0]).is_err());
        assert_eq!(Dichotomy::all(3).len(), 6);
        assert_eq!(
            DichotomySet::Default.build(2).unwrap(),
            vec![Dichotomy::pair()]
        );
        assert_eq!(DichotomySet::Default.build(4).unwrap().len(), 4);
    }
}
