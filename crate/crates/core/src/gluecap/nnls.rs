//! Lawson-Hanson active-set non-negative least squares on a precomputed Gram
//! matrix.
//!
//! Solves `min ‖A λ - b‖²` subject to `λ ≥ 0` given `G = AᵀA` and `h = Aᵀb`.
//! Working in the Gram form makes each iteration independent of the ambient
//! dimension, which is what matters when one point set is solved against many
//! right-hand sides.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NnlsResult {
    pub x: DVector<f64>,
    /// `h - G x`, the negative gradient of the half squared residual.
    pub dual: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn solve_passive(gram: &DMatrix<f64>, h: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let p = passive.len();
    let sub = DMatrix::from_fn(p, p, |i, j| gram[(passive[i], passive[j])]);
    let rhs = DVector::from_fn(p, |i, _| h[passive[i]]);
    if let Some(chol) = sub.clone().cholesky() {
        return chol.solve(&rhs);
    }
    // Nearly dependent columns: minimum-norm solution.
    sub.svd(true, true)
        .solve(&rhs, 1e-13)
        .unwrap_or_else(|_| DVector::zeros(p))
}

/// Runs the active-set iteration until every inactive coordinate has
/// `dual ≤ grad_tol` or `max_iter` passes are exhausted.
pub fn nnls_gram(
    gram: &DMatrix<f64>,
    h: &DVector<f64>,
    grad_tol: f64,
    max_iter: usize,
) -> NnlsResult {
    let k = h.len();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let mut blocked = vec![false; k];
    let mut iterations = 0;

    let mut dual = h - gram * &x;
    loop {
        let candidate = (0..k)
            .filter(|&j| !passive[j] && !blocked[j] && dual[j] > grad_tol)
            .max_by(|&a, &b| dual[a].total_cmp(&dual[b]));
        let Some(enter) = candidate else {
            break;
        };
        if iterations >= max_iter {
            return NnlsResult {
                x,
                dual,
                iterations,
                converged: false,
            };
        }
        iterations += 1;
        passive[enter] = true;

        let mut first_inner = true;
        loop {
            let set: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let z = solve_passive(gram, h, &set);
            if z.iter().all(|&v| v > 0.0) {
                for (i, &j) in set.iter().enumerate() {
                    x[j] = z[i];
                }
                blocked.iter_mut().for_each(|b| *b = false);
                break;
            }
            let entering_pos = set.iter().position(|&j| j == enter);
            if first_inner && entering_pos.is_some_and(|i| z[i] <= 0.0) {
                // The entering column cannot take positive weight: its
                // gradient was numerical noise. Leave x alone.
                passive[enter] = false;
                blocked[enter] = true;
                break;
            }
            first_inner = false;

            // Step towards z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            for (i, &j) in set.iter().enumerate() {
                if z[i] <= 0.0 {
                    let denom = x[j] - z[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            let floor = f64::EPSILON * x.amax();
            for (i, &j) in set.iter().enumerate() {
                x[j] += alpha * (z[i] - x[j]);
                if x[j] <= floor {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            iterations += 1;
            if iterations >= max_iter {
                dual = h - gram * &x;
                return NnlsResult {
                    x,
                    dual,
                    iterations,
                    converged: false,
                };
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        dual = h - gram * &x;
    }
    NnlsResult {
        x,
        dual,
        iterations,
        converged: true,
    }
}

/// Largest KKT violation of an NNLS point, in the units of `dual`.
pub fn kkt_violation(x: &DVector<f64>, dual: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dual.iter())
        .map(|(&xi, &wi)| if xi > 0.0 { wi.abs() } else { wi.max(0.0) })
        .fold(0.0, f64::max)
}
