use std::collections::BTreeMap;

use geodiag::featureio::ClassManifold;
use geodiag::gluecap::nnls::{kkt_violation, nnls_gram};
use geodiag::gluecap::{estimate_capacity, solve_inner_qp, CapacityConfig, Dichotomy};
use geodiag::markers::{mean_pairwise_angle, participation_ratio, sample_scores, MarkerValue};
use geodiag::preprocess::{center_global, covariance, gaussianize, WhitenConfig};
use geodiag::prognostics::{pearson, predict_with, stars, Direction, Outcome};
use geodiag::projoracle::{check_separable, SeparabilityQuery};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// Orthogonal matrix from the QR factor of a random square matrix.
fn rotation(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n)
        .prop_filter("well conditioned", |m| {
            m.clone().svd(false, false).singular_values.min() > 1e-2
        })
        .prop_map(|m| m.qr().q())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn participation_ratio_ignores_rotation_and_scale(
        pts in matrix(12, 4),
        rot in rotation(4),
        scale in 0.01f64..100.0,
    ) {
        let base = participation_ratio(&[ClassManifold::new(0, pts.clone())]).unwrap();
        let moved = participation_ratio(&[ClassManifold::new(0, &pts * &rot * scale)]).unwrap();
        prop_assert!((base.value - moved.value).abs() <= 1e-8 * base.value.max(1.0));
        prop_assert!(base.value >= 0.0 && base.value <= 4.0 + 1e-9);
    }

    #[test]
    fn mean_angle_stays_in_range(pts in matrix(9, 3), seed in any::<u64>()) {
        if let Ok(a) = mean_pairwise_angle(&pts, seed) {
            prop_assert!(a.value >= 0.0 && a.value <= std::f64::consts::PI);
        }
    }

    #[test]
    fn logit_shift_identities(
        logits in prop::collection::vec(-20.0f64..20.0, 2..12),
        c in -50.0f64..50.0,
        temp in 0.1f64..5.0,
    ) {
        let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
        let a = sample_scores(&logits, temp);
        let b = sample_scores(&shifted, temp);
        prop_assert!((a.confidence - b.confidence).abs() < 1e-9);
        prop_assert!((a.entropy - b.entropy).abs() < 1e-9);
        prop_assert!((b.energy - (a.energy - c)).abs() < 1e-9);
        prop_assert!(a.entropy >= -1e-12 && a.entropy <= (logits.len() as f64).ln() + 1e-12);
        prop_assert!(a.confidence >= 1.0 / logits.len() as f64 - 1e-12);
    }

    #[test]
    fn pearson_of_a_line_is_its_sign(
        x in prop::collection::vec(-100.0f64..100.0, 3..30),
        slope in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        icpt in -5.0f64..5.0,
    ) {
        let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - x.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-3);
        let y: Vec<f64> = x.iter().map(|v| slope * v + icpt).collect();
        let c = pearson(&x, &y).unwrap();
        prop_assert!((c.r - slope.signum()).abs() < 1e-9);
        prop_assert!(c.p_value < 1e-6 || x.len() < 5);
    }

    #[test]
    fn stars_never_increase_with_p(p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(stars(lo) >= stars(hi));
    }

    #[test]
    fn swapping_models_mirrors_the_verdict(
        va in prop::collection::vec((-5.0f64..5.0, 0.0f64..1.0), 2),
        vb in prop::collection::vec((-5.0f64..5.0, 0.0f64..1.0), 2),
        lower in any::<bool>(),
    ) {
        let names = ["d_eff", "psi_eff"];
        let to_map = |v: &[(f64, f64)]| -> BTreeMap<String, MarkerValue> {
            names.iter().zip(v).map(|(n, &(value, se))| (n.to_string(), MarkerValue { value, stderr: Some(se) })).collect()
        };
        let dir = if lower { Direction::LowerBetter } else { Direction::HigherBetter };
        let rules: Vec<(String, Direction)> = names.iter().map(|n| (n.to_string(), dir)).collect();
        let ab = predict_with(&to_map(&va), &to_map(&vb), &rules).unwrap().outcome;
        let ba = predict_with(&to_map(&vb), &to_map(&va), &rules).unwrap().outcome;
        let mirrored = match ab {
            Outcome::A => Outcome::B,
            Outcome::B => Outcome::A,
            Outcome::NoVerdict => Outcome::NoVerdict,
        };
        prop_assert_eq!(ba, mirrored);
    }

    #[test]
    fn separability_ignores_row_scale_and_rotation(
        pts in matrix(7, 3),
        signs in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 7),
        scales in prop::collection::vec(0.01f64..100.0, 7),
        rot in rotation(3),
    ) {
        let base = check_separable(&SeparabilityQuery::new(pts.clone(), signs.clone())).unwrap();
        let mut scaled = pts.clone();
        for (i, s) in scales.iter().enumerate() {
            scaled.row_mut(i).scale_mut(*s);
        }
        let a = check_separable(&SeparabilityQuery::new(scaled, signs.clone())).unwrap();
        let b = check_separable(&SeparabilityQuery::new(&pts * rot, signs.clone())).unwrap();
        prop_assert_eq!(a, base);
        prop_assert_eq!(b, base);
    }

    #[test]
    fn separability_survives_dropping_points(
        pts in matrix(8, 3),
        signs in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 8),
    ) {
        let full = check_separable(&SeparabilityQuery::new(pts.clone(), signs.clone())).unwrap();
        if full {
            let sub = pts.rows(0, 5).into_owned();
            prop_assert!(check_separable(&SeparabilityQuery::new(sub, signs[..5].to_vec())).unwrap());
        }
    }

    #[test]
    fn nnls_satisfies_kkt(a in matrix(8, 5), b in prop::collection::vec(-3.0f64..3.0, 8)) {
        let b = DVector::from_vec(b);
        let gram = a.transpose() * &a;
        let h = a.transpose() * &b;
        let res = nnls_gram(&gram, &h, 1e-10, 200);
        prop_assume!(res.converged);
        prop_assert!(res.x.iter().all(|&v| v >= 0.0));
        let scale = gram.amax().max(h.amax()).max(1.0);
        prop_assert!(kkt_violation(&res.x, &res.dual) <= 1e-8 * scale);
        // optimality: no feasible coordinate step lowers the objective
        let f = |x: &DVector<f64>| (&a * x - &b).norm_squared();
        let f0 = f(&res.x);
        for j in 0..5 {
            let mut up = res.x.clone();
            up[j] += 1e-4;
            prop_assert!(f(&up) >= f0 - 1e-9);
        }
    }

    #[test]
    fn qp_value_dominates_single_points(pts0 in matrix(3, 4), pts1 in matrix(2, 4), t in prop::collection::vec(-2.0f64..2.0, 4)) {
        let t = DVector::from_vec(t);
        let m = vec![ClassManifold::new(0, pts0.clone()), ClassManifold::new(1, pts1.clone())];
        let sol = solve_inner_qp(&m, &Dichotomy::pair(), &t, 1e-8).unwrap();
        for row in pts0.row_iter().chain(pts1.row_iter()) {
            let z = row.transpose();
            if z.norm() > 1e-9 {
                prop_assert!(sol.value >= z.dot(&t).powi(2) / z.norm_squared() - 1e-9);
            }
        }
        prop_assert!(sol.value <= t.norm_squared() + 1e-9);
    }

    #[test]
    fn geometric_identity_holds(pts0 in matrix(6, 5), pts1 in matrix(6, 5), seed in any::<u64>()) {
        let m = vec![ClassManifold::new(0, pts0), ClassManifold::new(1, pts1)];
        let cfg = CapacityConfig { n_dirs: 40, seed, ..Default::default() };
        if let Ok(run) = estimate_capacity(&m, &[Dichotomy::pair()], &cfg) {
            let est = run.estimate;
            if let Some(geo) = est.n_crit_from_geometry() {
                prop_assert!((geo - est.n_crit).abs() <= 1e-9 * est.n_crit);
            }
        }
    }

    #[test]
    fn whitening_gives_identity_covariance(pts in matrix(40, 3), rot in rotation(3)) {
        let cov = covariance(&pts);
        prop_assume!(cov.clone().symmetric_eigen().eigenvalues.min() > 1e-2);
        let cfg = WhitenConfig { ridge_fraction: 0.0, ..Default::default() };
        let w = gaussianize(&pts, &cfg).unwrap();
        prop_assert!((covariance(&w) - DMatrix::identity(3, 3)).amax() < 1e-8);
        let w2 = gaussianize(&(&pts * rot), &cfg).unwrap();
        // both whitened clouds share their Gram matrix, so they differ by an orthogonal map
        prop_assert!((&w * w.transpose() - &w2 * w2.transpose()).amax() < 1e-7);
    }

    #[test]
    fn centering_zeroes_column_means(pts in matrix(10, 4)) {
        let c = center_global(&pts);
        let scale = pts.amax().max(1.0);
        prop_assert!(c.row_mean().amax() <= 1e-10 * scale);
    }
}
