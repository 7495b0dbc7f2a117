use jmsglmb::assignment::{k_best, solve_optimal, CostMatrix};
use jmsglmb::gaussian::{kalman_predict, kalman_update, ukf_predict, GaussianComponent, Matrix, UnscentedParams, Vector};
use jmsglmb::jms::{ct_matrix, ct_unknown_rate, cv_matrix, wrap_angle, SwitchingMatrix};
use jmsglmb::metrics::{ospa, OspaParams};
use proptest::prelude::*;

fn spd(entries: &[f64], n: usize) -> Matrix {
    let a = Matrix::from_row_slice(n, n, &entries[..n * n]);
    &a * a.transpose() + Matrix::identity(n, n) * 0.5
}

fn min_eigenvalue(m: &Matrix) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn is_symmetric(m: &Matrix) -> bool {
    (m - m.transpose()).amax() <= 1e-9 * m.amax().max(1.0)
}

fn points(raw: &[(f64, f64)]) -> Vec<Vector> {
    raw.iter().map(|&(x, y)| Vector::from_vec(vec![x, y])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kalman_update_shrinks_covariance(
        p in prop::collection::vec(-3.0..3.0f64, 16),
        r in prop::collection::vec(-2.0..2.0f64, 4),
        mean in prop::collection::vec(-10.0..10.0f64, 4),
        z in prop::collection::vec(-10.0..10.0f64, 2),
    ) {
        let comp = GaussianComponent::new(0.0, Vector::from_vec(mean), spd(&p, 4));
        let mut h = Matrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 2)] = 1.0;
        let (post, ll) = kalman_update(&comp, &Vector::from_vec(z), &h, &spd(&r, 2)).unwrap();
        prop_assert!(ll.is_finite());
        prop_assert!(is_symmetric(&post.cov));
        prop_assert!(min_eigenvalue(&post.cov) > 0.0);
        // prior minus posterior is positive semidefinite
        prop_assert!(min_eigenvalue(&(&comp.cov - &post.cov)) > -1e-9 * comp.cov.amax());
    }

    #[test]
    fn predictions_stay_positive_definite(
        p in prop::collection::vec(-3.0..3.0f64, 25),
        q in prop::collection::vec(-1.0..1.0f64, 25),
        omega in -0.2..0.2f64,
    ) {
        let mut mean = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0, omega]);
        mean[4] = omega;
        let comp = GaussianComponent::new(-1.5, mean, spd(&p, 5));
        let q = spd(&q, 5);
        let ut = ukf_predict(&comp, &|x: &Vector| ct_unknown_rate(x, 5.0), &q, &UnscentedParams::gaussian_optimal(5)).unwrap();
        prop_assert_eq!(ut.log_weight, -1.5);
        prop_assert!(is_symmetric(&ut.cov));
        prop_assert!(min_eigenvalue(&ut.cov) > 0.0);

        let lin = GaussianComponent::new(0.0, comp.mean.rows(0, 4).into_owned(), spd(&p, 4));
        let kf = kalman_predict(&lin, &ct_matrix(omega, 5.0), &spd(&q.as_slice()[..16], 4)).unwrap();
        prop_assert!(is_symmetric(&kf.cov));
        prop_assert!(min_eigenvalue(&kf.cov) > 0.0);
    }

    #[test]
    fn turn_matrix_preserves_speed(omega in -1.0..1.0f64, vx in -200.0..200.0f64, vy in -200.0..200.0f64) {
        let x = Vector::from_vec(vec![0.0, vx, 0.0, vy]);
        let y = ct_matrix(omega, 5.0) * &x;
        let speed = (vx * vx + vy * vy).sqrt();
        prop_assert!(((y[1] * y[1] + y[3] * y[3]).sqrt() - speed).abs() < 1e-9 * speed.max(1.0));
    }

    #[test]
    fn wrapped_angles_lie_in_range(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!(((a - w) / std::f64::consts::TAU - ((a - w) / std::f64::consts::TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn stochastic_rows_are_accepted(raw in prop::collection::vec(0.01..1.0f64, 9)) {
        let rows: Vec<Vec<f64>> = raw
            .chunks(3)
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect();
        let m = SwitchingMatrix::from_rows(&rows).unwrap();
        for from in 0..3 {
            let s: f64 = (0..3).map(|to| m.prob(to, from)).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        let mut bad = rows.clone();
        bad[1][0] += 0.1;
        prop_assert!(SwitchingMatrix::from_rows(&bad).is_err());
    }

    #[test]
    fn ranked_assignments_are_sorted_and_distinct(
        n in 1usize..4,
        extra in 0usize..3,
        raw in prop::collection::vec(prop::option::weighted(0.85, -5.0..5.0f64), 24),
        k in 1usize..20,
    ) {
        let m = n + extra;
        let c = CostMatrix::from_fn(n, m, |i, j| raw[i * 6 + j].unwrap_or(f64::INFINITY));
        match k_best(&c, k) {
            Ok(all) => {
                prop_assert!(all.len() <= k);
                prop_assert_eq!(&all[0], &solve_optimal(&c).unwrap());
                for w in all.windows(2) {
                    prop_assert!(w[0].cost <= w[1].cost);
                    prop_assert!(w[0].columns != w[1].columns);
                }
                for a in &all {
                    let mut cols = a.columns.clone();
                    cols.sort();
                    cols.dedup();
                    prop_assert_eq!(cols.len(), n);
                    prop_assert!(a.cost.is_finite());
                }
            }
            Err(_) => prop_assert!(solve_optimal(&c).is_err()),
        }
    }

    #[test]
    fn ospa_is_a_bounded_metric(
        a in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 0..5),
        b in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 0..5),
        c in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 0..5),
        cutoff in 1.0..100.0f64,
        order in 1.0..3.0f64,
    ) {
        let params = OspaParams::new(cutoff, order).unwrap();
        let (a, b, c) = (points(&a), points(&b), points(&c));
        let ab = ospa(&a, &b, &params).total;
        prop_assert!((ab - ospa(&b, &a, &params).total).abs() < 1e-9);
        prop_assert!(ospa(&a, &a, &params).total < 1e-9);
        prop_assert!(ab >= 0.0 && ab <= cutoff + 1e-9);
        let via = ospa(&a, &c, &params).total + ospa(&c, &b, &params).total;
        prop_assert!(ab <= via + 1e-9);
    }

    #[test]
    fn cv_matrix_composes(t1 in 0.1..10.0f64, t2 in 0.1..10.0f64) {
        let d = cv_matrix(t1) * cv_matrix(t2) - cv_matrix(t1 + t2);
        prop_assert!(d.amax() < 1e-12);
    }
}
