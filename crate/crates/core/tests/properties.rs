use paracont::control::{feedback_with, outer_loop_chain, TangentScaling};
use paracont::log::TrajectoryLog;
use paracont::smallmat::{self, Mat, Vector, DEFAULT_TOL};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0..1.0f64, rows * cols).prop_map(move |d| Mat::from_row_slice(rows, cols, &d))
}

fn wide() -> impl Strategy<Value = Mat> {
    (1usize..=4).prop_flat_map(|m| matrix(m, m + 1))
}

fn any_shape() -> impl Strategy<Value = Mat> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| matrix(r, c))
}

fn well_conditioned(a: &Mat) -> bool {
    let s = smallmat::singular_values(a).unwrap();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    min > 1e-3 * max
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tangent_constraints(a in wide()) {
        prop_assume!(well_conditioned(&a));
        let t = smallmat::tangent_vector(&a).unwrap();
        prop_assert!((&a * &t).amax() <= 1e-12 * (1.0 + a.amax()));
        prop_assert!((t.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(smallmat::det(&smallmat::augment_with_row(&a, &t)).unwrap() > 0.0);
    }

    #[test]
    fn penrose_conditions(a in any_shape()) {
        let p = smallmat::pinv(&a, DEFAULT_TOL).unwrap();
        let tol = 1e-9 * (1.0 + a.amax() * p.amax()).powi(2);
        prop_assert!((&a * &p * &a - &a).amax() <= tol);
        prop_assert!((&p * &a * &p - &p).amax() <= tol * (1.0 + p.amax()));
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap - ap.transpose()).amax() <= tol);
        prop_assert!((&pa - pa.transpose()).amax() <= tol);
    }

    #[test]
    fn weighted_pinv_is_right_inverse(
        a in wide(),
        w in prop::collection::vec(0.05..5.0f64, 5),
    ) {
        prop_assume!(well_conditioned(&a));
        let q = Vector::from_iterator(a.ncols(), w.into_iter().take(a.ncols()));
        let wp = smallmat::weighted_pinv(&a, &q, DEFAULT_TOL).unwrap();
        let eye = Mat::identity(a.nrows(), a.nrows());
        prop_assert!((&a * wp - eye).amax() <= 1e-9);
    }

    /// The predictor lies in the null space, so the control law hits its
    /// right-hand side exactly whatever the scaling.
    #[test]
    fn feedback_meets_constraint(
        a in wide(),
        rhs in prop::collection::vec(-3.0..3.0f64, 4),
        alpha in 0.1..20.0f64,
        gamma in 0.05..2.0f64,
        metric in any::<bool>(),
    ) {
        prop_assume!(well_conditioned(&a));
        let rhs = Vector::from_iterator(a.nrows(), rhs.into_iter().take(a.nrows()));
        let scaling = if metric { TangentScaling::Metric } else { TangentScaling::Uniform };
        let out = feedback_with(&a, &rhs, alpha, gamma, scaling, DEFAULT_TOL).unwrap();
        prop_assert!((&a * out - &rhs).amax() <= 1e-9 * (1.0 + alpha));
    }

    /// Along a smooth one-parameter family the oriented tangent moves
    /// continuously: no sign flips between close parameter values.
    /// The null vector turns at up to |A'| / sigma_min per unit s, so the
    /// step shrinks with sigma_min to keep each turn well below 90 degrees.
    #[test]
    fn tangent_continuity(a0 in matrix(2, 3), a1 in matrix(2, 3)) {
        let path = |s: f64| &a0 + &a1 * s;
        let speed = a1.norm().max(1e-12);
        let mut prev: Option<Vector> = None;
        let mut s = 0.0;
        while s <= 1.0 {
            let a = path(s);
            let sv = smallmat::singular_values(&a).unwrap();
            let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
            let h = (0.1 * sigma_min / speed).clamp(1e-5, 5e-3);
            if well_conditioned(&a) {
                let t = smallmat::tangent_vector(&a).unwrap();
                if let Some(p) = &prev {
                    prop_assert!(p.dot(&t) > 0.0, "flip at s = {}", s);
                }
                prev = Some(t);
            } else {
                prev = None;
            }
            s += h;
        }
    }

    #[test]
    fn csv_round_trip_is_exact(
        rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3), 1..20),
    ) {
        let mut log = TrajectoryLog::new(["t", "x1", "x2", "lambda"]).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let mut row = vec![i as f64 * 0.1];
            row.extend(r);
            log.push(row).unwrap();
        }
        let text = log.to_csv_string().unwrap();
        let back = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back.columns(), log.columns());
        for (a, b) in back.rows().iter().zip(log.rows()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn first_order_outer_loop_is_proportional(h in -10.0..10.0f64, gain in 0.1..100.0f64) {
        prop_assert_eq!(outer_loop_chain(&[h], gain), -gain * h);
    }
}
